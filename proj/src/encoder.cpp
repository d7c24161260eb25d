#include "diva/encoder.hpp"

#include "diva/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace diva {

ag::Matrix Dropout::mask(ag::Index rows, ag::Index cols) const {
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  ag::Matrix m(rows, cols);
  for (ag::Index j = 0; j < cols; ++j) {
    for (ag::Index i = 0; i < rows; ++i) m(i, j) = keep(*rng) ? scale : 0.0;
  }
  return m;
}

ag::Var apply_dropout(const ag::Var& x, const Dropout* dropout) {
  if (dropout == nullptr || !dropout->active()) return x;
  return ag::mul_const(x, dropout->mask(x.rows(), x.cols()));
}

void TokenBatch::add(std::span<const int> tokens, int max_len, int vocab_size) {
  std::size_t kept = 0;
  for (int id : tokens) {
    if (id < 0 || id >= vocab_size) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab_size));
    }
    if (id == Vocabulary::kPad) continue;
    if (kept == static_cast<std::size_t>(max_len)) break;
    ids.push_back(id);
    ++kept;
  }
  if (kept == 0) throw DataError("document has no non-PAD tokens");
  offsets.push_back(static_cast<ag::Index>(ids.size()));
}

std::size_t MaskedTokens::masked_count() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != kIgnore; }));
}

MaskedTokens mask_tokens(std::span<const int> tokens, double rate, Rng& rng) {
  if (tokens.empty()) throw DataError("mask_tokens: empty sequence");
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("mask_tokens: rate must lie in (0, 1)");
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] != Vocabulary::kPad) candidates.push_back(i);
  }
  if (candidates.empty()) throw DataError("mask_tokens: sequence has only PAD tokens");
  const auto n = candidates.size();
  // Tiny slack keeps products such as 0.15 * 100 from flooring one below.
  std::size_t count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
  count = std::clamp<std::size_t>(count, 1, n);
  // Partial Fisher-Yates: the first `count` entries are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  MaskedTokens out;
  out.tokens.assign(tokens.begin(), tokens.end());
  out.labels.assign(tokens.size(), MaskedTokens::kIgnore);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t pos = candidates[i];
    out.labels[pos] = tokens[pos];
    out.tokens[pos] = Vocabulary::kMask;
  }
  return out;
}

Encoder::Encoder(const EncoderConfig& config, Rng& init_rng) : config_(config) {
  if (config.vocab_size <= 3 || config.dim <= 0 || config.depth < 0 || config.max_len <= 0) {
    throw ConfigError("encoder: invalid configuration");
  }
  const ag::Index v = config.vocab_size;
  const ag::Index d = config.dim;
  std::normal_distribution<double> emb(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  ag::Matrix table(v, d);
  for (ag::Index j = 0; j < d; ++j) {
    for (ag::Index i = 0; i < v; ++i) table(i, j) = emb(init_rng);
  }
  table.row(Vocabulary::kPad).setZero();
  embedding = make_parameter("encoder.embedding", std::move(table));
  for (int k = 0; k < config.depth; ++k) {
    const std::string p = "encoder.layer" + std::to_string(k) + ".";
    Layer layer;
    layer.w = make_parameter(p + "w", glorot(d, d, init_rng));
    layer.b = make_parameter(p + "b", ag::Matrix::Zero(1, d));
    layer.gate_w = make_parameter(p + "gate_w", glorot(d, d, init_rng));
    layer.gate_b = make_parameter(p + "gate_b", ag::Matrix::Zero(1, d));
    layers.push_back(std::move(layer));
  }
  mlm_w = make_parameter("encoder.mlm_w", glorot(d, v, init_rng));
  mlm_b = make_parameter("encoder.mlm_b", ag::Matrix::Zero(1, v));
}

ParameterList Encoder::parameters() {
  ParameterList list;
  list.add(embedding);
  for (auto& layer : layers) {
    list.add(layer.w);
    list.add(layer.b);
    list.add(layer.gate_w);
    list.add(layer.gate_b);
  }
  list.add(mlm_w);
  list.add(mlm_b);
  return list;
}

Encoder::Output Encoder::forward(const TokenBatch& batch, const Dropout* dropout) const {
  if (batch.documents() == 0) throw DataError("encoder: empty batch");
  ag::Var x = ag::gather_rows(embedding.var, batch.ids);
  for (const auto& layer : layers) {
    ag::Var candidate = ag::tanh(ag::add_row(ag::matmul(x, layer.w.var), layer.b.var));
    ag::Var gate = ag::sigmoid(ag::add_row(ag::matmul(x, layer.gate_w.var), layer.gate_b.var));
    x = ag::add(x, apply_dropout(ag::mul(gate, candidate), dropout));
  }
  Output out;
  out.pooled = ag::segment_mean(x, batch.offsets);
  out.token_states = std::move(x);
  return out;
}

ag::Matrix Encoder::encode(std::span<const int> tokens) const {
  if (tokens.empty()) throw DataError("encode: empty token sequence");
  TokenBatch batch;
  batch.add(tokens, config_.max_len, config_.vocab_size);
  return forward(batch).pooled.value();
}

ag::Matrix Encoder::encode_batch(std::span<const std::vector<int>> docs) const {
  TokenBatch batch;
  for (const auto& d : docs) {
    if (d.empty()) throw DataError("encode: empty token sequence");
    batch.add(d, config_.max_len, config_.vocab_size);
  }
  return forward(batch).pooled.value();
}

ag::Var Encoder::mlm_logits(const Output& out, const TokenBatch& batch, std::span<const ag::Index> rows) const {
  // Each masked row sees its own state plus the pooled document context.
  std::vector<ag::Index> doc_of(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto it = std::upper_bound(batch.offsets.begin(), batch.offsets.end(), rows[i]);
    doc_of[i] = static_cast<ag::Index>(it - batch.offsets.begin()) - 1;
  }
  ag::Var states = ag::select_rows(out.token_states, rows);
  ag::Var context = ag::select_rows(out.pooled, doc_of);
  return ag::add_row(ag::matmul(ag::add(states, context), mlm_w.var), mlm_b.var);
}

ag::Var Encoder::mlm_loss(std::span<const MaskedTokens> docs, const Dropout* dropout) const {
  TokenBatch batch;
  std::vector<ag::Index> rows;
  std::vector<int> labels;
  for (const auto& doc : docs) {
    if (doc.tokens.size() != doc.labels.size()) throw DataError("mlm_loss: token/label length mismatch");
    const ag::Index base = batch.offsets.back();
    batch.add(doc.tokens, config_.max_len, config_.vocab_size);
    // Row numbering follows TokenBatch::add: PAD skipped, truncated at max_len.
    ag::Index row = base;
    for (std::size_t i = 0; i < doc.tokens.size() && row < batch.offsets.back(); ++i) {
      if (doc.tokens[i] == Vocabulary::kPad) continue;
      if (doc.labels[i] != MaskedTokens::kIgnore) {
        if (doc.labels[i] < 0 || doc.labels[i] >= config_.vocab_size) throw DataError("mlm_loss: label out of range");
        rows.push_back(row);
        labels.push_back(doc.labels[i]);
      }
      ++row;
    }
  }
  if (rows.empty()) throw DataError("mlm_loss: no masked positions");
  const Output out = forward(batch, dropout);
  ag::Var logits = mlm_logits(out, batch, rows);
  return ag::scale(ag::mean(ag::log_softmax_pick(logits, labels)), -1.0);
}

}  // namespace diva
