#include "diva/baselines.hpp"

#include "diva/error.hpp"

#include <cmath>

namespace diva {

double naive_ate(const Dataset& ds, const std::string& split) {
  double sum1 = 0.0;
  double sum0 = 0.0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  for (std::size_t i : ds.select(split)) {
    const Document& d = ds.documents[i];
    if (!d.outcome.y) throw DataError("naive_ate: document " + d.id + " has no observed outcome");
    if (d.treatment == Treatment::treated) {
      sum1 += *d.outcome.y;
      ++n1;
    } else if (d.treatment == Treatment::control) {
      sum0 += *d.outcome.y;
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) throw DataError("naive_ate: split '" + split + "' lacks a treated or a control group");
  return sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
}

TwoHeadRegressor::TwoHeadRegressor(const EncoderConfig& encoder_config, int representation_dim, OutcomeKind kind,
                                   std::uint64_t seed)
    : kind_(kind) {
  if (representation_dim <= 0) throw ConfigError("two-head regressor: representation_dim must be positive");
  Rng rng = derive_stream(seed, StreamTag::init, 1);
  encoder = Encoder(encoder_config, rng);
  shared_w = make_parameter("tarnet.shared.w", glorot(encoder_config.dim, representation_dim, rng));
  shared_b = make_parameter("tarnet.shared.b", ag::Matrix::Zero(1, representation_dim));
  head0_w = make_parameter("tarnet.head0.w", ag::Matrix::Zero(representation_dim, 1));
  head0_b = make_parameter("tarnet.head0.b", ag::Matrix::Zero(1, 1));
  head1_w = make_parameter("tarnet.head1.w", ag::Matrix::Zero(representation_dim, 1));
  head1_b = make_parameter("tarnet.head1.b", ag::Matrix::Zero(1, 1));
}

ParameterList TwoHeadRegressor::parameters() {
  ParameterList list = encoder.parameters();
  for (Parameter* p : {&shared_w, &shared_b, &head0_w, &head0_b, &head1_w, &head1_b}) list.add(*p);
  return list;
}

ag::Var TwoHeadRegressor::representation(const TokenBatch& batch, const Dropout* dropout) const {
  const auto out = encoder.forward(batch, dropout);
  return apply_dropout(ag::tanh(ag::add_row(ag::matmul(out.pooled, shared_w.var), shared_b.var)), dropout);
}

ag::Var TwoHeadRegressor::factual_raw(const TokenBatch& batch, std::span<const int> treatment,
                                      const Dropout* dropout) const {
  const ag::Var r = representation(batch, dropout);
  if (static_cast<ag::Index>(treatment.size()) != r.rows()) throw DataError("two-head regressor: treatment count mismatch");
  ag::Matrix m1(r.rows(), 1);
  for (ag::Index i = 0; i < r.rows(); ++i) m1(i, 0) = treatment[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
  const ag::Matrix m0 = ag::Matrix::Ones(r.rows(), 1) - m1;
  const ag::Var q1 = ag::add_row(ag::matmul(r, head1_w.var), head1_b.var);
  const ag::Var q0 = ag::add_row(ag::matmul(r, head0_w.var), head0_b.var);
  return ag::add(ag::mul_const(q1, m1), ag::mul_const(q0, m0));
}

std::pair<ag::Matrix, ag::Matrix> TwoHeadRegressor::predict(const TokenBatch& batch) const {
  const ag::Matrix r = representation(batch, nullptr).value();
  ag::Matrix q0 = (r * head0_w.value()).rowwise() + head0_b.value().row(0);
  ag::Matrix q1 = (r * head1_w.value()).rowwise() + head1_b.value().row(0);
  if (kind_ == OutcomeKind::binary) {
    q0 = (1.0 / (1.0 + (-q0.array()).exp())).matrix();
    q1 = (1.0 / (1.0 + (-q1.array()).exp())).matrix();
  }
  return {std::move(q0), std::move(q1)};
}

std::vector<double> TwoHeadRegressor::ite(const TokenBatch& batch) const {
  const auto [q0, q1] = predict(batch);
  std::vector<double> out(static_cast<std::size_t>(q0.rows()));
  for (ag::Index i = 0; i < q0.rows(); ++i) out[static_cast<std::size_t>(i)] = q1(i, 0) - q0(i, 0);
  return out;
}

namespace {

TokenBatch batch_of(std::span<const Document* const> docs, const EncoderConfig& ec) {
  TokenBatch b;
  for (const Document* d : docs) b.add(d->tokens, ec.max_len, ec.vocab_size);
  return b;
}

std::vector<const Document*> docs_in(const Dataset& ds, const std::string& split) {
  std::vector<const Document*> out;
  for (std::size_t i : ds.select(split)) out.push_back(&ds.documents[i]);
  return out;
}

}  // namespace

TarnetResult tarnet_fit_predict(const Dataset& ds, const TrainConfig& config, const std::string& split) {
  config.validate();
  for (const char* s : {"train", "dev"}) {
    if (!ds.has_split(s) || ds.split(s).empty()) throw DataError(std::string("tarnet: dataset has no '") + s + "' split");
  }
  const EncoderConfig ec{static_cast<int>(ds.vocabulary.size()), config.dim, config.depth, config.max_len};
  TwoHeadRegressor model(ec, config.latent_dim, config.outcome, config.seed);
  const SelectionCriterion criterion = config.effective_selection();
  const auto dev_docs = docs_in(ds, "dev");

  FitProblem problem;
  problem.params = model.parameters();
  problem.batch_loss = [&](std::span<const Document* const> batch, Rng& rng) {
    std::vector<int> t;
    ag::Matrix y(static_cast<ag::Index>(batch.size()), 1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!batch[i]->outcome.y) throw DataError("document " + batch[i]->id + " has no observed outcome");
      t.push_back(static_cast<int>(batch[i]->treatment));
      y(static_cast<ag::Index>(i), 0) = *batch[i]->outcome.y;
    }
    const Dropout dropout{config.dropout, &rng};
    return outcome_loss_from_raw(model.factual_raw(batch_of(batch, ec), t, &dropout), y, config.outcome);
  };
  problem.dev_score = [&] {
    const auto [q0, q1] = model.predict(batch_of(dev_docs, ec));
    double total = 0.0;
    for (std::size_t i = 0; i < dev_docs.size(); ++i) {
      const double pred = dev_docs[i]->treated() ? q1(static_cast<ag::Index>(i), 0) : q0(static_cast<ag::Index>(i), 0);
      const double y = *dev_docs[i]->outcome.y;
      total += criterion == SelectionCriterion::accuracy ? ((pred >= 0.5 ? 1.0 : 0.0) == y ? 1.0 : 0.0)
                                                         : (pred - y) * (pred - y);
    }
    return total / static_cast<double>(dev_docs.size());
  };
  problem.higher_is_better = criterion == SelectionCriterion::accuracy;

  FitResult fitted = fit(ds, config, problem);

  const auto docs = docs_in(ds, split);
  std::vector<std::string> ids;
  for (const Document* d : docs) ids.push_back(d->id);
  TarnetResult result;
  result.estimate = make_estimate(std::move(ids), model.ite(batch_of(docs, ec)), split, config.seed, "tarnet");
  result.history = std::move(fitted.history);
  result.diagnostic = std::move(fitted.diagnostic);
  return result;
}

}  // namespace diva
