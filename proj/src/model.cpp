#include "diva/model.hpp"

#include "diva/error.hpp"

namespace diva {

void ModelConfig::validate() const {
  if (vocab_size <= 3) throw ConfigError("model: vocab_size must exceed the special tokens");
  if (dim <= 0 || depth < 0 || max_len <= 0 || latent_dim <= 0 || q_hidden < 0) {
    throw ConfigError("model: dimensions must be positive");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},
                     {"dim", c.dim},
                     {"depth", c.depth},
                     {"max_len", c.max_len},
                     {"latent_dim", c.latent_dim},
                     {"q_hidden", c.q_hidden},
                     {"decoder_activation", c.decoder_activation == Activation::tanh ? "tanh" : "identity"},
                     {"outcome", to_string(c.kind)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dim = j.at("dim").get<int>();
  c.depth = j.at("depth").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.q_hidden = j.at("q_hidden").get<int>();
  c.decoder_activation = j.at("decoder_activation").get<std::string>() == "tanh" ? Activation::tanh : Activation::identity;
  c.kind = parse_outcome_kind(j.at("outcome").get<std::string>());
}

DivaModel::DivaModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  Rng rng = derive_stream(seed, StreamTag::init);
  encoder = Encoder(EncoderConfig{config.vocab_size, config.dim, config.depth, config.max_len}, rng);
  net_t = InferenceNetwork(Branch::t, config.dim, config.latent_dim, rng);
  net_c = InferenceNetwork(Branch::c, config.dim, config.latent_dim, rng);
  net_y = InferenceNetwork(Branch::y, config.dim, config.latent_dim, rng);
  decoder = Decoder(config.latent_dim, config.dim, config.decoder_activation, rng);
  heads = ClassifierHeads(config.latent_dim, rng);
  q = QHeads(config.latent_dim, config.q_hidden, config.kind, rng);
  initialized_ = true;
}

ParameterList DivaModel::parameters() {
  ParameterList list;
  list.append(encoder.parameters());
  list.append(net_t.parameters());
  list.append(net_c.parameters());
  list.append(net_y.parameters());
  list.append(decoder.parameters());
  list.append(heads.parameters());
  list.append(q.parameters());
  return list;
}

TokenBatch DivaModel::make_batch(std::span<const Document* const> docs) const {
  TokenBatch batch;
  for (const Document* d : docs) {
    if (d->tokens.empty()) throw DataError("document " + d->id + " has no tokens");
    batch.add(d->tokens, config_.max_len, config_.vocab_size);
  }
  return batch;
}

DivaModel::Forward DivaModel::forward(const TokenBatch& batch, const std::array<ag::Matrix, 3>* eps,
                                      const Dropout* dropout) const {
  if (!initialized_) throw Error("model is not initialized");
  Forward f;
  f.encoded = encoder.forward(batch, dropout);
  const ag::Index b = static_cast<ag::Index>(batch.documents());
  const ag::Matrix zeros = ag::Matrix::Zero(b, config_.latent_dim);
  f.t = net_t.infer(f.encoded.pooled, eps ? (*eps)[0] : zeros);
  f.c = net_c.infer(f.encoded.pooled, eps ? (*eps)[1] : zeros);
  f.y = net_y.infer(f.encoded.pooled, eps ? (*eps)[2] : zeros);
  f.h_hat = decoder.decode(f.t.z, f.c.z, f.y.z);
  return f;
}

DivaModel::Means DivaModel::posterior_means(std::span<const Document* const> docs) const {
  const Forward f = forward(make_batch(docs));
  return Means{f.t.mu.value(), f.c.mu.value(), f.y.mu.value()};
}

}  // namespace diva
