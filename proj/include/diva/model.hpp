#pragma once

#include "diva/disentangle.hpp"
#include "diva/encoder.hpp"
#include "diva/estimator.hpp"
#include "diva/latent.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace diva {

struct ModelConfig {
  int vocab_size = 0;
  int dim = 32;
  int depth = 1;
  int max_len = 512;
  int latent_dim = 16;
  int q_hidden = 0;
  Activation decoder_activation = Activation::identity;
  OutcomeKind kind = OutcomeKind::real;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Encoder, the three inference networks, decoder, treatment heads and
/// outcome heads as one parameter collection.
class DivaModel {
 public:
  DivaModel() = default;
  DivaModel(const ModelConfig& config, std::uint64_t seed);

  struct Forward {
    Encoder::Output encoded;
    LatentBatch t;
    LatentBatch c;
    LatentBatch y;
    ag::Var h_hat;
  };

  /// `eps` holds the B x l noise for branches t, c, y; nullptr means zeros.
  Forward forward(const TokenBatch& batch, const std::array<ag::Matrix, 3>* eps = nullptr,
                  const Dropout* dropout = nullptr) const;

  /// Posterior means (B x l) of z_y and z_c in eval mode.
  struct Means {
    ag::Matrix t;
    ag::Matrix c;
    ag::Matrix y;
  };
  Means posterior_means(std::span<const Document* const> docs) const;

  TokenBatch make_batch(std::span<const Document* const> docs) const;

  bool initialized() const { return initialized_; }
  const ModelConfig& config() const { return config_; }
  ParameterList parameters();

  Encoder encoder;
  InferenceNetwork net_t;
  InferenceNetwork net_c;
  InferenceNetwork net_y;
  Decoder decoder;
  ClassifierHeads heads;
  QHeads q;

 private:
  ModelConfig config_;
  bool initialized_ = false;
};

}  // namespace diva
