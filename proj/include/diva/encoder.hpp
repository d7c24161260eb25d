#pragma once

// Desk-scale text encoder: token embeddings, a stack of gated residual
// token-wise layers, and mean pooling over non-PAD positions. Also hosts the
// masked-language-model objective.

#include "diva/autograd.hpp"
#include "diva/parameters.hpp"
#include "diva/rng.hpp"
#include "diva/vocabulary.hpp"

#include <span>
#include <vector>

namespace diva {

struct EncoderConfig {
  int vocab_size = 0;
  int dim = 32;
  int depth = 1;
  int max_len = 512;  // longer inputs are truncated from the right
};

/// Dropout applied during training; absent in eval mode.
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rate > 0.0 && rng != nullptr; }
  /// Inverted-dropout keep mask scaled by 1/(1-rate).
  ag::Matrix mask(ag::Index rows, ag::Index cols) const;
};

ag::Var apply_dropout(const ag::Var& x, const Dropout* dropout);

/// Flattened token ids of several documents with PAD removed and truncation
/// applied; document i owns rows [offsets[i], offsets[i+1]).
struct TokenBatch {
  std::vector<int> ids;
  std::vector<ag::Index> offsets{0};

  std::size_t documents() const { return offsets.size() - 1; }
  void add(std::span<const int> tokens, int max_len, int vocab_size);
};

struct MaskedTokens {
  static constexpr int kIgnore = -1;
  std::vector<int> tokens;
  std::vector<int> labels;  // original id at masked positions, kIgnore elsewhere

  std::size_t masked_count() const;
};

/// Replaces max(1, floor(rate * n)) non-PAD positions with the MASK id.
MaskedTokens mask_tokens(std::span<const int> tokens, double rate, Rng& rng);

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, Rng& init_rng);

  struct Output {
    ag::Var token_states;  // N x d, one row per kept token
    ag::Var pooled;        // B x d
  };

  Output forward(const TokenBatch& batch, const Dropout* dropout = nullptr) const;

  /// Eval-mode document vector (1 x d).
  ag::Matrix encode(std::span<const int> tokens) const;
  ag::Matrix encode_batch(std::span<const std::vector<int>> docs) const;

  /// MLM logits for the given flat token rows (masked positions).
  ag::Var mlm_logits(const Output& out, const TokenBatch& batch, std::span<const ag::Index> rows) const;

  /// Mean cross-entropy over masked positions of every document.
  ag::Var mlm_loss(std::span<const MaskedTokens> docs, const Dropout* dropout = nullptr) const;
  ag::Var mlm_loss(const MaskedTokens& doc) const { return mlm_loss(std::span<const MaskedTokens>(&doc, 1)); }

  const EncoderConfig& config() const { return config_; }
  int dim() const { return config_.dim; }

  ParameterList parameters();

  Parameter embedding;
  struct Layer {
    Parameter w;       // d x d
    Parameter b;       // 1 x d
    Parameter gate_w;  // d x d
    Parameter gate_b;  // 1 x d
  };
  std::vector<Layer> layers;
  Parameter mlm_w;  // d x |V|
  Parameter mlm_b;  // 1 x |V|

 private:
  EncoderConfig config_;
};

}  // namespace diva
