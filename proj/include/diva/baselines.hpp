#pragma once

// Reference estimators: difference in means and a two-head regressor on the
// encoder output.

#include "diva/corpus.hpp"
#include "diva/encoder.hpp"
#include "diva/estimator.hpp"
#include "diva/trainer.hpp"

#include <span>
#include <string>

namespace diva {

/// mean(y | T=1) - mean(y | T=0) over the named split ("all" for every document).
double naive_ate(const Dataset& ds, const std::string& split);

/// Encoder -> shared tanh map d -> r -> one affine head per treatment arm.
class TwoHeadRegressor {
 public:
  TwoHeadRegressor() = default;
  /// Head weights start at zero so an untrained model predicts its biases.
  TwoHeadRegressor(const EncoderConfig& encoder, int representation_dim, OutcomeKind kind, std::uint64_t seed);

  /// Raw output (logit for binary outcomes) of the head for each row's arm.
  ag::Var factual_raw(const TokenBatch& batch, std::span<const int> treatment, const Dropout* dropout = nullptr) const;
  /// Outcome-scale predictions under T=0 and T=1 (B x 1 each), eval mode.
  std::pair<ag::Matrix, ag::Matrix> predict(const TokenBatch& batch) const;
  std::vector<double> ite(const TokenBatch& batch) const;

  OutcomeKind kind() const { return kind_; }
  ParameterList parameters();

  Encoder encoder;
  Parameter shared_w;  // d x r
  Parameter shared_b;  // 1 x r
  Parameter head0_w;   // r x 1
  Parameter head0_b;
  Parameter head1_w;
  Parameter head1_b;

 private:
  ag::Var representation(const TokenBatch& batch, const Dropout* dropout) const;
  OutcomeKind kind_ = OutcomeKind::real;
};

struct TarnetResult {
  EffectEstimate estimate;
  std::vector<EpochRecord> history;
  std::optional<std::string> diagnostic;
};

/// Trains on "train" (selection on "dev") with the shared epoch loop and the
/// TrainConfig's optimizer settings; r = latent_dim. Estimates on `split`.
TarnetResult tarnet_fit_predict(const Dataset& ds, const TrainConfig& config, const std::string& split = "test");

}  // namespace diva
