#pragma once

// Outcome heads Q(t, z_y, z_c) and plug-in effect estimation.

#include "diva/autograd.hpp"
#include "diva/corpus.hpp"
#include "diva/encoder.hpp"
#include "diva/parameters.hpp"
#include "diva/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace diva {

/// Small MLP in -> hidden (tanh) -> 1; hidden = 0 makes it affine.
class OutcomeHead {
 public:
  OutcomeHead() = default;
  OutcomeHead(const std::string& name, int input_dim, int hidden, Rng& init_rng);

  ag::Var forward(const ag::Var& x, const Dropout* dropout = nullptr) const;
  int hidden() const { return static_cast<int>(w1.value().cols()); }
  ParameterList parameters();

  Parameter w1;  // in x hidden (unused when affine)
  Parameter b1;
  Parameter w2;  // hidden x 1, or in x 1 when affine
  Parameter b2;  // 1 x 1

 private:
  bool affine_ = true;
};

/// Separate heads for T=0 and T=1 over [z_y; z_c]. Binary outcomes pass the
/// head output through a sigmoid.
class QHeads {
 public:
  QHeads() = default;
  QHeads(int latent_dim, int hidden, OutcomeKind kind, Rng& init_rng);

  /// Raw head output (logit for binary outcomes), B x 1.
  ag::Var raw(int t, const ag::Var& z_y, const ag::Var& z_c, const Dropout* dropout = nullptr) const;
  /// Raw output of the head selected by each row's treatment.
  ag::Var factual_raw(std::span<const int> treatment, const ag::Var& z_y, const ag::Var& z_c,
                      const Dropout* dropout = nullptr) const;
  /// Outcome-scale prediction (probability for binary outcomes).
  ag::Matrix predict(int t, const ag::Matrix& z_y, const ag::Matrix& z_c) const;

  OutcomeKind kind() const { return kind_; }
  int latent_dim() const { return latent_dim_; }
  ParameterList parameters();

  OutcomeHead head0;
  OutcomeHead head1;

 private:
  OutcomeKind kind_ = OutcomeKind::real;
  int latent_dim_ = 0;
};

double q_predict(const QHeads& q, int t, const ag::Vector& z_y, const ag::Vector& z_c);

struct EffectEstimate {
  std::vector<std::string> ids;
  std::vector<double> ite_hat;
  double ate_hat = 0.0;
  std::string split;
  std::uint64_t seed = 0;
  std::string model_id;
};

/// Builds an estimate from per-example ITEs; ate_hat is their mean.
EffectEstimate make_estimate(std::vector<std::string> ids, std::vector<double> ite_hat, std::string split,
                             std::uint64_t seed, std::string model_id);

/// Writes {"id","ite_hat"} per line and a final aggregate footer record.
void write_effects(const EffectEstimate& est, const std::filesystem::path& path);
EffectEstimate read_effects(const std::filesystem::path& path);

class DivaModel;

/// Posterior-mean latents (eps = 0) -> Q(1) - Q(0).
double estimate_ite(const DivaModel& model, const Document& doc);
/// Batched form; identical to calling estimate_ite per document.
std::vector<double> estimate_ites(const DivaModel& model, std::span<const Document* const> docs);
EffectEstimate estimate_ate(const DivaModel& model, const Dataset& ds, const std::string& split);

}  // namespace diva
