#pragma once

// Disentanglement losses: MMD balancing, orthogonality between latent
// branches, the treatment loss, the outcome loss, and their weighted sum.

#include "diva/autograd.hpp"
#include "diva/latent.hpp"
#include "diva/parameters.hpp"
#include "diva/types.hpp"

#include <optional>
#include <span>
#include <string>

namespace diva {

/// RBF bandwidth; unset means the median heuristic on the pooled sample.
struct Bandwidth {
  std::optional<double> fixed;
  static Bandwidth automatic() { return {}; }
  static Bandwidth of(double bw) { return Bandwidth{bw}; }
};

/// Median pairwise Euclidean distance over the rows of both groups (1 when
/// degenerate).
double median_heuristic_bandwidth(const ag::Matrix& a, const ag::Matrix& b);

/// Biased squared MMD with k(x,y) = exp(-||x-y||^2 / (2 bw^2)).
ag::Var mmd_loss(const ag::Var& treated, const ag::Var& control, Bandwidth bandwidth = {});
double mmd_loss(const ag::Matrix& treated, const ag::Matrix& control, Bandwidth bandwidth = {});

enum class OrthTarget { identity, zero };
OrthTarget parse_orth_target(const std::string& name);
std::string to_string(OrthTarget target);

/// Frobenius norm of Z_k Z_v^T - target (B x B target).
ag::Var orthogonality_loss(const ag::Var& z_k, const ag::Var& z_v, OrthTarget target = OrthTarget::identity);
double orthogonality_loss(const ag::Matrix& z_k, const ag::Matrix& z_v, OrthTarget target = OrthTarget::identity);

/// Two softmax heads predicting the treatment: from z_y alone, and from [z_t; z_c].
class ClassifierHeads {
 public:
  ClassifierHeads() = default;
  ClassifierHeads(int latent_dim, Rng& init_rng);

  ag::Var logits_y(const ag::Var& z_y) const;
  ag::Var logits_tc(const ag::Var& z_t, const ag::Var& z_c) const;
  ParameterList parameters();

  Parameter y_w;   // l x 2
  Parameter y_b;   // 1 x 2
  Parameter tc_w;  // 2l x 2
  Parameter tc_b;  // 1 x 2
};

/// How the z_y term of the treatment loss is optimised.
///  joint:       every parameter minimises the loss directly.
///  adversarial: the z_y head instead maximises log P(t | z_y) (it is trained
///               as a classifier) while z_y keeps the gradient of the joint loss.
enum class TreatmentLossMode { joint, adversarial };
TreatmentLossMode parse_treatment_loss_mode(const std::string& name);
std::string to_string(TreatmentLossMode mode);

/// Batch mean of log P(t | z_y) - log P(t | z_t, z_c).
ag::Var treatment_loss(const ClassifierHeads& heads, const ag::Var& z_t, const ag::Var& z_c, const ag::Var& z_y,
                       std::span<const int> treatment, TreatmentLossMode mode = TreatmentLossMode::joint);

/// MSE for real outcomes; mean binary cross-entropy on probabilities for binary ones.
ag::Var outcome_loss(const ag::Var& q_hat, const ag::Matrix& y, OutcomeKind kind);
double outcome_loss(std::span<const double> q_hat, std::span<const double> y, OutcomeKind kind);
/// Same objective with binary predictions given as logits (numerically stable).
ag::Var outcome_loss_from_raw(const ag::Var& q_raw, const ag::Matrix& y, OutcomeKind kind);

struct LossWeights {
  double alpha = 1.0;  // treatment loss
  double beta = 1.0;   // outcome loss
  double gamma = 0.1;  // orthogonality
  double eta = 0.1;    // MMD
  void validate() const;
};

struct DisentangleOptions {
  Bandwidth bandwidth;
  OrthTarget ort_target = OrthTarget::identity;
  TreatmentLossMode treatment_mode = TreatmentLossMode::joint;
};

/// Everything the combined loss needs for one batch.
struct DisentangleInputs {
  ag::Var h;
  ag::Var h_hat;
  const LatentBatch* t = nullptr;
  const LatentBatch* c = nullptr;
  const LatentBatch* y = nullptr;
  std::span<const int> treatment;
  ag::Var q_factual_raw;  // Q(t_i, z_y, z_c) for the observed treatment
  ag::Matrix outcome;     // B x 1
  OutcomeKind kind = OutcomeKind::real;
};

struct DisentangleTerms {
  ag::Var vae;
  ag::Var treatment;
  ag::Var outcome;
  ag::Var ort;  // summed over the three branch pairs
  ag::Var mmd;  // summed over the three branches
  ag::Var total;
};

/// L_vae + alpha L_t + beta L_o + gamma L_ort + eta L_mmd.
DisentangleTerms disentangle_total(const DisentangleInputs& in, const ClassifierHeads& heads, const LossWeights& w,
                                   const DisentangleOptions& options = {});

}  // namespace diva
