#pragma once

// Gaussian inference networks with reparameterised sampling, the
// reconstruction decoder, and the negative-ELBO loss.

#include "diva/autograd.hpp"
#include "diva/parameters.hpp"
#include "diva/rng.hpp"

#include <array>
#include <string>

namespace diva {

enum class Branch { t, c, y };
std::string to_string(Branch b);

/// mu, log-variance and reparameterised sample for a batch (B x l each).
struct LatentBatch {
  ag::Var mu;
  ag::Var log_var;
  ag::Var z;
  ag::Matrix eps;
};

/// Single-example sample; z = mu + exp(log_var / 2) * eps.
struct LatentSample {
  ag::Vector mu;
  ag::Vector log_var;
  ag::Vector z;
  ag::Vector eps;
};

class InferenceNetwork {
 public:
  InferenceNetwork() = default;
  InferenceNetwork(Branch branch, int input_dim, int latent_dim, Rng& init_rng);

  /// Batch form; `eps` must be B x l (all zeros gives z = mu).
  LatentBatch infer(const ag::Var& h, const ag::Matrix& eps) const;
  /// Draws eps ~ N(0, I) from `rng`.
  LatentSample infer(const ag::Vector& h, Rng& rng) const;
  /// Posterior mean, no sampling.
  LatentSample infer_mean(const ag::Vector& h) const;

  Branch branch() const { return branch_; }
  int latent_dim() const { return static_cast<int>(w_mu.value().cols()); }
  int input_dim() const { return static_cast<int>(w_mu.value().rows()); }
  ParameterList parameters();

  // Stored transposed (d x l) so batches multiply on the right.
  Parameter w_mu;
  Parameter b_mu;
  Parameter w_log_var;
  Parameter b_log_var;

 private:
  LatentSample infer_with(const ag::Vector& h, ag::Vector eps) const;
  Branch branch_ = Branch::t;
};

enum class Activation { identity, tanh };

/// One affine layer from [z_t; z_c; z_y] (3l) to d, then an elementwise nonlinearity.
class Decoder {
 public:
  Decoder() = default;
  Decoder(int latent_dim, int output_dim, Activation activation, Rng& init_rng);

  ag::Var decode(const ag::Var& z_t, const ag::Var& z_c, const ag::Var& z_y) const;
  ag::Vector decode(const ag::Vector& z_t, const ag::Vector& z_c, const ag::Vector& z_y) const;

  Activation activation() const { return activation_; }
  ParameterList parameters();

  Parameter w;  // 3l x d
  Parameter b;  // 1 x d

 private:
  Activation activation_ = Activation::identity;
};

/// 0.5 * sum(mu^2 + exp(log_var) - 1 - log_var).
double kl_to_standard_normal(const ag::Vector& mu, const ag::Vector& log_var);
/// Per-row KL, B x 1.
ag::Var kl_to_standard_normal(const ag::Var& mu, const ag::Var& log_var);

/// Negative ELBO averaged over the batch: ||h - h_hat||^2 / d + sum_k KL_k.
ag::Var elbo_loss(const ag::Var& h, const ag::Var& h_hat, const std::array<const LatentBatch*, 3>& samples);
double elbo_loss(const ag::Vector& h, const ag::Vector& h_hat, const std::array<LatentSample, 3>& samples);

}  // namespace diva
