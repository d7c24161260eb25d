#include "diva/latent.hpp"

#include "diva/error.hpp"

#include <cmath>
#include <random>

namespace diva {

std::string to_string(Branch b) {
  switch (b) {
    case Branch::t: return "t";
    case Branch::c: return "c";
    case Branch::y: return "y";
  }
  return "?";
}

InferenceNetwork::InferenceNetwork(Branch branch, int input_dim, int latent_dim, Rng& init_rng) : branch_(branch) {
  if (input_dim <= 0 || latent_dim <= 0) throw ConfigError("inference network: dimensions must be positive");
  const std::string p = "latent." + to_string(branch) + ".";
  w_mu = make_parameter(p + "w_mu", glorot(input_dim, latent_dim, init_rng));
  b_mu = make_parameter(p + "b_mu", ag::Matrix::Zero(1, latent_dim));
  // Small log-variance weights keep initial posteriors near unit variance.
  w_log_var = make_parameter(p + "w_log_var", 0.1 * glorot(input_dim, latent_dim, init_rng));
  b_log_var = make_parameter(p + "b_log_var", ag::Matrix::Zero(1, latent_dim));
}

ParameterList InferenceNetwork::parameters() {
  ParameterList list;
  list.add(w_mu);
  list.add(b_mu);
  list.add(w_log_var);
  list.add(b_log_var);
  return list;
}

LatentBatch InferenceNetwork::infer(const ag::Var& h, const ag::Matrix& eps) const {
  if (!h.value().allFinite()) throw NumericError("infer: non-finite input representation");
  if (eps.rows() != h.rows() || eps.cols() != latent_dim()) throw DataError("infer: eps shape mismatch");
  LatentBatch out;
  out.mu = ag::add_row(ag::matmul(h, w_mu.var), b_mu.var);
  out.log_var = ag::add_row(ag::matmul(h, w_log_var.var), b_log_var.var);
  ag::Var sigma = ag::exp(ag::scale(out.log_var, 0.5));
  out.z = ag::add(out.mu, ag::mul_const(sigma, eps));
  out.eps = eps;
  return out;
}

LatentSample InferenceNetwork::infer_with(const ag::Vector& h, ag::Vector eps) const {
  if (!h.allFinite()) throw NumericError("infer: non-finite input representation");
  if (h.size() != input_dim()) throw DataError("infer: input width mismatch");
  LatentSample s;
  s.mu = w_mu.value().transpose() * h + b_mu.value().row(0).transpose();
  s.log_var = w_log_var.value().transpose() * h + b_log_var.value().row(0).transpose();
  s.eps = std::move(eps);
  s.z = s.mu.array() + (0.5 * s.log_var.array()).exp() * s.eps.array();
  return s;
}

LatentSample InferenceNetwork::infer(const ag::Vector& h, Rng& rng) const {
  std::normal_distribution<double> n01(0.0, 1.0);
  ag::Vector eps(latent_dim());
  for (ag::Index i = 0; i < eps.size(); ++i) eps(i) = n01(rng);
  return infer_with(h, std::move(eps));
}

LatentSample InferenceNetwork::infer_mean(const ag::Vector& h) const { return infer_with(h, ag::Vector::Zero(latent_dim())); }

Decoder::Decoder(int latent_dim, int output_dim, Activation activation, Rng& init_rng) : activation_(activation) {
  if (latent_dim <= 0 || output_dim <= 0) throw ConfigError("decoder: dimensions must be positive");
  w = make_parameter("decoder.w", glorot(3 * latent_dim, output_dim, init_rng));
  b = make_parameter("decoder.b", ag::Matrix::Zero(1, output_dim));
}

ParameterList Decoder::parameters() {
  ParameterList list;
  list.add(w);
  list.add(b);
  return list;
}

ag::Var Decoder::decode(const ag::Var& z_t, const ag::Var& z_c, const ag::Var& z_y) const {
  if (z_t.cols() + z_c.cols() + z_y.cols() != w.value().rows() || z_t.cols() != z_c.cols() || z_c.cols() != z_y.cols()) {
    throw DataError("decode: latent width mismatch");
  }
  const std::array<ag::Var, 3> parts{z_t, z_c, z_y};
  ag::Var pre = ag::add_row(ag::matmul(ag::concat_cols(parts), w.var), b.var);
  return activation_ == Activation::tanh ? ag::tanh(pre) : pre;
}

ag::Vector Decoder::decode(const ag::Vector& z_t, const ag::Vector& z_c, const ag::Vector& z_y) const {
  auto row = [](const ag::Vector& v) { return ag::constant(v.transpose()); };
  return decode(row(z_t), row(z_c), row(z_y)).value().row(0).transpose();
}

double kl_to_standard_normal(const ag::Vector& mu, const ag::Vector& log_var) {
  if (mu.size() != log_var.size()) throw DataError("kl: width mismatch");
  if (!mu.allFinite() || !log_var.allFinite()) throw NumericError("kl: non-finite input");
  return 0.5 * (mu.array().square() + log_var.array().exp() - 1.0 - log_var.array()).sum();
}

ag::Var kl_to_standard_normal(const ag::Var& mu, const ag::Var& log_var) {
  ag::Var terms = ag::sub(ag::add_scalar(ag::add(ag::square(mu), ag::exp(log_var)), -1.0), log_var);
  return ag::scale(ag::row_sum(terms), 0.5);
}

ag::Var elbo_loss(const ag::Var& h, const ag::Var& h_hat, const std::array<const LatentBatch*, 3>& samples) {
  if (h.rows() != h_hat.rows() || h.cols() != h_hat.cols()) throw DataError("elbo_loss: reconstruction shape mismatch");
  const double d = static_cast<double>(h.cols());
  ag::Var per_row = ag::scale(ag::row_sum(ag::square(ag::sub(h, h_hat))), 1.0 / d);
  for (const LatentBatch* s : samples) per_row = ag::add(per_row, kl_to_standard_normal(s->mu, s->log_var));
  return ag::mean(per_row);
}

double elbo_loss(const ag::Vector& h, const ag::Vector& h_hat, const std::array<LatentSample, 3>& samples) {
  if (h.size() != h_hat.size()) throw DataError("elbo_loss: reconstruction width mismatch");
  double loss = (h - h_hat).squaredNorm() / static_cast<double>(h.size());
  for (const auto& s : samples) loss += kl_to_standard_normal(s.mu, s.log_var);
  return loss;
}

}  // namespace diva
