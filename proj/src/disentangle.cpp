#include "diva/disentangle.hpp"

#include "diva/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace diva {

double median_heuristic_bandwidth(const ag::Matrix& a, const ag::Matrix& b) {
  ag::Matrix pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(pooled.rows() * (pooled.rows() - 1) / 2));
  for (ag::Index i = 0; i < pooled.rows(); ++i) {
    for (ag::Index j = i + 1; j < pooled.rows(); ++j) dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  }
  if (dists.empty()) return 1.0;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double median = *mid;
  if (dists.size() % 2 == 0) median = 0.5 * (median + *std::max_element(dists.begin(), mid));
  return median > 1e-12 ? median : 1.0;
}

ag::Var mmd_loss(const ag::Var& treated, const ag::Var& control, Bandwidth bandwidth) {
  if (treated.rows() == 0 || control.rows() == 0) throw DataError("mmd_loss: both groups must be nonempty");
  if (treated.cols() != control.cols()) throw DataError("mmd_loss: width mismatch");
  const double bw = bandwidth.fixed ? *bandwidth.fixed : median_heuristic_bandwidth(treated.value(), control.value());
  if (!(bw > 0.0)) throw ConfigError("mmd_loss: bandwidth must be positive");
  const double k = -1.0 / (2.0 * bw * bw);
  ag::Var ktt = ag::exp(ag::scale(ag::pairwise_sqdist(treated, treated), k));
  ag::Var kcc = ag::exp(ag::scale(ag::pairwise_sqdist(control, control), k));
  ag::Var ktc = ag::exp(ag::scale(ag::pairwise_sqdist(treated, control), k));
  return ag::sub(ag::add(ag::mean(ktt), ag::mean(kcc)), ag::scale(ag::mean(ktc), 2.0));
}

double mmd_loss(const ag::Matrix& treated, const ag::Matrix& control, Bandwidth bandwidth) {
  return mmd_loss(ag::constant(treated), ag::constant(control), bandwidth).item();
}

OrthTarget parse_orth_target(const std::string& name) {
  if (name == "identity") return OrthTarget::identity;
  if (name == "zero") return OrthTarget::zero;
  throw ConfigError("unknown ort_target '" + name + "' (expected identity or zero)");
}

std::string to_string(OrthTarget target) { return target == OrthTarget::identity ? "identity" : "zero"; }

ag::Var orthogonality_loss(const ag::Var& z_k, const ag::Var& z_v, OrthTarget target) {
  if (z_k.rows() != z_v.rows() || z_k.cols() != z_v.cols()) throw DataError("orthogonality_loss: shape mismatch");
  ag::Var gram = ag::matmul(z_k, ag::transpose(z_v));
  if (target == OrthTarget::identity) {
    gram = ag::sub(gram, ag::constant(ag::Matrix::Identity(z_k.rows(), z_k.rows())));
  }
  return ag::frobenius_norm(gram);
}

double orthogonality_loss(const ag::Matrix& z_k, const ag::Matrix& z_v, OrthTarget target) {
  return orthogonality_loss(ag::constant(z_k), ag::constant(z_v), target).item();
}

ClassifierHeads::ClassifierHeads(int latent_dim, Rng& init_rng) {
  y_w = make_parameter("heads.y_w", glorot(latent_dim, 2, init_rng));
  y_b = make_parameter("heads.y_b", ag::Matrix::Zero(1, 2));
  tc_w = make_parameter("heads.tc_w", glorot(2 * latent_dim, 2, init_rng));
  tc_b = make_parameter("heads.tc_b", ag::Matrix::Zero(1, 2));
}

ParameterList ClassifierHeads::parameters() {
  ParameterList list;
  list.add(y_w);
  list.add(y_b);
  list.add(tc_w);
  list.add(tc_b);
  return list;
}

ag::Var ClassifierHeads::logits_y(const ag::Var& z_y) const { return ag::add_row(ag::matmul(z_y, y_w.var), y_b.var); }

ag::Var ClassifierHeads::logits_tc(const ag::Var& z_t, const ag::Var& z_c) const {
  const std::array<ag::Var, 2> parts{z_t, z_c};
  return ag::add_row(ag::matmul(ag::concat_cols(parts), tc_w.var), tc_b.var);
}

TreatmentLossMode parse_treatment_loss_mode(const std::string& name) {
  if (name == "joint") return TreatmentLossMode::joint;
  if (name == "adversarial") return TreatmentLossMode::adversarial;
  throw ConfigError("unknown treatment loss mode '" + name + "' (expected joint or adversarial)");
}

std::string to_string(TreatmentLossMode mode) { return mode == TreatmentLossMode::joint ? "joint" : "adversarial"; }

ag::Var treatment_loss(const ClassifierHeads& heads, const ag::Var& z_t, const ag::Var& z_c, const ag::Var& z_y,
                       std::span<const int> treatment, TreatmentLossMode mode) {
  if (static_cast<ag::Index>(treatment.size()) != z_y.rows()) throw DataError("treatment_loss: label count mismatch");
  ag::Var logits_y;
  if (mode == TreatmentLossMode::adversarial) {
    logits_y = ag::add_row(ag::matmul(z_y, ag::grad_reverse(heads.y_w.var)), ag::grad_reverse(heads.y_b.var));
  } else {
    logits_y = heads.logits_y(z_y);
  }
  ag::Var log_p_y = ag::log_softmax_pick(logits_y, treatment);
  ag::Var log_p_tc = ag::log_softmax_pick(heads.logits_tc(z_t, z_c), treatment);
  return ag::mean(ag::sub(log_p_y, log_p_tc));
}

ag::Var outcome_loss(const ag::Var& q_hat, const ag::Matrix& y, OutcomeKind kind) {
  if (q_hat.rows() != y.rows() || q_hat.cols() != y.cols()) throw DataError("outcome_loss: shape mismatch");
  if (kind == OutcomeKind::real) return ag::mean(ag::square(ag::sub(q_hat, ag::constant(y))));
  if ((q_hat.value().array() < 0.0).any() || (q_hat.value().array() > 1.0).any()) {
    throw DataError("outcome_loss: binary predictions must be probabilities in [0, 1]");
  }
  const ag::Matrix ones = ag::Matrix::Ones(y.rows(), y.cols());
  // Terms with zero weight take log(1) so that 0 * log(0) cannot appear.
  const ag::Matrix skip_pos = (y.array() == 0.0).cast<double>().matrix();
  const ag::Matrix skip_neg = (y.array() == 1.0).cast<double>().matrix();
  ag::Var pos = ag::mul_const(ag::log(ag::add(q_hat, ag::constant(skip_pos))), y);
  ag::Var neg = ag::mul_const(
      ag::log(ag::add(ag::add_scalar(ag::scale(q_hat, -1.0), 1.0), ag::constant(skip_neg))), ones - y);
  return ag::scale(ag::mean(ag::add(pos, neg)), -1.0);
}

double outcome_loss(std::span<const double> q_hat, std::span<const double> y, OutcomeKind kind) {
  if (q_hat.size() != y.size()) throw DataError("outcome_loss: length mismatch");
  if (q_hat.empty()) throw DataError("outcome_loss: empty input");
  const auto n = static_cast<ag::Index>(q_hat.size());
  return outcome_loss(ag::constant(Eigen::Map<const ag::Vector>(q_hat.data(), n)),
                      Eigen::Map<const ag::Vector>(y.data(), n), kind)
      .item();
}

ag::Var outcome_loss_from_raw(const ag::Var& q_raw, const ag::Matrix& y, OutcomeKind kind) {
  if (kind == OutcomeKind::real) return outcome_loss(q_raw, y, kind);
  return ag::bce_with_logits(q_raw, y);
}

void LossWeights::validate() const {
  for (double v : {alpha, beta, gamma, eta}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights must be nonnegative");
  }
}

DisentangleTerms disentangle_total(const DisentangleInputs& in, const ClassifierHeads& heads, const LossWeights& w,
                                   const DisentangleOptions& options) {
  w.validate();
  if (in.t == nullptr || in.c == nullptr || in.y == nullptr) throw DataError("disentangle_total: missing latents");
  std::vector<ag::Index> treated;
  std::vector<ag::Index> control;
  for (std::size_t i = 0; i < in.treatment.size(); ++i) {
    (in.treatment[i] == 1 ? treated : control).push_back(static_cast<ag::Index>(i));
  }
  if (treated.empty() || control.empty()) {
    throw DataError("disentangle_total: batch must contain treated and control examples");
  }

  DisentangleTerms terms;
  terms.vae = elbo_loss(in.h, in.h_hat, {in.t, in.c, in.y});
  terms.treatment = treatment_loss(heads, in.t->z, in.c->z, in.y->z, in.treatment, options.treatment_mode);
  terms.outcome = outcome_loss_from_raw(in.q_factual_raw, in.outcome, in.kind);
  terms.ort = ag::add(ag::add(orthogonality_loss(in.t->z, in.c->z, options.ort_target),
                              orthogonality_loss(in.t->z, in.y->z, options.ort_target)),
                      orthogonality_loss(in.c->z, in.y->z, options.ort_target));
  ag::Var mmd = ag::scalar(0.0);
  for (const LatentBatch* b : {in.t, in.c, in.y}) {
    mmd = ag::add(mmd, mmd_loss(ag::select_rows(b->z, treated), ag::select_rows(b->z, control), options.bandwidth));
  }
  terms.mmd = mmd;

  ag::Var total = terms.vae;
  if (w.alpha != 0.0) total = ag::add(total, ag::scale(terms.treatment, w.alpha));
  if (w.beta != 0.0) total = ag::add(total, ag::scale(terms.outcome, w.beta));
  if (w.gamma != 0.0) total = ag::add(total, ag::scale(terms.ort, w.gamma));
  if (w.eta != 0.0) total = ag::add(total, ag::scale(terms.mmd, w.eta));
  terms.total = total;
  return terms;
}

}  // namespace diva
