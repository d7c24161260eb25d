#pragma once
// Helpers shared by the unit tests and the acceptance runner.

#include "diva/disentangle.hpp"
#include "diva/encoder.hpp"
#include "diva/latent.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace diva::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
};

/// Compares reverse-mode gradients of `f` against central differences for
/// every entry of every leaf. The error of a leaf is ||a - n|| / max(||a||,
/// ||n||, 1e-6).
inline GradCheck check_gradients(const std::function<ag::Var()>& f,
                                 const std::vector<std::pair<std::string, ag::Var>>& leaves, double h = 1e-5) {
  for (const auto& [_, leaf] : leaves) {
    ag::Var v = leaf;
    v.zero_grad();
  }
  const ag::Var out = f();
  ag::backward(out);
  GradCheck result;
  for (const auto& [name, leaf] : leaves) {
    ag::Var v = leaf;
    const ag::Matrix analytic = v.grad().size() ? v.grad() : ag::Matrix::Zero(v.rows(), v.cols());
    ag::Matrix numeric(v.rows(), v.cols());
    for (ag::Index i = 0; i < v.value().size(); ++i) {
      const double x0 = v.mutable_value().data()[i];
      v.mutable_value().data()[i] = x0 + h;
      const double up = f().item();
      v.mutable_value().data()[i] = x0 - h;
      const double down = f().item();
      v.mutable_value().data()[i] = x0;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-6});
    const double err = (analytic - numeric).norm() / denom;
    if (result.worst.empty() || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = name;
    }
  }
  return result;
}

inline ag::Matrix random_matrix(ag::Index r, ag::Index c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  ag::Matrix m(r, c);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline std::vector<std::pair<std::string, ag::Var>> leaves_of(const ParameterList& params) {
  std::vector<std::pair<std::string, ag::Var>> out;
  for (Parameter* p : params) out.emplace_back(p->name, p->var);
  return out;
}

/// Gradient checks of each loss on toy shapes (d <= 8, l <= 4, B <= 6).
struct GradSuite {
  std::vector<std::pair<std::string, GradCheck>> results;

  static GradSuite run(std::uint64_t seed = 7) {
    GradSuite s;
    Rng rng(seed);
    const int d = 6;
    const int l = 3;
    const int B = 6;
    std::vector<int> t = {1, 0, 1, 0, 0, 1};

    {
      Encoder enc(EncoderConfig{12, d, 1, 16}, rng);
      std::vector<MaskedTokens> docs(2);
      docs[0].tokens = {1, 5, 7, 1};
      docs[0].labels = {4, -1, -1, 9};
      docs[1].tokens = {6, 1, 3};
      docs[1].labels = {-1, 11, -1};
      s.results.emplace_back("mlm_loss",
                             check_gradients([&] { return enc.mlm_loss(docs); }, leaves_of(enc.parameters())));
    }
    {
      InferenceNetwork nt(Branch::t, d, l, rng), nc(Branch::c, d, l, rng), ny(Branch::y, d, l, rng);
      Decoder dec(l, d, Activation::tanh, rng);
      ag::Var h = ag::leaf(random_matrix(4, d, rng));
      const ag::Matrix et = random_matrix(4, l, rng), ec = random_matrix(4, l, rng), ey = random_matrix(4, l, rng);
      auto f = [&] {
        const LatentBatch a = nt.infer(h, et), b = nc.infer(h, ec), c = ny.infer(h, ey);
        return elbo_loss(h, dec.decode(a.z, b.z, c.z), {&a, &b, &c});
      };
      auto leaves = leaves_of(nt.parameters());
      for (auto* list : {&nc, &ny}) {
        for (auto& e : leaves_of(list->parameters())) leaves.push_back(e);
      }
      for (auto& e : leaves_of(dec.parameters())) leaves.push_back(e);
      leaves.emplace_back("h", h);
      s.results.emplace_back("elbo_loss", check_gradients(f, leaves));
    }
    {
      ag::Var a = ag::leaf(random_matrix(3, l, rng));
      ag::Var b = ag::leaf(random_matrix(4, l, rng, 1.5));
      s.results.emplace_back("mmd_loss", check_gradients([&] { return mmd_loss(a, b, Bandwidth::of(1.3)); },
                                                         {{"treated", a}, {"control", b}}));
    }
    {
      ag::Var a = ag::leaf(random_matrix(B, l, rng, 0.7));
      ag::Var b = ag::leaf(random_matrix(B, l, rng, 0.7));
      for (OrthTarget target : {OrthTarget::identity, OrthTarget::zero}) {
        s.results.emplace_back("orthogonality_loss(" + to_string(target) + ")",
                               check_gradients([&] { return orthogonality_loss(a, b, target); }, {{"z_k", a}, {"z_v", b}}));
      }
    }
    {
      ClassifierHeads heads(l, rng);
      ag::Var zt = ag::leaf(random_matrix(B, l, rng));
      ag::Var zc = ag::leaf(random_matrix(B, l, rng));
      ag::Var zy = ag::leaf(random_matrix(B, l, rng));
      auto leaves = leaves_of(heads.parameters());
      leaves.emplace_back("z_t", zt);
      leaves.emplace_back("z_c", zc);
      leaves.emplace_back("z_y", zy);
      s.results.emplace_back("treatment_loss",
                             check_gradients([&] { return treatment_loss(heads, zt, zc, zy, t); }, leaves));
    }
    {
      ag::Var q = ag::leaf(random_matrix(B, 1, rng));
      const ag::Matrix y = random_matrix(B, 1, rng);
      s.results.emplace_back("outcome_loss(real)",
                             check_gradients([&] { return outcome_loss(q, y, OutcomeKind::real); }, {{"q_hat", q}}));
      ag::Matrix p(B, 1);
      ag::Matrix yb(B, 1);
      for (int i = 0; i < B; ++i) {
        p(i, 0) = 0.15 + 0.12 * i;
        yb(i, 0) = t[static_cast<std::size_t>(i)];
      }
      ag::Var qp = ag::leaf(p);
      s.results.emplace_back("outcome_loss(binary)", check_gradients(
                                                         [&] { return outcome_loss(qp, yb, OutcomeKind::binary); },
                                                         {{"q_hat", qp}}));
      ag::Var raw = ag::leaf(random_matrix(B, 1, rng));
      s.results.emplace_back("outcome_loss_from_raw(binary)",
                             check_gradients([&] { return outcome_loss_from_raw(raw, yb, OutcomeKind::binary); },
                                             {{"q_raw", raw}}));
    }
    return s;
  }

  double max_error() const {
    double m = 0.0;
    for (const auto& [_, r] : results) m = std::max(m, r.max_rel_error);
    return m;
  }
};

/// Logistic-regression probe fit by Newton iterations with a small ridge.
/// Returns held-out accuracy.
inline double logistic_probe_accuracy(const ag::Matrix& x_train, const ag::Vector& y_train, const ag::Matrix& x_test,
                                      const ag::Vector& y_test, double ridge = 1e-3) {
  auto design = [](const ag::Matrix& x) {
    ag::Matrix out(x.rows(), x.cols() + 1);
    out << x, ag::Matrix::Ones(x.rows(), 1);
    return out;
  };
  const ag::Matrix X = design(x_train);
  ag::Vector w = ag::Vector::Zero(X.cols());
  for (int it = 0; it < 50; ++it) {
    const ag::Vector p = (1.0 / (1.0 + (-(X * w).array()).exp())).matrix();
    const ag::Vector g = X.transpose() * (p - y_train) + ridge * w;
    const ag::Vector s = (p.array() * (1.0 - p.array())).matrix();
    ag::Matrix H = X.transpose() * s.asDiagonal() * X;
    H.diagonal().array() += ridge;
    const ag::Vector step = H.ldlt().solve(g);
    w -= step;
    if (step.norm() < 1e-10) break;
  }
  const ag::Vector score = design(x_test) * w;
  int correct = 0;
  for (ag::Index i = 0; i < score.size(); ++i) correct += (score(i) >= 0.0) == (y_test(i) > 0.5);
  return static_cast<double>(correct) / static_cast<double>(score.size());
}

}  // namespace diva::testing
