#pragma once

#include "diva/autograd.hpp"
#include "diva/parameters.hpp"

#include <cstddef>
#include <map>
#include <string>

namespace diva {

/// Linear warmup from 0 to `peak` over the first ceil(warmup_fraction * total)
/// steps, then linear decay to 0 at `total`.
class LinearWarmupSchedule {
 public:
  LinearWarmupSchedule(double peak, double warmup_fraction, std::size_t total_steps);

  double operator()(std::size_t step) const;
  std::size_t warmup_steps() const { return warmup_; }
  std::size_t total_steps() const { return total_; }

 private:
  double peak_;
  std::size_t warmup_;
  std::size_t total_;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay:
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  /// Applies one update to every parameter with a gradient.
  void step(const ParameterList& params, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  struct Moments {
    ag::Matrix m;
    ag::Matrix v;
  };
  AdamWOptions options_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace diva
