#include "diva/optim.hpp"

#include "diva/error.hpp"

#include <cmath>

namespace diva {

LinearWarmupSchedule::LinearWarmupSchedule(double peak, double warmup_fraction, std::size_t total_steps)
    : peak_(peak), total_(total_steps) {
  if (!(peak >= 0.0)) throw ConfigError("learning rate must be nonnegative");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must lie in (0, 1)");
  if (total_steps < 2) throw ConfigError("schedule needs at least 2 steps");
  warmup_ = static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps) - 1e-9));
  if (warmup_ == 0) warmup_ = 1;
  if (warmup_ >= total_) warmup_ = total_ - 1;
}

double LinearWarmupSchedule::operator()(std::size_t step) const {
  if (step >= total_) return 0.0;
  if (step <= warmup_) return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
  return peak_ * static_cast<double>(total_ - step) / static_cast<double>(total_ - warmup_);
}

void AdamW::step(const ParameterList& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (Parameter* p : params) {
    const ag::Matrix& g = p->var.grad();
    if (g.size() == 0) continue;
    auto& st = state_[p->name];
    if (st.m.size() == 0) {
      st.m = ag::Matrix::Zero(g.rows(), g.cols());
      st.v = ag::Matrix::Zero(g.rows(), g.cols());
    }
    st.m = options_.beta1 * st.m + (1.0 - options_.beta1) * g;
    st.v = options_.beta2 * st.v + (1.0 - options_.beta2) * g.cwiseProduct(g);
    if (lr == 0.0) continue;
    ag::Matrix& w = p->mutable_value();
    const auto update = (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + options_.eps);
    w.array() -= lr * (update + options_.weight_decay * w.array());
  }
}

}  // namespace diva
