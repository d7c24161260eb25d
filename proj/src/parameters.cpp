#include "diva/parameters.hpp"

#include "diva/error.hpp"

#include <cmath>
#include <random>

namespace diva {

ag::Matrix glorot(ag::Index rows, ag::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  ag::Matrix m(rows, cols);
  for (ag::Index j = 0; j < cols; ++j) {
    for (ag::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

Parameter make_parameter(std::string name, ag::Matrix value) { return Parameter{std::move(name), ag::leaf(std::move(value))}; }

void ParameterList::zero_grad() const {
  for (Parameter* p : items_) p->var.zero_grad();
}

bool ParameterList::all_finite() const {
  for (const Parameter* p : items_) {
    if (!p->value().allFinite()) return false;
  }
  return true;
}

std::size_t ParameterList::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter* p : items_) n += static_cast<std::size_t>(p->value().size());
  return n;
}

std::map<std::string, ag::Matrix> ParameterList::snapshot() const {
  std::map<std::string, ag::Matrix> out;
  for (const Parameter* p : items_) out.emplace(p->name, p->value());
  return out;
}

void ParameterList::restore(const std::map<std::string, ag::Matrix>& values) const {
  for (Parameter* p : items_) {
    auto it = values.find(p->name);
    if (it == values.end()) throw DataError("missing parameter '" + p->name + "'");
    if (it->second.rows() != p->value().rows() || it->second.cols() != p->value().cols()) {
      throw DataError("parameter '" + p->name + "' has shape " + std::to_string(it->second.rows()) + "x" +
                      std::to_string(it->second.cols()) + ", expected " + std::to_string(p->value().rows()) + "x" +
                      std::to_string(p->value().cols()));
    }
    p->mutable_value() = it->second;
  }
}

}  // namespace diva
