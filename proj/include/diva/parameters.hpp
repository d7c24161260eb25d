#pragma once

#include "diva/autograd.hpp"
#include "diva/rng.hpp"

#include <map>
#include <string>
#include <vector>

namespace diva {

/// A named trainable tensor. Copies are deep: the copy owns a fresh leaf.
struct Parameter {
  std::string name;
  ag::Var var;

  Parameter() = default;
  Parameter(std::string n, ag::Var v) : name(std::move(n)), var(std::move(v)) {}
  Parameter(const Parameter& other)
      : name(other.name), var(other.var.defined() ? ag::leaf(other.var.value()) : ag::Var{}) {}
  Parameter& operator=(const Parameter& other) {
    if (this != &other) {
      name = other.name;
      var = other.var.defined() ? ag::leaf(other.var.value()) : ag::Var{};
    }
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const ag::Matrix& value() const { return var.value(); }
  ag::Matrix& mutable_value() { return var.mutable_value(); }
};

/// Glorot-uniform initialised rows x cols matrix.
ag::Matrix glorot(ag::Index rows, ag::Index cols, Rng& rng);

/// Ordered view over the parameters of one or more components.
class ParameterList {
 public:
  void add(Parameter& p) { items_.push_back(&p); }
  void append(const ParameterList& other) { items_.insert(items_.end(), other.items_.begin(), other.items_.end()); }

  std::vector<Parameter*>::const_iterator begin() const { return items_.begin(); }
  std::vector<Parameter*>::const_iterator end() const { return items_.end(); }
  std::size_t size() const { return items_.size(); }

  void zero_grad() const;
  bool all_finite() const;
  std::size_t scalar_count() const;

  std::map<std::string, ag::Matrix> snapshot() const;
  /// Restores values by name; every parameter must be present with a matching shape.
  void restore(const std::map<std::string, ag::Matrix>& values) const;

 private:
  std::vector<Parameter*> items_;
};

Parameter make_parameter(std::string name, ag::Matrix value);

}  // namespace diva
