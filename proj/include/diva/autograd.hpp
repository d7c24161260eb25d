#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every value is a 2-D matrix; batches are stored one example per row. A Var is
// a cheap handle to a graph node; operations build the graph eagerly and
// backward() walks it in reverse topological order.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace diva::ag {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  void accumulate(const Matrix& g);
  // Gradient buffer, zero-initialised on first access.
  Matrix& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  // Value of a 1x1 result.
  double item() const;
  void zero_grad() { node_->grad.resize(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that participates in differentiation.
Var leaf(Matrix value);
/// Leaf excluded from differentiation.
Var constant(Matrix value);
Var scalar(double value);

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every leaf.
void backward(const Var& root);

// Elementwise and linear algebra.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcast a 1 x n row over a
Var transpose(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var mul_const(const Var& a, const Matrix& mask);  // elementwise by a constant
Var grad_reverse(const Var& a);  // identity forward, negated gradient

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);  // B x n -> B x 1
Var frobenius_norm(const Var& a);

// Shape manipulation.
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Index start, Index count);
Var gather_rows(const Var& table, std::span<const int> ids);
Var select_rows(const Var& a, std::span<const Index> rows);
/// Averages consecutive row segments: rows [offsets[i], offsets[i+1]) -> row i.
Var segment_mean(const Var& a, std::span<const Index> offsets);

// Losses and kernels.
/// Row-wise log softmax evaluated at labels[i]; returns a B x 1 column.
Var log_softmax_pick(const Var& logits, std::span<const int> labels);
/// Mean binary cross-entropy between sigmoid(logits) and targets in [0,1].
Var bce_with_logits(const Var& logits, const Matrix& targets);
/// Pairwise squared Euclidean distances between rows: n x m.
Var pairwise_sqdist(const Var& a, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(double s, const Var& a);

}  // namespace diva::ag
