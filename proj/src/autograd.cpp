#include "diva/autograd.hpp"

#include "diva/error.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

namespace diva::ag {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Matrix& Node::grad_buffer() {
  if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
  return grad;
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw Error("item() called on a non-scalar value");
  return node_->value(0, 0);
}

namespace {

Var make(Matrix value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

// Parent i of a node, or nullptr when it does not need a gradient.
Node* needs(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Var leaf(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) throw Error("backward() requires a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error("matmul: inner dimension mismatch (" + std::to_string(a.cols()) + " vs " +
                std::to_string(b.rows()) + ")");
  }
  return make(a.value() * b.value(), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (Node* pa = needs(self, 0)) pa->grad_buffer().noalias() += self.grad * bv.transpose();
    if (Node* pb = needs(self, 1)) pb->grad_buffer().noalias() += av.transpose() * self.grad;
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a, b}, [](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(self.grad);
    if (Node* pb = needs(self, 1)) pb->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a, b}, [](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(self.grad);
    if (Node* pb = needs(self, 1)) pb->accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (Node* pa = needs(self, 0)) pa->accumulate(self.grad.cwiseProduct(bv));
    if (Node* pb = needs(self, 1)) pb->accumulate(self.grad.cwiseProduct(av));
  });
}

Var scale(const Var& a, double s) {
  return make(a.value() * s, {a}, [s](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(self.grad * s);
  });
}

Var add_scalar(const Var& a, double s) {
  return make((a.value().array() + s).matrix(), {a}, [](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(self.grad);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw Error("add_row: row shape mismatch");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make(std::move(out), {a, row}, [](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(self.grad);
    if (Node* pr = needs(self, 1)) pr->accumulate(self.grad.colwise().sum());
  });
}

Var transpose(const Var& a) {
  return make(a.value().transpose(), {a}, [](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(self.grad.transpose());
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make(out, {a}, [out](Node& self) {
    if (Node* pa = needs(self, 0)) {
      pa->accumulate((self.grad.array() * (1.0 - out.array().square())).matrix());
    }
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make(out, {a}, [out](Node& self) {
    if (Node* pa = needs(self, 0)) {
      pa->accumulate((self.grad.array() * out.array() * (1.0 - out.array())).matrix());
    }
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  return make(out, {a}, [out](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(self.grad.cwiseProduct(out));
  });
}

Var log(const Var& a) {
  return make(a.value().array().log().matrix(), {a}, [](Node& self) {
    if (Node* pa = needs(self, 0)) {
      pa->accumulate((self.grad.array() / pa->value.array()).matrix());
    }
  });
}

Var square(const Var& a) {
  return make(a.value().array().square().matrix(), {a}, [](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(2.0 * self.grad.cwiseProduct(pa->value));
  });
}

Var mul_const(const Var& a, const Matrix& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) throw Error("mul_const: shape mismatch");
  return make(a.value().cwiseProduct(mask), {a}, [mask](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(self.grad.cwiseProduct(mask));
  });
}

Var grad_reverse(const Var& a) {
  return make(a.value(), {a}, [](Node& self) {
    if (Node* pa = needs(self, 0)) pa->accumulate(-self.grad);
  });
}

Var sum(const Var& a) {
  return make(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    if (Node* pa = needs(self, 0)) {
      pa->accumulate(Matrix::Constant(pa->value.rows(), pa->value.cols(), self.grad(0, 0)));
    }
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw Error("mean of an empty matrix");
  return make(Matrix::Constant(1, 1, a.value().sum() / n), {a}, [n](Node& self) {
    if (Node* pa = needs(self, 0)) {
      pa->accumulate(Matrix::Constant(pa->value.rows(), pa->value.cols(), self.grad(0, 0) / n));
    }
  });
}

Var row_sum(const Var& a) {
  return make(a.value().rowwise().sum(), {a}, [](Node& self) {
    if (Node* pa = needs(self, 0)) {
      pa->accumulate(self.grad.col(0).replicate(1, pa->value.cols()));
    }
  });
}

Var frobenius_norm(const Var& a) {
  const double norm = a.value().norm();
  return make(Matrix::Constant(1, 1, norm), {a}, [norm](Node& self) {
    if (Node* pa = needs(self, 0)) {
      // Subgradient 0 at the origin.
      if (norm > 0.0) pa->accumulate(pa->value * (self.grad(0, 0) / norm));
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> widths;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    widths.push_back(p.cols());
    at += p.cols();
  }
  return make(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
              [widths](Node& self) {
                Index offset = 0;
                for (std::size_t i = 0; i < widths.size(); ++i) {
                  if (Node* p = needs(self, i)) p->accumulate(self.grad.middleCols(offset, widths[i]));
                  offset += widths[i];
                }
              });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw Error("slice_cols: out of range");
  return make(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    if (Node* pa = needs(self, 0)) pa->grad_buffer().middleCols(start, count) += self.grad;
  });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  Matrix out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) throw Error("gather_rows: id out of range");
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make(std::move(out), {table}, [idx = std::move(idx)](Node& self) {
    if (Node* pt = needs(self, 0)) {
      Matrix& g = pt->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    }
  });
}

Var select_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw Error("select_rows: row out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return make(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    if (Node* pa = needs(self, 0)) {
      Matrix& g = pa->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    }
  });
}

Var segment_mean(const Var& a, std::span<const Index> offsets) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != a.rows()) {
    throw Error("segment_mean: offsets must span all rows");
  }
  const Index segments = static_cast<Index>(offsets.size()) - 1;
  Matrix out(segments, a.cols());
  for (Index s = 0; s < segments; ++s) {
    const Index begin = offsets[s];
    const Index len = offsets[s + 1] - begin;
    if (len <= 0) throw Error("segment_mean: empty segment");
    out.row(s) = a.value().middleRows(begin, len).colwise().mean();
  }
  std::vector<Index> off(offsets.begin(), offsets.end());
  return make(std::move(out), {a}, [off = std::move(off)](Node& self) {
    if (Node* pa = needs(self, 0)) {
      Matrix& g = pa->grad_buffer();
      for (std::size_t s = 0; s + 1 < off.size(); ++s) {
        const Index len = off[s + 1] - off[s];
        g.middleRows(off[s], len).rowwise() += self.grad.row(static_cast<Index>(s)) / static_cast<double>(len);
      }
    }
  });
}

Var log_softmax_pick(const Var& logits, std::span<const int> labels) {
  const Index rows = logits.rows();
  if (static_cast<Index>(labels.size()) != rows) throw Error("log_softmax_pick: label count mismatch");
  Matrix probs(rows, logits.cols());
  Matrix out(rows, 1);
  for (Index i = 0; i < rows; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= logits.cols()) throw Error("log_softmax_pick: label out of range");
    const double m = logits.value().row(i).maxCoeff();
    const auto shifted = (logits.value().row(i).array() - m).eval();
    const double lse = std::log(shifted.exp().sum());
    probs.row(i) = (shifted - lse).exp().matrix();
    out(i, 0) = shifted(label) - lse;
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return make(std::move(out), {logits}, [probs, lab = std::move(lab)](Node& self) {
    if (Node* pl = needs(self, 0)) {
      Matrix g = -probs;
      for (Index i = 0; i < g.rows(); ++i) g(i, lab[static_cast<std::size_t>(i)]) += 1.0;
      g.array().colwise() *= self.grad.col(0).array();
      pl->accumulate(g);
    }
  });
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw Error("bce_with_logits: shape mismatch");
  }
  const auto x = logits.value().array();
  const auto y = targets.array();
  // max(x,0) - x*y + log(1 + exp(-|x|))
  const double n = static_cast<double>(logits.value().size());
  const double loss = (x.max(0.0) - x * y + (1.0 + (-x.abs()).exp()).log()).sum() / n;
  Matrix probs = (1.0 / (1.0 + (-x).exp())).matrix();
  return make(Matrix::Constant(1, 1, loss), {logits}, [probs, targets, n](Node& self) {
    if (Node* pl = needs(self, 0)) pl->accumulate((probs - targets) * (self.grad(0, 0) / n));
  });
}

Var pairwise_sqdist(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw Error("pairwise_sqdist: width mismatch");
  const Vector an = a.value().rowwise().squaredNorm();
  const Vector bn = b.value().rowwise().squaredNorm();
  Matrix d = -2.0 * a.value() * b.value().transpose();
  d.colwise() += an;
  d.rowwise() += bn.transpose();
  d = d.cwiseMax(0.0);
  return make(std::move(d), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    const Matrix& g = self.grad;
    // d/da_i = 2 sum_j g_ij (a_i - b_j)
    if (Node* pa = needs(self, 0)) {
      Matrix ga = 2.0 * (g.rowwise().sum().asDiagonal() * av - g * bv);
      pa->accumulate(ga);
    }
    if (Node* pb = needs(self, 1)) {
      Matrix gb = 2.0 * (g.colwise().sum().transpose().asDiagonal() * bv - g.transpose() * av);
      pb->accumulate(gb);
    }
  });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace diva::ag
