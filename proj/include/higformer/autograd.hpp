#pragma once

// Small reverse-mode automatic differentiation over dense Eigen matrices.
// A Tape records every operation of one forward pass; backward() walks it in
// reverse and accumulates gradients into the nodes that need them.

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace higformer::ag {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Called with the tape and the node's own id during backward().
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to an external parameter slot. Repeated calls with the same
  /// slot return the same node. Frozen slots become constants.
  Var parameter(int slot, const Matrix& value);
  void freeze_slot(int slot) { frozen_.push_back(slot); }

  /// Records a node. `inputs` decide whether it needs a gradient at all.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and back-propagates.
  void backward(const Var& output);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient of the node produced by the last backward(); empty if never reached.
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Matrix& grad(const Var& v) const { return grad(v.id()); }
  /// Upstream gradient of a node while its backward closure runs.
  const Matrix& upstream(int id) const { return grad(id); }

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  /// (slot, gradient) for every parameter leaf reached by backward().
  std::vector<std::pair<int, const Matrix*>> parameter_gradients() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<int, int> slot_to_node_;
  std::vector<int> frozen_;
};

// ---- elementwise and linear algebra -------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var transpose(const Var& a);
/// Adds a 1 x c row to every row of a.
Var add_row(const Var& a, const Var& row);
/// Multiplies row i of a by w(i, 0); w is r x 1.
Var scale_rows(const Var& a, const Var& w);
/// out(i, j) = col(i, 0) + row(0, j).
Var outer_sum(const Var& col, const Var& row);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return matmul(a, b); }

// ---- shape ----------------------------------------------------------------

Var hconcat(std::span<const Var> parts);
Var vconcat(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const int> rows);

// ---- reductions -------------------------------------------------------------

/// 1 x c mean over rows.
Var mean_rows(const Var& a);
/// 1 x 1 sum of all entries.
Var sum(const Var& a);

// ---- nonlinearities ------------------------------------------------------------

Var elu(const Var& a, double alpha = 1.0);
Var leaky_relu(const Var& a, double slope);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);

/// Row-wise softmax. With a mask, entries where mask == 0 are exactly zero
/// and fully masked rows are all zero.
Var softmax_rows(const Var& a, const Matrix* mask = nullptr);
Var log_softmax_rows(const Var& a);

/// Row-wise layer normalization with 1 x c gain and bias.
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);

}  // namespace higformer::ag
