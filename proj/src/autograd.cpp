#include "higformer/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace higformer::ag {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(int slot, const Matrix& value) {
  if (auto it = slot_to_node_.find(slot); it != slot_to_node_.end()) return Var(this, it->second);
  const bool frozen = std::find(frozen_.begin(), frozen_.end(), slot) != frozen_.end();
  nodes_.push_back(Node{value, Matrix(), !frozen, nullptr});
  const int id = static_cast<int>(nodes_.size() - 1);
  slot_to_node_.emplace(slot, id);
  return Var(this, id);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool grad_needed = false;
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw std::logic_error("ag: mixing variables from different tapes");
    grad_needed = grad_needed || needs_grad(in.id_);
  }
  nodes_.push_back(Node{std::move(value), Matrix(), grad_needed, grad_needed ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(const Var& output) {
  if (output.tape_ != this) throw std::logic_error("ag: output belongs to another tape");
  const auto& out = nodes_[static_cast<std::size_t>(output.id_)];
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw std::logic_error("ag: backward() needs a 1x1 output");
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!out.requires_grad) return;
  nodes_[static_cast<std::size_t>(output.id_)].grad = Matrix::Ones(1, 1);
  for (int id = output.id_; id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.backward && node.grad.size() != 0) node.backward(*this, id);
  }
}

std::vector<std::pair<int, const Matrix*>> Tape::parameter_gradients() const {
  std::vector<std::pair<int, const Matrix*>> out;
  for (const auto& [slot, id] : slot_to_node_) {
    const auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.requires_grad && node.grad.size() != 0) out.emplace_back(slot, &node.grad);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("ag::") + op + ": shape mismatch");
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("ag::matmul: inner dimension mismatch");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const auto& g = t.upstream(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.upstream(self));
    t.accumulate(ib, t.upstream(self));
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.upstream(self));
    if (t.needs_grad(ib)) t.accumulate(ib, -t.upstream(self));
  });
}

Var hadamard(const Var& a, const Var& b) {
  check_same_shape(a, b, "hadamard");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const auto& g = t.upstream(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(const Var& a, double s) {
  const int ia = a.id();
  return a.tape().record(a.value() * s, {a}, [ia, s](Tape& t, int self) {
    t.accumulate(ia, t.upstream(self) * s);
  });
}

Var transpose(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().transpose(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.upstream(self).transpose());
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("ag::add_row: bad row shape");
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const auto& g = t.upstream(self);
    t.accumulate(ia, g);
    if (t.needs_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var scale_rows(const Var& a, const Var& w) {
  if (w.cols() != 1 || w.rows() != a.rows()) throw std::invalid_argument("ag::scale_rows: bad weight shape");
  const int ia = a.id(), iw = w.id();
  Matrix out = w.value().col(0).asDiagonal() * a.value();
  return a.tape().record(std::move(out), {a, w}, [ia, iw](Tape& t, int self) {
    const auto& g = t.upstream(self);
    if (t.needs_grad(ia)) t.accumulate(ia, t.value(iw).col(0).asDiagonal() * g);
    if (t.needs_grad(iw)) t.accumulate(iw, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

Var outer_sum(const Var& col, const Var& row) {
  if (col.cols() != 1 || row.rows() != 1) throw std::invalid_argument("ag::outer_sum: bad shapes");
  const int ic = col.id(), ir = row.id();
  Matrix out = col.value().replicate(1, row.cols()).rowwise() + row.value().row(0);
  return col.tape().record(std::move(out), {col, row}, [ic, ir](Tape& t, int self) {
    const auto& g = t.upstream(self);
    if (t.needs_grad(ic)) t.accumulate(ic, g.rowwise().sum());
    if (t.needs_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ag::hconcat: no inputs");
  const auto rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("ag::hconcat: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id(), c);
    c += p.cols();
  }
  return parts[0].tape().record(std::move(out), parts, [spans](Tape& t, int self) {
    const auto& g = t.upstream(self);
    for (const auto& [id, start] : spans) {
      if (t.needs_grad(id)) t.accumulate(id, g.middleCols(start, t.value(id).cols()));
    }
  });
}

Var vconcat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ag::vconcat: no inputs");
  const auto cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("ag::vconcat: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), r);
    r += p.rows();
  }
  return parts[0].tape().record(std::move(out), parts, [spans](Tape& t, int self) {
    const auto& g = t.upstream(self);
    for (const auto& [id, start] : spans) {
      if (t.needs_grad(id)) t.accumulate(id, g.middleRows(start, t.value(id).rows()));
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("ag::slice_rows");
  const int ia = a.id();
  return a.tape().record(a.value().middleRows(start, count), {a}, [ia, start, count](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    Matrix g = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
    g.middleRows(start, count) = t.upstream(self);
    t.accumulate(ia, g);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("ag::slice_cols");
  const int ia = a.id();
  return a.tape().record(a.value().middleCols(start, count), {a}, [ia, start, count](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    Matrix g = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
    g.middleCols(start, count) = t.upstream(self);
    t.accumulate(ia, g);
  });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  std::vector<int> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) throw std::out_of_range("ag::gather_rows");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  }
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, idx](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const auto& g = t.upstream(self);
    Matrix acc = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) acc.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(ia, acc);
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw std::invalid_argument("ag::mean_rows: empty input");
  const int ia = a.id();
  const double n = static_cast<double>(a.rows());
  return a.tape().record(a.value().colwise().mean(), {a}, [ia, n](Tape& t, int self) {
    t.accumulate(ia, (t.upstream(self) / n).replicate(t.value(ia).rows(), 1));
  });
}

Var sum(const Var& a) {
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, int self) {
    const double g = t.upstream(self)(0, 0);
    t.accumulate(ia, Matrix::Constant(t.value(ia).rows(), t.value(ia).cols(), g));
  });
}

Var elu(const Var& a, double alpha) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([alpha](double x) { return x > 0 ? x : alpha * std::expm1(x); });
  return a.tape().record(std::move(out), {a}, [ia, alpha](Tape& t, int self) {
    Matrix d = t.value(ia).unaryExpr([alpha](double x) { return x > 0 ? 1.0 : alpha * std::exp(x); });
    t.accumulate(ia, t.upstream(self).cwiseProduct(d));
  });
}

Var leaky_relu(const Var& a, double slope) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  return a.tape().record(std::move(out), {a}, [ia, slope](Tape& t, int self) {
    Matrix d = t.value(ia).unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
    t.accumulate(ia, t.upstream(self).cwiseProduct(d));
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  });
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, int self) {
    Matrix d = t.value(ia).unaryExpr([](double x) {
      const double u = kGeluC * (x + kGeluA * x * x * x);
      const double th = std::tanh(u);
      return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    });
    t.accumulate(ia, t.upstream(self).cwiseProduct(d));
  });
}

Var sigmoid(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto& y = t.value(self);
    t.accumulate(ia, t.upstream(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var square(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().cwiseAbs2(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, 2.0 * t.upstream(self).cwiseProduct(t.value(ia)));
  });
}

Var softmax_rows(const Var& a, const Matrix* mask) {
  if (mask && (mask->rows() != a.rows() || mask->cols() != a.cols())) {
    throw std::invalid_argument("ag::softmax_rows: mask shape mismatch");
  }
  const auto& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j) != 0.0) mx = std::max(mx, x(i, j));
    }
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j) != 0.0) {
        y(i, j) = std::exp(x(i, j) - mx);
        z += y(i, j);
      }
    }
    y.row(i) /= z;
  }
  const int ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, int self) {
    const auto& g = t.upstream(self);
    const auto& y = t.value(self);
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(ia, y.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

Var log_softmax_rows(const Var& a) {
  const auto& x = a.value();
  const Eigen::VectorXd mx = x.rowwise().maxCoeff();
  Matrix shifted = x - mx.replicate(1, x.cols());
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  Matrix out = shifted - lse.replicate(1, x.cols());
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto& g = t.upstream(self);
    const Matrix p = t.value(self).array().exp();
    const Eigen::VectorXd gs = g.rowwise().sum();
    t.accumulate(ia, g - p.cwiseProduct(gs.replicate(1, g.cols())));
  });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  const auto& x = a.value();
  const auto c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
    throw std::invalid_argument("ag::layer_norm_rows: bad gain/bias shape");
  }
  const Eigen::VectorXd mu = x.rowwise().mean();
  Matrix centered = x - mu.replicate(1, c);
  const Eigen::VectorXd inv_std =
      ((centered.cwiseAbs2().rowwise().sum() / static_cast<double>(c)).array() + eps).rsqrt();
  Matrix xhat = inv_std.asDiagonal() * centered;
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const int ia = a.id(), ig = gain.id(), ib = bias.id();
  return a.tape().record(std::move(out), {a, gain, bias},
                         [ia, ig, ib, xhat = std::move(xhat), inv_std](Tape& t, int self) {
    const auto& g = t.upstream(self);
    const auto cols = static_cast<double>(g.cols());
    if (t.needs_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
    if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
    if (t.needs_grad(ia)) {
      const Matrix dxhat = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
      const Eigen::VectorXd m1 = dxhat.rowwise().sum() / cols;
      const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / cols;
      Matrix dx = dxhat - m1.replicate(1, g.cols()) - xhat.cwiseProduct(m2.replicate(1, g.cols()));
      t.accumulate(ia, inv_std.asDiagonal() * dx);
    }
  });
}

}  // namespace higformer::ag
