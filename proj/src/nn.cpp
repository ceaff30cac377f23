#include "higformer/nn.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace higformer::nn {

int ParameterStore::add(std::string group, std::string name, Matrix value) {
  if (find(name) >= 0) throw std::invalid_argument("duplicate parameter name " + name);
  params_.push_back({std::move(group), std::move(name), std::move(value)});
  return static_cast<int>(params_.size() - 1);
}

int ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<int> ParameterStore::slots_in_group(const std::string& group) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].group == group) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<std::string> ParameterStore::groups() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& p : params_) {
    if (seen.insert(p.group).second) out.push_back(p.group);
  }
  return out;
}

std::size_t ParameterStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void Gradients::add_from(const ag::Tape& tape, double weight) {
  for (const auto& [slot, g] : tape.parameter_gradients()) {
    auto& dst = grads_.at(static_cast<std::size_t>(slot));
    if (dst.size() == 0) {
      dst = *g * weight;
    } else {
      dst += *g * weight;
    }
  }
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < other.grads_.size(); ++i) {
    if (other.grads_[i].size() == 0) continue;
    if (grads_[i].size() == 0) {
      grads_[i] = other.grads_[i];
    } else {
      grads_[i] += other.grads_[i];
    }
  }
}

void Gradients::scale(double s) {
  for (auto& g : grads_) {
    if (g.size() != 0) g *= s;
  }
}

double Gradients::norm_of(const std::vector<int>& slots) const {
  double sq = 0.0;
  for (int s : slots) {
    const auto& g = grads_.at(static_cast<std::size_t>(s));
    if (g.size() != 0) sq += g.squaredNorm();
  }
  return std::sqrt(sq);
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) {
    if (g.size() != 0) sq += g.squaredNorm();
  }
  return std::sqrt(sq);
}

Matrix Initializer::fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng_);
  }
  return m;
}

Matrix Initializer::normal(Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng_);
  }
  return m;
}

Linear Linear::create(ParameterStore& store, Initializer& init, const std::string& group,
                      const std::string& name, Eigen::Index in, Eigen::Index out, bool with_bias) {
  Linear l;
  l.weight = store.add(group, name + ".weight", init.fan_in_uniform(in, out, in));
  if (with_bias) l.bias = store.add(group, name + ".bias", Matrix::Zero(1, out));
  return l;
}

ag::Var Linear::operator()(ag::Tape& tape, const ParameterStore& store, const ag::Var& x) const {
  auto y = ag::matmul(x, param(tape, store, weight));
  if (bias >= 0) y = ag::add_row(y, param(tape, store, bias));
  return y;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& group, const std::string& name,
                            Eigen::Index width) {
  LayerNorm n;
  n.gain = store.add(group, name + ".gain", Matrix::Ones(1, width));
  n.bias = store.add(group, name + ".bias", Matrix::Zero(1, width));
  return n;
}

ag::Var LayerNorm::operator()(ag::Tape& tape, const ParameterStore& store, const ag::Var& x) const {
  return ag::layer_norm_rows(x, param(tape, store, gain), param(tape, store, bias));
}

TransformerBlock TransformerBlock::create(ParameterStore& store, Initializer& init,
                                          const std::string& group, const std::string& name,
                                          Eigen::Index width, int heads, int ff_multiplier) {
  if (heads <= 0 || width % heads != 0) {
    throw std::invalid_argument("transformer width must be divisible by the head count");
  }
  TransformerBlock b;
  b.heads = heads;
  b.attn_norm = LayerNorm::create(store, group, name + ".attn_norm", width);
  b.query = Linear::create(store, init, group, name + ".query", width, width);
  b.key = Linear::create(store, init, group, name + ".key", width, width);
  b.value = Linear::create(store, init, group, name + ".value", width, width);
  b.out = Linear::create(store, init, group, name + ".out", width, width);
  b.ff_norm = LayerNorm::create(store, group, name + ".ff_norm", width);
  b.ff_in = Linear::create(store, init, group, name + ".ff_in", width, width * ff_multiplier);
  b.ff_out = Linear::create(store, init, group, name + ".ff_out", width * ff_multiplier, width);
  return b;
}

ag::Var TransformerBlock::operator()(ag::Tape& tape, const ParameterStore& store, const ag::Var& x,
                                     std::vector<Matrix>* attention) const {
  const auto width = x.cols();
  const auto head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const auto normed = attn_norm(tape, store, x);
  const auto q = query(tape, store, normed);
  const auto k = key(tape, store, normed);
  const auto v = value(tape, store, normed);
  std::vector<ag::Var> head_out;
  head_out.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto qh = ag::slice_cols(q, h * head_dim, head_dim);
    const auto kh = ag::slice_cols(k, h * head_dim, head_dim);
    const auto vh = ag::slice_cols(v, h * head_dim, head_dim);
    const auto scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
    const auto weights = ag::softmax_rows(scores);
    if (attention) attention->push_back(weights.value());
    head_out.push_back(ag::matmul(weights, vh));
  }
  const auto mixed = out(tape, store, ag::hconcat(head_out));
  const auto h1 = ag::add(x, mixed);
  const auto ff = ff_out(tape, store, ag::gelu(ff_in(tape, store, ff_norm(tape, store, h1))));
  return ag::add(h1, ff);
}

Adam::Adam(const ParameterStore& store, std::vector<int> slots, AdamConfig config)
    : slots_(std::move(slots)), config_(config) {
  for (int s : slots_) {
    const auto& v = store.at(s).value;
    m_.push_back(Matrix::Zero(v.rows(), v.cols()));
    v_.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
}

void Adam::step(ParameterStore& store, const Gradients& grads) {
  ++t_;
  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = grads.norm_of(slots_);
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const int s = slots_[i];
    if (!grads.touched(s)) continue;
    const Matrix g = grads[s] * clip;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
    auto& p = store.at(s).value;
    p.array() -= config_.learning_rate * (m_[i].array() / bc1) /
                 ((v_[i].array() / bc2).sqrt() + config_.epsilon);
  }
}

}  // namespace higformer::nn
