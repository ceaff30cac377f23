#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "higformer/autograd.hpp"

namespace higformer::nn {

using ag::Matrix;

struct Parameter {
  std::string group;
  std::string name;  // unique, "group/..." by convention
  Matrix value;
};

/// Flat registry of every trainable tensor. A parameter's slot is its index
/// here and is what the autodiff tape and the optimizer key on.
class ParameterStore {
 public:
  int add(std::string group, std::string name, Matrix value);

  Parameter& at(int slot) { return params_.at(static_cast<std::size_t>(slot)); }
  const Parameter& at(int slot) const { return params_.at(static_cast<std::size_t>(slot)); }
  std::size_t size() const { return params_.size(); }
  int find(const std::string& name) const;  // -1 when absent
  std::vector<int> slots_in_group(const std::string& group) const;
  std::vector<std::string> groups() const;
  std::size_t num_values() const;

  const std::vector<Parameter>& all() const { return params_; }

 private:
  std::vector<Parameter> params_;
};

inline ag::Var param(ag::Tape& tape, const ParameterStore& store, int slot) {
  return tape.parameter(slot, store.at(slot).value);
}

/// Gradients indexed by parameter slot; untouched slots stay empty.
class Gradients {
 public:
  explicit Gradients(std::size_t n = 0) : grads_(n) {}
  void add_from(const ag::Tape& tape, double weight = 1.0);
  void add(const Gradients& other);
  void scale(double s);
  Matrix& operator[](int slot) { return grads_.at(static_cast<std::size_t>(slot)); }
  const Matrix& operator[](int slot) const { return grads_.at(static_cast<std::size_t>(slot)); }
  std::size_t size() const { return grads_.size(); }
  bool touched(int slot) const { return grads_.at(static_cast<std::size_t>(slot)).size() != 0; }
  double norm_of(const std::vector<int>& slots) const;
  double global_norm() const;

 private:
  std::vector<Matrix> grads_;
};

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in);
  Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev);

 private:
  std::mt19937_64 rng_;
};

/// y = x W + b with W stored in x out.
struct Linear {
  int weight = -1;
  int bias = -1;

  static Linear create(ParameterStore& store, Initializer& init, const std::string& group,
                       const std::string& name, Eigen::Index in, Eigen::Index out, bool with_bias = true);
  ag::Var operator()(ag::Tape& tape, const ParameterStore& store, const ag::Var& x) const;
};

struct LayerNorm {
  int gain = -1;
  int bias = -1;

  static LayerNorm create(ParameterStore& store, const std::string& group, const std::string& name,
                          Eigen::Index width);
  ag::Var operator()(ag::Tape& tape, const ParameterStore& store, const ag::Var& x) const;
};

/// Pre-norm transformer encoder block: multi-head self-attention then a
/// GELU feed-forward, each wrapped in a residual connection.
struct TransformerBlock {
  LayerNorm attn_norm;
  LayerNorm ff_norm;
  Linear query, key, value, out;
  Linear ff_in, ff_out;
  int heads = 1;

  static TransformerBlock create(ParameterStore& store, Initializer& init, const std::string& group,
                                 const std::string& name, Eigen::Index width, int heads,
                                 int ff_multiplier);

  /// When `attention` is non-null the per-head attention matrices are appended.
  ag::Var operator()(ag::Tape& tape, const ParameterStore& store, const ag::Var& x,
                     std::vector<Matrix>* attention = nullptr) const;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global-norm clip over the updated slots; <= 0 disables.
  double clip_norm = 5.0;
};

class Adam {
 public:
  Adam(const ParameterStore& store, std::vector<int> slots, AdamConfig config);

  /// Clips and applies one step to the managed slots only.
  void step(ParameterStore& store, const Gradients& grads);
  std::int64_t steps_taken() const { return t_; }
  const std::vector<int>& slots() const { return slots_; }

 private:
  std::vector<int> slots_;
  AdamConfig config_;
  std::vector<Matrix> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace higformer::nn
