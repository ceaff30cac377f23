#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "higformer/dataset.hpp"
#include "higformer/embedding_store.hpp"
#include "higformer/graph.hpp"
#include "higformer/match_net.hpp"
#include "higformer/model.hpp"

namespace higformer {

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 1e-3;
  /// Both step counts are optimizer steps, one batch each.
  int stage1_steps = 2328;
  int stage2_steps = 2134;
  int history_length = 10;  // T
  int batch_size = 32;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  bool stage1_weighted_sampler = true;
  bool stage2_weighted_sampler = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

double mse_loss(double y, double y_hat);

/// Draws example indices with replacement, each with weight 1 / frequency of its class.
class WeightedSampler {
 public:
  WeightedSampler(std::span<const Outcome> labels, std::uint64_t seed, bool weighted = true);

  /// Per-example weights, normalized to sum 1.
  const std::vector<double>& weights() const { return weights_; }
  /// Per-class weight before normalization: 1 / count, 0 for absent classes.
  const std::array<double, 3>& class_weights() const { return class_weights_; }
  std::size_t next();
  std::vector<std::size_t> draw(std::size_t n);
  std::string rng_state() const;

 private:
  std::vector<double> weights_;
  std::array<double, 3> class_weights_{};
  std::mt19937_64 rng_;
  std::discrete_distribution<std::size_t> dist_;
};

using ProgressFn = std::function<void(std::string_view stage, int step, double loss)>;

struct Stage1Example {
  GraphInput graph;
  double target = 0.5;
  Outcome label = Outcome::kDraw;
};

struct Stage1Result {
  int steps = 0;
  std::vector<double> global_loss;  // batch loss per step
  std::vector<double> local_loss;
  /// Mean squared error over every example after the last step.
  double global_mse = 0.0;
  double local_mse = 0.0;
  std::string sampler_state;
};

std::vector<Stage1Example> stage1_examples(const Dataset& data, const std::map<MatchId, CachedGraph>& graphs);

/// Trains each enabled expert separately through a temporary readout head
/// (class token for the global path, node mean for the local path, then a
/// linear layer and a sigmoid). The heads are discarded afterwards. Throws
/// TrainingError on a non-finite loss before any parameter is touched.
Stage1Result stage1_pretrain(HigFormer& model, std::span<const Stage1Example> examples, const TrainConfig& config,
                             const ProgressFn& progress = {});

/// Global and local embeddings for every (player, match) participation.
EmbeddingStore precompute_embeddings(const HigFormer& model, const Dataset& data,
                                     const std::map<MatchId, CachedGraph>& graphs);

/// The rostered players' stored histories before `match`, home first.
MatchInput build_match_input(const HigFormer& model, const EmbeddingStore& store, const Dataset& data,
                             const MatchRecord& match, std::size_t history_length);

struct Stage2Result {
  int steps = 0;
  std::vector<double> loss;
  /// Norm of the gradient reaching frozen groups, per step. Must be zero.
  std::vector<double> frozen_grad_norm;
  std::string sampler_state;
};

/// Optimizes gate, team network, and match network on the training matches.
/// Player encoder groups are frozen on the tape.
Stage2Result stage2_train(HigFormer& model, const EmbeddingStore& store, const Dataset& data,
                          const TrainConfig& config, const ProgressFn& progress = {});

MatchPrediction predict_match(const HigFormer& model, const ag::Matrix& team_representation,
                              const MatchInput& input);

std::vector<MatchPrediction> predict_matches(const HigFormer& model, const EmbeddingStore& store,
                                             const Dataset& data, std::span<const MatchRecord> matches,
                                             std::size_t history_length);

}  // namespace higformer
