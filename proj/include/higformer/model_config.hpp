#pragma once

#include <array>
#include <string>

#include <json.hpp>

#include "higformer/dataset.hpp"

namespace higformer {

enum class LossMode { kMseTargets, kCrossEntropy };

/// Class boundaries on the home-win score: lose below `draw_from`,
/// draw in [draw_from, win_from), win at or above `win_from`.
struct Thresholds {
  double draw_from = 4.0 / 7.0;
  double win_from = 5.0 / 7.0;
};

/// Architecture and ablation switches shared by every network.
struct ModelConfig {
  int id_dim = 8;
  int hidden = 64;
  int out_dim = 16;
  int global_layers = 3;
  int local_layers = 3;
  int team_layers = 3;
  int heads = 4;
  int ff_multiplier = 2;
  int match_layers = 1;
  int match_heads = 4;
  int gate_hidden = 64;
  /// 0: the prediction head is a single linear layer.
  int head_hidden = 0;
  double leaky_slope = 0.2;
  bool use_global = true;
  bool use_local = true;
  bool use_player_net = true;
  bool use_team_net = true;
  bool team_rate_bias = true;
  LossMode loss_mode = LossMode::kMseTargets;
  Thresholds thresholds;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Ordinal regression target: win 1, draw 0.5, lose 0.
double outcome_to_target(Outcome label);

/// Maps a home-win score in [0, 1] to a class; boundary values go to the higher class.
Outcome classify(double y_hat, const Thresholds& thresholds = {});

}  // namespace higformer
