#include "higformer/model_config.hpp"

#include <cmath>

#include "higformer/errors.hpp"

namespace higformer {

void ModelConfig::validate() const {
  if (id_dim <= 0 || hidden <= 0 || out_dim <= 0) throw ConfigError("widths must be positive");
  if (global_layers <= 0 || local_layers <= 0 || team_layers <= 0 || match_layers <= 0) {
    throw ConfigError("layer counts must be positive");
  }
  if (heads <= 0 || hidden % heads != 0) throw ConfigError("hidden width must be divisible by heads");
  if (match_heads <= 0 || out_dim % match_heads != 0) {
    throw ConfigError("output width must be divisible by match_heads");
  }
  if (ff_multiplier <= 0 || gate_hidden <= 0 || head_hidden < 0) throw ConfigError("bad layer widths");
  if (use_player_net && !use_global && !use_local) {
    throw ConfigError("cannot disable both experts while the player network is enabled");
  }
  if (!(thresholds.draw_from > 0.0 && thresholds.draw_from <= thresholds.win_from &&
        thresholds.win_from < 1.0)) {
    throw ConfigError("thresholds must satisfy 0 < draw_from <= win_from < 1");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"idDim", c.id_dim},
       {"hidden", c.hidden},
       {"outDim", c.out_dim},
       {"globalLayers", c.global_layers},
       {"localLayers", c.local_layers},
       {"teamLayers", c.team_layers},
       {"heads", c.heads},
       {"ffMultiplier", c.ff_multiplier},
       {"matchLayers", c.match_layers},
       {"matchHeads", c.match_heads},
       {"gateHidden", c.gate_hidden},
       {"headHidden", c.head_hidden},
       {"leakySlope", c.leaky_slope},
       {"useGlobal", c.use_global},
       {"useLocal", c.use_local},
       {"usePlayerNet", c.use_player_net},
       {"useTeamNet", c.use_team_net},
       {"teamRateBias", c.team_rate_bias},
       {"lossMode", c.loss_mode == LossMode::kMseTargets ? "mse_targets" : "cross_entropy"},
       {"thresholds", {c.thresholds.draw_from, c.thresholds.win_from}}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.id_dim = j.value("idDim", d.id_dim);
  c.hidden = j.value("hidden", d.hidden);
  c.out_dim = j.value("outDim", d.out_dim);
  c.global_layers = j.value("globalLayers", d.global_layers);
  c.local_layers = j.value("localLayers", d.local_layers);
  c.team_layers = j.value("teamLayers", d.team_layers);
  c.heads = j.value("heads", d.heads);
  c.ff_multiplier = j.value("ffMultiplier", d.ff_multiplier);
  c.match_layers = j.value("matchLayers", d.match_layers);
  c.match_heads = j.value("matchHeads", d.match_heads);
  c.gate_hidden = j.value("gateHidden", d.gate_hidden);
  c.head_hidden = j.value("headHidden", d.head_hidden);
  c.leaky_slope = j.value("leakySlope", d.leaky_slope);
  c.use_global = j.value("useGlobal", d.use_global);
  c.use_local = j.value("useLocal", d.use_local);
  c.use_player_net = j.value("usePlayerNet", d.use_player_net);
  c.use_team_net = j.value("useTeamNet", d.use_team_net);
  c.team_rate_bias = j.value("teamRateBias", d.team_rate_bias);
  const auto mode = j.value("lossMode", std::string("mse_targets"));
  if (mode == "mse_targets") {
    c.loss_mode = LossMode::kMseTargets;
  } else if (mode == "cross_entropy") {
    c.loss_mode = LossMode::kCrossEntropy;
  } else {
    throw ConfigError("unknown lossMode '" + mode + "'");
  }
  if (auto it = j.find("thresholds"); it != j.end()) {
    const auto t = it->get<std::array<double, 2>>();
    c.thresholds = {t[0], t[1]};
  } else {
    c.thresholds = d.thresholds;
  }
}

double outcome_to_target(Outcome label) {
  switch (label) {
    case Outcome::kWin:
      return 1.0;
    case Outcome::kDraw:
      return 0.5;
    case Outcome::kLose:
      return 0.0;
  }
  return 0.5;
}

Outcome classify(double y_hat, const Thresholds& thresholds) {
  if (!(y_hat >= 0.0 && y_hat <= 1.0)) {
    throw DomainError("prediction " + std::to_string(y_hat) + " outside [0, 1]");
  }
  if (y_hat >= thresholds.win_from) return Outcome::kWin;
  if (y_hat >= thresholds.draw_from) return Outcome::kDraw;
  return Outcome::kLose;
}

}  // namespace higformer
