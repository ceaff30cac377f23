#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "higformer/graph.hpp"
#include "higformer/match_net.hpp"
#include "higformer/model_config.hpp"
#include "higformer/nn.hpp"
#include "higformer/player_net.hpp"
#include "higformer/team_net.hpp"

namespace higformer {

/// Groups owned by the player encoders; frozen during the second stage.
const std::vector<std::string>& player_encoder_groups();
/// Groups optimized during the second stage.
const std::vector<std::string>& stage2_groups();

/// All networks plus the shared parameter store and the team graph they were built for.
class HigFormer {
 public:
  HigFormer(const ModelConfig& config, TeamInteractionGraph team_graph, std::uint64_t seed);

  HigFormer(const HigFormer&) = delete;
  HigFormer& operator=(const HigFormer&) = delete;
  HigFormer(HigFormer&&) = default;
  HigFormer& operator=(HigFormer&&) = default;

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  const PlayerNet& player_net() const { return player_; }
  const TeamNet& team_net() const { return team_; }
  const MatchNet& match_net() const { return match_; }
  const TeamInteractionGraph& team_graph() const { return team_graph_; }

  std::vector<int> slots_in(const std::vector<std::string>& groups) const;

  /// Team representation on a fresh tape, as plain values.
  ag::Matrix team_representation() const;

 private:
  ModelConfig config_;
  std::uint64_t seed_ = 0;
  TeamInteractionGraph team_graph_;
  nn::ParameterStore store_;
  PlayerNet player_;
  TeamNet team_;
  MatchNet match_;
};

}  // namespace higformer
