#include "higformer/model.hpp"

#include <algorithm>

namespace higformer {

const std::vector<std::string>& player_encoder_groups() {
  static const std::vector<std::string> g{groups::kTypeTables, groups::kGlobalEncoder, groups::kLocalEncoder};
  return g;
}

const std::vector<std::string>& stage2_groups() {
  static const std::vector<std::string> g{groups::kGate, groups::kTeamEmbeddings, groups::kTeamEncoder,
                                          groups::kMatchNet};
  return g;
}

HigFormer::HigFormer(const ModelConfig& config, TeamInteractionGraph team_graph, std::uint64_t seed)
    : config_(config), seed_(seed), team_graph_(std::move(team_graph)) {
  config_.validate();
  nn::Initializer init(seed);
  player_ = PlayerNet(store_, init, config_);
  team_ = TeamNet(store_, init, config_, team_graph_.num_nodes());
  match_ = MatchNet(store_, init, config_);
}

std::vector<int> HigFormer::slots_in(const std::vector<std::string>& groups) const {
  std::vector<int> out;
  for (const auto& g : groups) {
    const auto s = store_.slots_in_group(g);
    out.insert(out.end(), s.begin(), s.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ag::Matrix HigFormer::team_representation() const {
  ag::Tape tape;
  return team_.encode_teams(tape, store_, team_graph_).output.value();
}

}  // namespace higformer
