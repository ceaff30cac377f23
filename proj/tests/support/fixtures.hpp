#pragma once

#include <random>

#include "higformer/graph.hpp"
#include "higformer/match_net.hpp"
#include "higformer/model.hpp"
#include "higformer/player_net.hpp"
#include "higformer/synthetic.hpp"

namespace fixtures {

using namespace higformer;

/// Two home and two away players with pass and defense edges.
inline PlayerInteractionGraph four_node_graph() {
  PlayerInteractionGraph g;
  g.match_id = 1;
  g.nodes = {{10, NodeType::kRed}, {11, NodeType::kRed}, {20, NodeType::kBlue}, {21, NodeType::kBlue}};
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> d(0, 12);
  for (int i = 0; i < 4; ++i) {
    EventCountVector c;
    for (auto& v : c.counts) v = d(rng);
    g.node_features.push_back(c);
  }
  g.edges = {{0, 1, EdgeType::kPass, 3}, {2, 3, EdgeType::kPass, 1}, {0, 2, EdgeType::kDefense, 2},
             {3, 1, EdgeType::kDefense, 1}};
  return g;
}

inline GraphInput graph_input(const PlayerInteractionGraph& g, int d_id = kDefaultIdentifierDim) {
  return GraphInput::from(g, laplacian_node_identifiers(g, d_id));
}

inline TeamInteractionGraph three_team_graph() {
  TeamInteractionGraph g;
  g.teams = {1, 2, 3};
  g.edges = {{0, 1, 0.75}, {2, 1, 0.6}};
  return g;
}

/// Three players per side with history lengths (3, 1, 0) and (2, 4, 1).
inline MatchInput six_player_match(Eigen::Index width, std::uint64_t seed = 6) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> c(0, 9);
  MatchInput in;
  in.home_team = 0;
  in.away_team = 1;
  const int lengths[6] = {3, 1, 0, 2, 4, 1};
  for (int i = 0; i < 6; ++i) {
    PlayerSlot s;
    s.player_id = 100 + i;
    s.home = i < 3;
    s.global = ag::Matrix(lengths[i], width).unaryExpr([&](double) { return n(rng); });
    s.local = ag::Matrix(lengths[i], width).unaryExpr([&](double) { return n(rng); });
    s.features = ag::Matrix(lengths[i], 10).unaryExpr([&](double) { return std::log1p(c(rng)); });
    in.players.push_back(std::move(s));
  }
  return in;
}

inline SyntheticLeague small_league(int teams = 4, int rounds = 6, std::uint64_t seed = 11) {
  SynthConfig c;
  c.n_teams = teams;
  c.n_rounds = rounds;
  c.seed = seed;
  return synthesize_league(c);
}

/// Copy of `data` where `player` keeps only their latest appearance, so every
/// earlier fixture sees them without history.
inline Dataset with_late_debut(const Dataset& data, PlayerId player) {
  const auto last = data.appearances(player).back();
  auto lines = data.all_lines();
  for (auto& [id, ls] : lines) {
    if (id == last) continue;
    std::erase_if(ls, [&](const PlayerMatchLine& l) { return l.player_id == player; });
  }
  return Dataset(data.train(), data.test(), std::move(lines), data.options());
}

/// Narrow, shallow network for pipeline tests.
inline ModelConfig tiny_model() {
  ModelConfig c;
  c.hidden = 8;
  c.out_dim = 8;
  c.heads = 2;
  c.match_heads = 2;
  c.global_layers = 1;
  c.local_layers = 1;
  c.team_layers = 1;
  c.gate_hidden = 8;
  return c;
}

}  // namespace fixtures
