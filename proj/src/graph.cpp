#include "higformer/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

#include "higformer/errors.hpp"

namespace higformer {
namespace {

using nlohmann::json;

constexpr double kTieTolerance = 1e-9;

void fix_sign(Eigen::VectorXd& v) {
  if (v.size() == 0) return;
  const double max_abs = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) >= max_abs - kTieTolerance) {
      if (v[i] < 0) v = -v;
      return;
    }
  }
}

bool lexicographically_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > kTieTolerance) return a[i] < b[i];
  }
  return false;
}

Eigen::MatrixXd binary_adjacency(const PlayerInteractionGraph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : graph.edges) {
    if (e.src == e.dst) continue;
    adj(e.src, e.dst) = 1.0;
    adj(e.dst, e.src) = 1.0;
  }
  return adj;
}

}  // namespace

std::optional<int> PlayerInteractionGraph::index_of(PlayerId player) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].player_id == player) return static_cast<int>(i);
  }
  return std::nullopt;
}

Eigen::MatrixXd PlayerInteractionGraph::feature_matrix() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(nodes.size()), static_cast<Eigen::Index>(kNumEventKinds));
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t k = 0; k < kNumEventKinds; ++k) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          static_cast<double>(node_features[i].counts[k]);
    }
  }
  return x;
}

PlayerInteractionGraph build_player_graph(const MatchRecord& match,
                                          std::span<const EventRecord> events,
                                          const GraphBuildOptions& options) {
  PlayerInteractionGraph g;
  g.match_id = match.match_id;
  std::unordered_map<PlayerId, int> index;
  auto add_nodes = [&](const std::vector<PlayerId>& players, NodeType type) {
    for (auto p : players) {
      index.emplace(p, static_cast<int>(g.nodes.size()));
      g.nodes.push_back({p, type});
    }
  };
  add_nodes(match.home_players, NodeType::kRed);
  add_nodes(match.away_players, NodeType::kBlue);
  g.node_features.resize(g.nodes.size());

  std::map<std::tuple<EdgeType, int, int>, std::int64_t> edge_counts;
  for (const auto& e : events) {
    if (e.match_id != match.match_id) continue;
    auto actor = index.find(e.actor_player_id);
    if (actor == index.end()) {
      if (options.drop_unlisted_events) continue;
      throw DataError("match " + std::to_string(match.match_id) + ": event by unlisted player " +
                      std::to_string(e.actor_player_id));
    }
    std::optional<int> counterpart;
    if (e.counterpart_player_id) {
      auto cp = index.find(*e.counterpart_player_id);
      if (cp == index.end()) {
        if (options.drop_unlisted_events) continue;
        throw DataError("match " + std::to_string(match.match_id) +
                        ": event references unlisted counterpart " +
                        std::to_string(*e.counterpart_player_id));
      }
      counterpart = cp->second;
    }
    ++g.node_features[static_cast<std::size_t>(actor->second)][e.kind];
    if (!counterpart || *counterpart == actor->second) continue;
    if (e.kind == EventKind::kPass) {
      ++edge_counts[{EdgeType::kPass, actor->second, *counterpart}];
    } else if (e.kind == EventKind::kDuel || e.kind == EventKind::kFoul) {
      ++edge_counts[{EdgeType::kDefense, actor->second, *counterpart}];
      if (options.mirror_defense_edges) ++edge_counts[{EdgeType::kDefense, *counterpart, actor->second}];
    }
  }
  for (const auto& [key, count] : edge_counts) {
    g.edges.push_back({std::get<1>(key), std::get<2>(key), std::get<0>(key), count});
  }
  return g;
}

Eigen::MatrixXd normalized_laplacian(const PlayerInteractionGraph& graph) {
  const Eigen::MatrixXd adj = binary_adjacency(graph);
  const auto n = adj.rows();
  const Eigen::VectorXd deg = adj.rowwise().sum();
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (deg[i] > 0) lap(i, i) = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (adj(i, j) != 0.0) lap(i, j) -= 1.0 / std::sqrt(deg[i] * deg[j]);
    }
  }
  return lap;
}

NodeIdentifierSet laplacian_node_identifiers(const PlayerInteractionGraph& graph, int d_id) {
  if (d_id <= 0) throw ConfigError("identifier dimension must be positive");
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  NodeIdentifierSet out;
  out.identifiers = Eigen::MatrixXd::Zero(n, d_id);
  out.eigenvalues.assign(static_cast<std::size_t>(d_id), 0.0);
  if (n == 0) return out;

  const Eigen::MatrixXd adj = binary_adjacency(graph);
  const Eigen::MatrixXd lap = normalized_laplacian(graph);

  // connected components by flood fill
  std::vector<int> component(static_cast<std::size_t>(n), -1);
  int n_components = 0;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (component[static_cast<std::size_t>(s)] >= 0) continue;
    std::vector<Eigen::Index> stack{s};
    component[static_cast<std::size_t>(s)] = n_components;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (Eigen::Index u = 0; u < n; ++u) {
        if (adj(v, u) != 0.0 && component[static_cast<std::size_t>(u)] < 0) {
          component[static_cast<std::size_t>(u)] = n_components;
          stack.push_back(u);
        }
      }
    }
    ++n_components;
  }

  struct Pair {
    double value;
    Eigen::VectorXd vector;
  };
  std::vector<Pair> pairs;
  for (int c = 0; c < n_components; ++c) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (component[static_cast<std::size_t>(i)] == c) members.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(members.size());
    if (m < 2) continue;
    Eigen::MatrixXd sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = lap(members[a], members[b]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sub);
    // ascending eigenvalues; column 0 is the trivial D^1/2 1 direction
    for (Eigen::Index k = 1; k < m; ++k) {
      Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
      for (Eigen::Index a = 0; a < m; ++a) full[members[a]] = solver.eigenvectors()(a, k);
      fix_sign(full);
      pairs.push_back({solver.eigenvalues()[k], std::move(full)});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (std::abs(a.value - b.value) > kTieTolerance) return a.value < b.value;
    return lexicographically_less(a.vector, b.vector);
  });
  const auto keep = std::min<std::size_t>(pairs.size(), static_cast<std::size_t>(d_id));
  for (std::size_t k = 0; k < keep; ++k) {
    out.identifiers.col(static_cast<Eigen::Index>(k)) = pairs[k].vector;
    out.eigenvalues[k] = pairs[k].value;
  }
  out.num_valid = static_cast<int>(keep);
  return out;
}

std::optional<int> TeamInteractionGraph::index_of(TeamId team) const {
  auto it = std::lower_bound(teams.begin(), teams.end(), team);
  if (it == teams.end() || *it != team) return std::nullopt;
  return static_cast<int>(it - teams.begin());
}

TeamInteractionGraph build_team_graph(std::span<const MatchRecord> train_matches,
                                      std::span<const TeamId> extra_teams) {
  std::set<TeamId> ids(extra_teams.begin(), extra_teams.end());
  // (low id, high id) -> {meetings, wins of low, wins of high}
  std::map<std::pair<TeamId, TeamId>, std::array<int, 3>> h2h;
  for (const auto& m : train_matches) {
    ids.insert(m.home_team_id);
    ids.insert(m.away_team_id);
    const bool home_is_low = m.home_team_id < m.away_team_id;
    auto& rec = h2h[{std::min(m.home_team_id, m.away_team_id), std::max(m.home_team_id, m.away_team_id)}];
    ++rec[0];
    if (m.label == Outcome::kWin) ++rec[home_is_low ? 1 : 2];
    if (m.label == Outcome::kLose) ++rec[home_is_low ? 2 : 1];
  }
  TeamInteractionGraph g;
  g.teams.assign(ids.begin(), ids.end());
  for (const auto& [pair, rec] : h2h) {
    if (rec[1] == rec[2]) continue;
    const bool low_dominates = rec[1] > rec[2];
    const auto src = *g.index_of(low_dominates ? pair.first : pair.second);
    const auto dst = *g.index_of(low_dominates ? pair.second : pair.first);
    const double rate = static_cast<double>(low_dominates ? rec[1] : rec[2]) / rec[0];
    g.edges.push_back({src, dst, rate});
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const TeamEdge& a, const TeamEdge& b) {
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  });
  return g;
}

std::string write_graph_cache(const CachedGraph& cached) {
  const auto& g = cached.graph;
  json doc;
  doc["version"] = kGraphCacheVersion;
  doc["matchId"] = g.match_id;
  json nodes = json::array();
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    nodes.push_back({{"playerId", g.nodes[i].player_id},
                     {"type", g.nodes[i].type == NodeType::kRed ? "red" : "blue"},
                     {"counts", g.node_features[i].counts}});
  }
  doc["nodes"] = nodes;
  json edges = json::array();
  for (const auto& e : g.edges) {
    edges.push_back({e.src, e.dst, e.type == EdgeType::kPass ? "pass" : "defense", e.count});
  }
  doc["edges"] = edges;
  const auto& ids = cached.identifiers;
  json rows = json::array();
  for (Eigen::Index i = 0; i < ids.identifiers.rows(); ++i) {
    rows.push_back(std::vector<double>(ids.identifiers.row(i).begin(), ids.identifiers.row(i).end()));
  }
  doc["identifiers"] = {{"dim", ids.identifiers.cols()},
                        {"numValid", ids.num_valid},
                        {"eigenvalues", ids.eigenvalues},
                        {"rows", rows}};
  return doc.dump();
}

CachedGraph read_graph_cache(std::string_view raw) {
  json doc;
  try {
    doc = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error& err) {
    throw ParseError(err.what(), 1);
  }
  if (doc.value("version", 0) != kGraphCacheVersion) throw SchemaError("unsupported graph cache version");
  CachedGraph out;
  auto& g = out.graph;
  g.match_id = doc.at("matchId").get<MatchId>();
  for (const auto& n : doc.at("nodes")) {
    const auto type = n.at("type").get<std::string>();
    if (type != "red" && type != "blue") throw SchemaError("bad node type '" + type + "'");
    g.nodes.push_back({n.at("playerId").get<PlayerId>(), type == "red" ? NodeType::kRed : NodeType::kBlue});
    EventCountVector c;
    c.counts = n.at("counts").get<std::array<std::int64_t, kNumEventKinds>>();
    g.node_features.push_back(c);
  }
  const auto n_nodes = static_cast<int>(g.nodes.size());
  for (const auto& e : doc.at("edges")) {
    GraphEdge edge{e.at(0).get<int>(), e.at(1).get<int>(), EdgeType::kPass, e.at(3).get<std::int64_t>()};
    const auto type = e.at(2).get<std::string>();
    if (type == "defense") {
      edge.type = EdgeType::kDefense;
    } else if (type != "pass") {
      throw SchemaError("bad edge type '" + type + "'");
    }
    if (edge.src < 0 || edge.src >= n_nodes || edge.dst < 0 || edge.dst >= n_nodes || edge.count < 1) {
      throw SchemaError("invalid edge in graph cache");
    }
    g.edges.push_back(edge);
  }
  const auto& ids = doc.at("identifiers");
  const auto dim = ids.at("dim").get<Eigen::Index>();
  out.identifiers.identifiers = Eigen::MatrixXd::Zero(n_nodes, dim);
  const auto& rows = ids.at("rows");
  if (static_cast<int>(rows.size()) != n_nodes) throw SchemaError("identifier row count mismatch");
  for (int i = 0; i < n_nodes; ++i) {
    const auto row = rows[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != dim) throw SchemaError("identifier width mismatch");
    for (Eigen::Index k = 0; k < dim; ++k) out.identifiers.identifiers(i, k) = row[static_cast<std::size_t>(k)];
  }
  out.identifiers.eigenvalues = ids.at("eigenvalues").get<std::vector<double>>();
  out.identifiers.num_valid = ids.at("numValid").get<int>();
  return out;
}

std::string write_team_graph(const TeamInteractionGraph& graph) {
  json doc;
  doc["version"] = 1;
  doc["teams"] = graph.teams;
  json edges = json::array();
  for (const auto& e : graph.edges) edges.push_back({e.src, e.dst, e.winning_rate});
  doc["edges"] = edges;
  return doc.dump();
}

TeamInteractionGraph read_team_graph(std::string_view raw) {
  const auto doc = json::parse(raw.begin(), raw.end());
  if (doc.value("version", 0) != 1) throw SchemaError("unsupported team graph version");
  TeamInteractionGraph g;
  g.teams = doc.at("teams").get<std::vector<TeamId>>();
  for (const auto& e : doc.at("edges")) {
    g.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()});
  }
  return g;
}

}  // namespace higformer

namespace higformer {

std::map<MatchId, CachedGraph> build_graph_cache(const Dataset& data, std::span<const EventRecord> events,
                                                 int d_id, const GraphBuildOptions& options) {
  std::map<MatchId, std::vector<EventRecord>> by_match;
  for (const auto& e : events) by_match[e.match_id].push_back(e);
  std::map<MatchId, CachedGraph> out;
  for (const auto& m : data.all_matches()) {
    CachedGraph c;
    c.graph = build_player_graph(m, by_match[m.match_id], options);
    c.identifiers = laplacian_node_identifiers(c.graph, d_id);
    out.emplace(m.match_id, std::move(c));
  }
  return out;
}

TeamInteractionGraph build_dataset_team_graph(const Dataset& data) {
  const auto teams = data.teams();
  return build_team_graph(data.train(), teams);
}

}  // namespace higformer
