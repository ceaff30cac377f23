#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "higformer/dataset.hpp"
#include "higformer/events.hpp"

namespace higformer {

/// Node types: red is the home side, blue the away side.
enum class NodeType : std::uint8_t { kRed = 0, kBlue = 1 };
enum class EdgeType : std::uint8_t { kPass = 0, kDefense = 1 };

inline constexpr std::size_t kNumNodeTypes = 2;
inline constexpr std::size_t kNumEdgeTypes = 2;
inline constexpr int kDefaultIdentifierDim = 8;

struct GraphNode {
  PlayerId player_id = 0;
  NodeType type = NodeType::kRed;
  bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
  int src = 0;
  int dst = 0;
  EdgeType type = EdgeType::kPass;
  std::int64_t count = 1;
  bool operator==(const GraphEdge&) const = default;
};

/// Directed heterogeneous interaction graph of one match.
struct PlayerInteractionGraph {
  MatchId match_id = 0;
  std::vector<GraphNode> nodes;
  std::vector<EventCountVector> node_features;
  std::vector<GraphEdge> edges;

  std::size_t num_nodes() const { return nodes.size(); }
  std::size_t num_edges() const { return edges.size(); }
  std::optional<int> index_of(PlayerId player) const;
  /// Raw event counts as a |V| x 10 matrix.
  Eigen::MatrixXd feature_matrix() const;

  bool operator==(const PlayerInteractionGraph&) const = default;
};

struct GraphBuildOptions {
  /// Drop events that reference unlisted players instead of failing.
  bool drop_unlisted_events = false;
  /// Also add the reverse counterpart->actor defense edge.
  bool mirror_defense_edges = false;
};

/// Nodes are the home lineup followed by the away lineup, in listed order.
/// Pass edges come from pass events with a counterpart, defense edges from
/// duels and fouls; both are directed actor -> counterpart. Edges are sorted
/// by (type, src, dst).
PlayerInteractionGraph build_player_graph(const MatchRecord& match,
                                          std::span<const EventRecord> events,
                                          const GraphBuildOptions& options = {});

struct NodeIdentifierSet {
  Eigen::MatrixXd identifiers;      // |V| x d_id
  std::vector<double> eigenvalues;  // d_id entries, 0 for padded columns
  int num_valid = 0;                // non-padded columns

  bool operator==(const NodeIdentifierSet& o) const {
    return identifiers == o.identifiers && eigenvalues == o.eigenvalues && num_valid == o.num_valid;
  }
};

/// Eigenvectors of the symmetric normalized Laplacian of the undirected,
/// type-collapsed graph. The trivial eigenvector of each connected component
/// is dropped, the rest are ordered by ascending eigenvalue (ties broken by
/// lexicographic vector order), signs are fixed so the first entry of largest
/// magnitude is positive, and missing columns are zero.
NodeIdentifierSet laplacian_node_identifiers(const PlayerInteractionGraph& graph, int d_id);

/// Symmetric normalized Laplacian I - D^-1/2 A D^-1/2 of the binarized,
/// undirected edge set. Isolated nodes get a zero row.
Eigen::MatrixXd normalized_laplacian(const PlayerInteractionGraph& graph);

struct TeamEdge {
  int src = 0;
  int dst = 0;
  double winning_rate = 0.0;
  bool operator==(const TeamEdge&) const = default;
};

/// League-level graph of dominant head-to-head winning rates.
struct TeamInteractionGraph {
  std::vector<TeamId> teams;  // node index -> team id, ascending ids
  std::vector<TeamEdge> edges;

  std::size_t num_nodes() const { return teams.size(); }
  std::optional<int> index_of(TeamId team) const;

  bool operator==(const TeamInteractionGraph&) const = default;
};

/// Builds the team graph from training matches only. `extra_teams` adds
/// nodes for teams that never appear in `train_matches`.
TeamInteractionGraph build_team_graph(std::span<const MatchRecord> train_matches,
                                      std::span<const TeamId> extra_teams = {});

/// One cached graph per match: graph, identifiers, versioned text container.
struct CachedGraph {
  PlayerInteractionGraph graph;
  NodeIdentifierSet identifiers;
};

/// Graph plus identifiers for every match of the dataset.
std::map<MatchId, CachedGraph> build_graph_cache(const Dataset& data, std::span<const EventRecord> events,
                                                 int d_id = kDefaultIdentifierDim,
                                                 const GraphBuildOptions& options = {});

/// Team graph over the training split with a node for every team in the dataset.
TeamInteractionGraph build_dataset_team_graph(const Dataset& data);

inline constexpr int kGraphCacheVersion = 1;

std::string write_graph_cache(const CachedGraph& cached);
CachedGraph read_graph_cache(std::string_view raw);

std::string write_team_graph(const TeamInteractionGraph& graph);
TeamInteractionGraph read_team_graph(std::string_view raw);

}  // namespace higformer
