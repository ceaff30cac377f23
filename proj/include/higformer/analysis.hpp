#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "higformer/dataset.hpp"
#include "higformer/embedding_store.hpp"
#include "higformer/model.hpp"

namespace higformer {

struct ClassAccuracy {
  std::array<std::size_t, 3> correct{};  // win, draw, lose
  std::array<std::size_t, 3> total{};

  /// Percent; empty when the class has no examples.
  std::optional<double> accuracy(Outcome c) const;
  /// Micro-accuracy over all examples, percent.
  std::optional<double> average() const;
  std::size_t count() const { return total[0] + total[1] + total[2]; }
};

struct AccuracyReport {
  std::map<std::string, ClassAccuracy> divisions;
  ClassAccuracy overall;
  std::vector<std::string> warnings;

  /// Text table: one row per division plus a Total row, columns Win, Draw, Lose, Avg.
  std::string render() const;
  nlohmann::json to_json() const;
};

AccuracyReport per_class_accuracy(std::span<const Outcome> predictions, std::span<const Outcome> labels,
                                  std::span<const std::string> divisions);

/// Row/column order: HM-GK, HM-DF, HM-MF, HM-FW, AW-GK, AW-DF, AW-MF, AW-FW.
inline constexpr std::size_t kRoleGroups = 8;
std::string role_group_name(std::size_t group);
std::size_t role_group(bool home, Role role);

struct RoleAttentionMatrix {
  Eigen::Matrix<double, 8, 8> weights = Eigen::Matrix<double, 8, 8>::Zero();
  /// Number of (query, key) player pairs pooled into each cell.
  Eigen::Matrix<double, 8, 8> pairs = Eigen::Matrix<double, 8, 8>::Zero();
  /// Groups never seen as a query keep an all-zero row.
  std::array<bool, 8> present{};
  std::vector<std::string> warnings;

  std::string render() const;
  nlohmann::json to_json() const;
};

/// Player-to-player block of one head-averaged attention matrix, renormalized per row.
ag::Matrix player_attention(const std::vector<ag::Matrix>& heads, std::span<const TokenKind> kinds);

/// Final-layer global-encoder attention restricted to player tokens,
/// averaged over heads, summed per (side, role) group across matches,
/// divided by pair counts, then row-normalized.
RoleAttentionMatrix attention_role_matrix(const HigFormer& model, const Dataset& data,
                                          const std::map<MatchId, CachedGraph>& graphs,
                                          std::span<const MatchRecord> matches, bool trained = true);

struct Substitution {
  PlayerId out_player = 0;
  PlayerId in_player = 0;
  bool operator==(const Substitution&) const = default;
};

/// Win / draw / lose percentages from the analyzed team's perspective.
struct OutcomeDistribution {
  double win = 0.0;
  double draw = 0.0;
  double lose = 0.0;
  bool operator==(const OutcomeDistribution&) const = default;
};

struct SubstitutionRow {
  std::vector<Substitution> substitutions;
  OutcomeDistribution distribution;
  OutcomeDistribution delta;
  double mean_y_hat = 0.0;  // mean team-perspective score
};

struct SubstitutionReport {
  TeamId team_id = 0;
  std::vector<MatchId> fixtures;
  OutcomeDistribution baseline;
  double baseline_mean_y_hat = 0.0;
  std::vector<SubstitutionRow> rows;  // one per substitution
  SubstitutionRow combined;           // every substitution at once

  /// Baseline row followed by one signed "-> player" delta row per substitution.
  std::string render() const;
  nlohmann::json to_json() const;
};

struct SubstitutionRequest {
  TeamId team_id = 0;
  std::optional<TeamId> opponent;
  std::vector<Substitution> substitutions;
};

/// Re-predicts the team's test fixtures with each outgoing player's pooled
/// history replaced by the incoming player's history as of the same fixture.
/// The host team's identity embedding is kept. Throws LookupError for an
/// unknown team or player, DomainError when an outgoing player is not on the
/// team's fixture rosters, and NoHistoryError when an incoming player has no
/// history before some affected fixture.
SubstitutionReport substitution_analysis(const HigFormer& model, const EmbeddingStore& store, const Dataset& data,
                                         const SubstitutionRequest& request, std::size_t history_length);

}  // namespace higformer
