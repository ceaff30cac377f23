#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "higformer/events.hpp"

namespace higformer {

enum class Outcome : std::uint8_t { kWin = 0, kDraw = 1, kLose = 2 };
enum class Role : std::uint8_t { kGK = 0, kDF = 1, kMF = 2, kFW = 3 };

inline constexpr std::size_t kMaxSquad = 23;

std::string_view outcome_name(Outcome o);
Outcome outcome_from_name(std::string_view name);
std::string_view role_name(Role r);
Role role_from_name(std::string_view name);

/// The same result seen from the other side.
constexpr Outcome flip(Outcome o) {
  return o == Outcome::kWin ? Outcome::kLose : o == Outcome::kLose ? Outcome::kWin : Outcome::kDraw;
}

Outcome outcome_from_goals(int home_goals, int away_goals);

/// Seconds since the Unix epoch, parsed from "YYYY-MM-DD" or "YYYY-MM-DDThh:mm[:ss][Z]".
std::int64_t parse_iso8601(std::string_view text);
std::string format_iso8601(std::int64_t seconds);

struct LineupEntry {
  PlayerId player_id = 0;
  Role role = Role::kMF;
  bool started = true;

  bool operator==(const LineupEntry&) const = default;
};

/// One row of the match metadata file.
struct MatchMetadata {
  MatchId match_id = 0;
  std::string division;
  std::int64_t date = 0;
  TeamId home_team_id = 0;
  TeamId away_team_id = 0;
  std::vector<LineupEntry> home_lineup;
  std::vector<LineupEntry> away_lineup;
  int home_goals = 0;
  int away_goals = 0;

  bool operator==(const MatchMetadata&) const = default;
};

std::vector<MatchMetadata> parse_match_metadata(std::string_view raw);
std::string write_match_metadata(std::span<const MatchMetadata> matches);

struct PlayerMatchLine {
  MatchId match_id = 0;
  PlayerId player_id = 0;
  TeamId team_id = 0;
  Role role = Role::kMF;
  EventCountVector counts;
  Outcome outcome = Outcome::kDraw;  // from this player's team perspective
  bool started = true;

  bool operator==(const PlayerMatchLine&) const = default;
};

struct MatchRecord {
  MatchId match_id = 0;
  std::string division;
  std::int64_t date = 0;
  TeamId home_team_id = 0;
  TeamId away_team_id = 0;
  std::vector<PlayerId> home_players;
  std::vector<PlayerId> away_players;
  Outcome label = Outcome::kDraw;  // home perspective

  bool operator==(const MatchRecord&) const = default;
};

/// Total chronological order used everywhere: date, then match id.
inline bool chronologically_before(const MatchRecord& a, const MatchRecord& b) {
  return a.date != b.date ? a.date < b.date : a.match_id < b.match_id;
}

struct HistoryWindow {
  std::size_t capacity = 0;
  std::vector<PlayerMatchLine> entries;  // most recent last
};

struct DatasetOptions {
  double train_fraction = 0.8;
  /// When false, histories only draw on the query match's own division.
  bool cross_division_history = true;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<MatchRecord> train, std::vector<MatchRecord> test,
          std::map<MatchId, std::vector<PlayerMatchLine>> lines, DatasetOptions options);

  const std::vector<MatchRecord>& train() const { return train_; }
  const std::vector<MatchRecord>& test() const { return test_; }
  /// Every match, chronologically ordered.
  const std::vector<MatchRecord>& all_matches() const { return all_; }
  const DatasetOptions& options() const { return options_; }

  const MatchRecord& match(MatchId id) const;
  bool has_match(MatchId id) const { return index_.contains(id); }
  bool is_test(MatchId id) const;
  const std::vector<PlayerMatchLine>& lines(MatchId id) const;
  const PlayerMatchLine& line(MatchId match, PlayerId player) const;
  const std::map<MatchId, std::vector<PlayerMatchLine>>& all_lines() const { return lines_; }

  /// Matches the player appeared in, chronologically.
  const std::vector<MatchId>& appearances(PlayerId player) const;
  std::vector<PlayerId> players() const;
  std::vector<TeamId> teams() const;

 private:
  std::vector<MatchRecord> train_;
  std::vector<MatchRecord> test_;
  std::vector<MatchRecord> all_;
  std::map<MatchId, std::vector<PlayerMatchLine>> lines_;
  std::map<MatchId, std::size_t> index_;
  std::map<MatchId, bool> test_flag_;
  std::map<PlayerId, std::vector<MatchId>> appearances_;
  DatasetOptions options_;
};

/// Joins events with match metadata, derives per-player lines, and splits each
/// division chronologically into train and test.
Dataset build_match_dataset(std::span<const EventRecord> events,
                            std::span<const MatchMetadata> metadata,
                            const DatasetOptions& options = {});

/// The player's most recent `capacity` lines strictly before `query_match`.
HistoryWindow player_history(const Dataset& data, PlayerId player, MatchId query_match,
                             std::size_t capacity);
/// Same, for a query that need not be in the dataset (only date, id, and
/// division are read).
HistoryWindow player_history(const Dataset& data, PlayerId player, const MatchRecord& query,
                             std::size_t capacity);

std::string write_dataset(const Dataset& data);
Dataset read_dataset(std::string_view raw);

}  // namespace higformer
