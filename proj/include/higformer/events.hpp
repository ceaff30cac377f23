#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace higformer {

using MatchId = std::int64_t;
using PlayerId = std::int64_t;
using TeamId = std::int64_t;

/// The closed vocabulary of key in-match events.
enum class EventKind : std::uint8_t {
  kDuel = 0,
  kFoul,
  kFreeKick,
  kGoalkeeperLeavingLine,
  kInterruption,
  kOffside,
  kOthersOnTheBall,
  kPass,
  kSaveAttempt,
  kShot,
};

inline constexpr std::size_t kNumEventKinds = 10;

/// Canonical wire name, e.g. "Goalkeeper leaving line".
std::string_view event_kind_name(EventKind kind);

/// Case-insensitive lookup of the canonical names; std::nullopt when unknown.
std::optional<EventKind> event_kind_from_name(std::string_view name);

struct EventRecord {
  MatchId match_id = 0;
  std::string division;
  double timestamp = 0.0;
  EventKind kind = EventKind::kPass;
  PlayerId actor_player_id = 0;
  TeamId actor_team_id = 0;
  std::optional<PlayerId> counterpart_player_id;

  bool operator==(const EventRecord&) const = default;
};

/// Per-player count of each event kind within one match.
struct EventCountVector {
  std::array<std::int64_t, kNumEventKinds> counts{};

  std::int64_t operator[](EventKind k) const { return counts[static_cast<std::size_t>(k)]; }
  std::int64_t& operator[](EventKind k) { return counts[static_cast<std::size_t>(k)]; }
  std::int64_t total() const;

  bool operator==(const EventCountVector&) const = default;
};

/// Parses newline-delimited JSON or a single top-level JSON array of events.
/// Throws ParseError (with the offending line) on malformed records and
/// SchemaError on unknown event names or missing fields.
std::vector<EventRecord> parse_event_stream(std::string_view raw);

/// Serializes events as newline-delimited JSON in the same schema the parser reads.
std::string write_event_stream(std::span<const EventRecord> events);

/// Counts events performed by `player_id` in `match_id`. Counterpart involvement
/// is not counted.
EventCountVector compute_event_counts(std::span<const EventRecord> events, MatchId match_id,
                                      PlayerId player_id);

}  // namespace higformer
