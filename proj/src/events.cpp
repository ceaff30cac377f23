#include "higformer/events.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include <json.hpp>

#include "higformer/errors.hpp"

namespace higformer {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, kNumEventKinds> kEventNames = {
    "Duel",         "Foul",    "Free Kick",          "Goalkeeper leaving line",
    "Interruption", "Offside", "Others on the ball", "Pass",
    "Save attempt", "Shot",
};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::size_t line_of_offset(std::string_view raw, std::size_t offset) {
  offset = std::min(offset, raw.size());
  return 1 + static_cast<std::size_t>(std::count(raw.begin(), raw.begin() + offset, '\n'));
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    throw SchemaError(where + ": missing field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(where + ": field '" + key + "' has the wrong type");
  }
}

EventRecord record_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": event must be a JSON object");
  EventRecord e;
  e.match_id = required<MatchId>(j, "matchId", where);
  e.division = required<std::string>(j, "divisionId", where);
  e.timestamp = required<double>(j, "eventSec", where);
  const auto name = required<std::string>(j, "eventName", where);
  auto kind = event_kind_from_name(name);
  if (!kind) throw SchemaError(where + ": unknown eventName '" + name + "'");
  e.kind = *kind;
  e.actor_player_id = required<PlayerId>(j, "playerId", where);
  e.actor_team_id = required<TeamId>(j, "teamId", where);
  if (auto it = j.find("counterpartPlayerId"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) {
      throw SchemaError(where + ": field 'counterpartPlayerId' has the wrong type");
    }
    auto cp = it->get<PlayerId>();
    if (cp != -1) e.counterpart_player_id = cp;
  }
  return e;
}

}  // namespace

std::string_view event_kind_name(EventKind kind) {
  return kEventNames[static_cast<std::size_t>(kind)];
}

std::optional<EventKind> event_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kEventNames.size(); ++i) {
    if (iequals(name, kEventNames[i])) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

std::int64_t EventCountVector::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::vector<EventRecord> parse_event_stream(std::string_view raw) {
  std::vector<EventRecord> out;
  const auto first = raw.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return out;

  if (raw[first] == '[') {
    json doc;
    try {
      doc = json::parse(raw.begin(), raw.end());
    } catch (const json::parse_error& err) {
      throw ParseError(err.what(), line_of_offset(raw, err.byte));
    }
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
      out.push_back(record_from_json(doc[i], "record " + std::to_string(i + 1)));
    }
    return out;
  }

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    const auto end = std::min(raw.find('\n', pos), raw.size());
    ++line_no;
    std::string_view line = raw.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == raw.size()) break;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& err) {
      throw ParseError(err.what(), line_no);
    }
    out.push_back(record_from_json(j, "line " + std::to_string(line_no)));
    if (end == raw.size()) break;
  }
  return out;
}

std::string write_event_stream(std::span<const EventRecord> events) {
  std::string out;
  for (const auto& e : events) {
    json j = {
        {"matchId", e.match_id},
        {"divisionId", e.division},
        {"eventSec", e.timestamp},
        {"eventName", std::string(event_kind_name(e.kind))},
        {"playerId", e.actor_player_id},
        {"teamId", e.actor_team_id},
        {"counterpartPlayerId", e.counterpart_player_id.value_or(-1)},
    };
    out += j.dump();
    out += '\n';
  }
  return out;
}

EventCountVector compute_event_counts(std::span<const EventRecord> events, MatchId match_id,
                                      PlayerId player_id) {
  EventCountVector c;
  for (const auto& e : events) {
    if (e.match_id == match_id && e.actor_player_id == player_id) ++c[e.kind];
  }
  return c;
}

}  // namespace higformer
