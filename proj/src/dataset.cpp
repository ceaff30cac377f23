#include "higformer/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "higformer/errors.hpp"

namespace higformer {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 3> kOutcomeNames = {"win", "draw", "lose"};
constexpr std::array<std::string_view, 4> kRoleNames = {"GK", "DF", "MF", "FW"};

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw SchemaError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(where + ": field '" + key + "' has the wrong type");
  }
}

std::vector<LineupEntry> lineup_from_json(const json& j, const std::string& where) {
  std::vector<LineupEntry> out;
  if (!j.is_array()) throw SchemaError(where + ": lineup must be an array");
  for (const auto& p : j) {
    LineupEntry e;
    e.player_id = field<PlayerId>(p, "playerId", where);
    e.role = role_from_name(field<std::string>(p, "role", where));
    e.started = p.value("started", true);
    out.push_back(e);
  }
  return out;
}

json lineup_to_json(const std::vector<LineupEntry>& lineup) {
  json arr = json::array();
  for (const auto& e : lineup) {
    arr.push_back({{"playerId", e.player_id},
                   {"role", std::string(role_name(e.role))},
                   {"started", e.started}});
  }
  return arr;
}

json counts_to_json(const EventCountVector& c) { return json(c.counts); }

EventCountVector counts_from_json(const json& j) {
  EventCountVector c;
  if (!j.is_array() || j.size() != kNumEventKinds) throw SchemaError("counts must have 10 entries");
  for (std::size_t k = 0; k < kNumEventKinds; ++k) {
    c.counts[k] = j[k].get<std::int64_t>();
    if (c.counts[k] < 0) throw SchemaError("negative event count");
  }
  return c;
}

}  // namespace

std::string_view outcome_name(Outcome o) { return kOutcomeNames[static_cast<std::size_t>(o)]; }

Outcome outcome_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOutcomeNames.size(); ++i) {
    if (kOutcomeNames[i] == name) return static_cast<Outcome>(i);
  }
  throw SchemaError("unknown outcome '" + std::string(name) + "'");
}

std::string_view role_name(Role r) { return kRoleNames[static_cast<std::size_t>(r)]; }

Role role_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
    if (kRoleNames[i] == name) return static_cast<Role>(i);
  }
  throw SchemaError("unknown role '" + std::string(name) + "'");
}

Outcome outcome_from_goals(int home_goals, int away_goals) {
  if (home_goals > away_goals) return Outcome::kWin;
  if (home_goals < away_goals) return Outcome::kLose;
  return Outcome::kDraw;
}

std::int64_t parse_iso8601(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  const std::string str(text);
  const int n = std::sscanf(str.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
  if (n < 3 || (n > 3 && n < 5)) throw SchemaError("bad ISO-8601 date '" + str + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) {
    throw SchemaError("invalid calendar date '" + str + "'");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_iso8601(std::int64_t seconds) {
  using namespace std::chrono;
  const auto days = static_cast<int>(std::floor(static_cast<double>(seconds) / 86400.0));
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  const auto rem = seconds - static_cast<std::int64_t>(days) * 86400;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                static_cast<int>(rem % 60));
  return buf;
}

std::vector<MatchMetadata> parse_match_metadata(std::string_view raw) {
  json doc;
  try {
    doc = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error& err) {
    const auto upto = std::min<std::size_t>(err.byte, raw.size());
    throw ParseError(err.what(),
                     1 + static_cast<std::size_t>(std::count(raw.begin(), raw.begin() + upto, '\n')));
  }
  if (!doc.is_array()) throw SchemaError("match metadata must be a JSON array");
  std::vector<MatchMetadata> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& j = doc[i];
    const std::string where = "match record " + std::to_string(i + 1);
    MatchMetadata m;
    m.match_id = field<MatchId>(j, "matchId", where);
    m.division = field<std::string>(j, "divisionId", where);
    m.date = parse_iso8601(field<std::string>(j, "dateISO8601", where));
    m.home_team_id = field<TeamId>(j, "homeTeamId", where);
    m.away_team_id = field<TeamId>(j, "awayTeamId", where);
    m.home_goals = field<int>(j, "homeGoals", where);
    m.away_goals = field<int>(j, "awayGoals", where);
    const auto lineups = j.find("lineups");
    if (lineups == j.end() || !lineups->is_object()) throw SchemaError(where + ": missing lineups");
    const auto home_key = std::to_string(m.home_team_id);
    const auto away_key = std::to_string(m.away_team_id);
    if (lineups->contains(home_key)) m.home_lineup = lineup_from_json((*lineups)[home_key], where);
    if (lineups->contains(away_key)) m.away_lineup = lineup_from_json((*lineups)[away_key], where);
    out.push_back(std::move(m));
  }
  return out;
}

std::string write_match_metadata(std::span<const MatchMetadata> matches) {
  json arr = json::array();
  for (const auto& m : matches) {
    arr.push_back({{"matchId", m.match_id},
                   {"divisionId", m.division},
                   {"dateISO8601", format_iso8601(m.date)},
                   {"homeTeamId", m.home_team_id},
                   {"awayTeamId", m.away_team_id},
                   {"lineups",
                    {{std::to_string(m.home_team_id), lineup_to_json(m.home_lineup)},
                     {std::to_string(m.away_team_id), lineup_to_json(m.away_lineup)}}},
                   {"homeGoals", m.home_goals},
                   {"awayGoals", m.away_goals}});
  }
  return arr.dump(1);
}

Dataset::Dataset(std::vector<MatchRecord> train, std::vector<MatchRecord> test,
                 std::map<MatchId, std::vector<PlayerMatchLine>> lines, DatasetOptions options)
    : train_(std::move(train)), test_(std::move(test)), lines_(std::move(lines)), options_(options) {
  all_ = train_;
  all_.insert(all_.end(), test_.begin(), test_.end());
  std::sort(all_.begin(), all_.end(), chronologically_before);
  for (std::size_t i = 0; i < all_.size(); ++i) index_[all_[i].match_id] = i;
  for (const auto& m : train_) test_flag_[m.match_id] = false;
  for (const auto& m : test_) test_flag_[m.match_id] = true;
  for (const auto& m : all_) {
    for (const auto& l : lines_.at(m.match_id)) appearances_[l.player_id].push_back(m.match_id);
  }
}

const MatchRecord& Dataset::match(MatchId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("unknown match " + std::to_string(id));
  return all_[it->second];
}

bool Dataset::is_test(MatchId id) const {
  auto it = test_flag_.find(id);
  if (it == test_flag_.end()) throw LookupError("unknown match " + std::to_string(id));
  return it->second;
}

const std::vector<PlayerMatchLine>& Dataset::lines(MatchId id) const {
  auto it = lines_.find(id);
  if (it == lines_.end()) throw LookupError("unknown match " + std::to_string(id));
  return it->second;
}

const PlayerMatchLine& Dataset::line(MatchId match, PlayerId player) const {
  for (const auto& l : lines(match)) {
    if (l.player_id == player) return l;
  }
  throw LookupError("player " + std::to_string(player) + " not in match " + std::to_string(match));
}

const std::vector<MatchId>& Dataset::appearances(PlayerId player) const {
  static const std::vector<MatchId> kEmpty;
  auto it = appearances_.find(player);
  return it == appearances_.end() ? kEmpty : it->second;
}

std::vector<PlayerId> Dataset::players() const {
  std::vector<PlayerId> out;
  out.reserve(appearances_.size());
  for (const auto& [p, _] : appearances_) out.push_back(p);
  return out;
}

std::vector<TeamId> Dataset::teams() const {
  std::set<TeamId> ids;
  for (const auto& m : all_) {
    ids.insert(m.home_team_id);
    ids.insert(m.away_team_id);
  }
  return {ids.begin(), ids.end()};
}

Dataset build_match_dataset(std::span<const EventRecord> events,
                            std::span<const MatchMetadata> metadata,
                            const DatasetOptions& options) {
  if (!(options.train_fraction > 0.0 && options.train_fraction <= 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1]");
  }
  std::unordered_map<MatchId, const MatchMetadata*> by_id;
  for (const auto& m : metadata) {
    if (!by_id.emplace(m.match_id, &m).second) {
      throw DataError("duplicate match " + std::to_string(m.match_id));
    }
    if (m.home_team_id == m.away_team_id) {
      throw DataError("match " + std::to_string(m.match_id) + " has identical home and away teams");
    }
    if (m.home_lineup.empty() || m.away_lineup.empty()) {
      throw DataError("match " + std::to_string(m.match_id) + " has a team fielding 0 players");
    }
    if (m.home_lineup.size() > kMaxSquad || m.away_lineup.size() > kMaxSquad) {
      throw DataError("match " + std::to_string(m.match_id) + " lists more than 23 players for a team");
    }
    std::set<PlayerId> seen;
    for (const auto* lineup : {&m.home_lineup, &m.away_lineup}) {
      for (const auto& e : *lineup) {
        if (!seen.insert(e.player_id).second) {
          throw DataError("player " + std::to_string(e.player_id) + " listed twice in match " +
                          std::to_string(m.match_id));
        }
      }
    }
  }

  // match -> player -> counts
  std::unordered_map<MatchId, std::unordered_map<PlayerId, EventCountVector>> counts;
  for (const auto& e : events) {
    auto it = by_id.find(e.match_id);
    if (it == by_id.end()) {
      throw DataError("event references unknown match " + std::to_string(e.match_id));
    }
    if (e.actor_team_id != it->second->home_team_id && e.actor_team_id != it->second->away_team_id) {
      throw DataError("event team " + std::to_string(e.actor_team_id) + " does not play in match " +
                      std::to_string(e.match_id));
    }
    ++counts[e.match_id][e.actor_player_id][e.kind];
  }

  std::map<MatchId, std::vector<PlayerMatchLine>> lines;
  std::map<std::string, std::vector<MatchRecord>> by_division;
  for (const auto& m : metadata) {
    MatchRecord rec;
    rec.match_id = m.match_id;
    rec.division = m.division;
    rec.date = m.date;
    rec.home_team_id = m.home_team_id;
    rec.away_team_id = m.away_team_id;
    rec.label = outcome_from_goals(m.home_goals, m.away_goals);
    auto& match_lines = lines[m.match_id];
    const auto& match_counts = counts[m.match_id];
    auto add_side = [&](const std::vector<LineupEntry>& lineup, TeamId team, Outcome outcome,
                        std::vector<PlayerId>& ids) {
      for (const auto& entry : lineup) {
        PlayerMatchLine l;
        l.match_id = m.match_id;
        l.player_id = entry.player_id;
        l.team_id = team;
        l.role = entry.role;
        l.started = entry.started;
        l.outcome = outcome;
        if (auto c = match_counts.find(entry.player_id); c != match_counts.end()) l.counts = c->second;
        match_lines.push_back(l);
        ids.push_back(entry.player_id);
      }
    };
    add_side(m.home_lineup, m.home_team_id, rec.label, rec.home_players);
    add_side(m.away_lineup, m.away_team_id, flip(rec.label), rec.away_players);
    by_division[m.division].push_back(std::move(rec));
  }

  std::vector<MatchRecord> train, test;
  for (auto& [division, matches] : by_division) {
    std::sort(matches.begin(), matches.end(), chronologically_before);
    const auto n_train = static_cast<std::size_t>(
        std::floor(options.train_fraction * static_cast<double>(matches.size()) + 1e-9));
    for (std::size_t i = 0; i < matches.size(); ++i) {
      (i < n_train ? train : test).push_back(matches[i]);
    }
  }
  std::sort(train.begin(), train.end(), chronologically_before);
  std::sort(test.begin(), test.end(), chronologically_before);
  return Dataset(std::move(train), std::move(test), std::move(lines), options);
}

HistoryWindow player_history(const Dataset& data, PlayerId player, MatchId query_match,
                             std::size_t capacity) {
  return player_history(data, player, data.match(query_match), capacity);
}

HistoryWindow player_history(const Dataset& data, PlayerId player, const MatchRecord& query,
                             std::size_t capacity) {
  HistoryWindow window;
  window.capacity = capacity;
  const auto& apps = data.appearances(player);
  std::vector<MatchId> eligible;
  for (auto id : apps) {
    const auto& m = data.match(id);
    if (!chronologically_before(m, query)) break;
    if (!data.options().cross_division_history && m.division != query.division) continue;
    eligible.push_back(id);
  }
  const auto start = eligible.size() > capacity ? eligible.size() - capacity : 0;
  for (auto i = start; i < eligible.size(); ++i) {
    window.entries.push_back(data.line(eligible[i], player));
  }
  return window;
}

std::string write_dataset(const Dataset& data) {
  auto match_json = [&](const MatchRecord& m, bool is_test) {
    json lines = json::array();
    for (const auto& l : data.lines(m.match_id)) {
      lines.push_back({{"playerId", l.player_id},
                       {"teamId", l.team_id},
                       {"role", std::string(role_name(l.role))},
                       {"started", l.started},
                       {"outcome", std::string(outcome_name(l.outcome))},
                       {"counts", counts_to_json(l.counts)}});
    }
    return json{{"matchId", m.match_id},
                {"divisionId", m.division},
                {"date", m.date},
                {"homeTeamId", m.home_team_id},
                {"awayTeamId", m.away_team_id},
                {"homePlayers", m.home_players},
                {"awayPlayers", m.away_players},
                {"label", std::string(outcome_name(m.label))},
                {"split", is_test ? "test" : "train"},
                {"lines", lines}};
  };
  json doc;
  doc["version"] = 1;
  doc["options"] = {{"trainFraction", data.options().train_fraction},
                    {"crossDivisionHistory", data.options().cross_division_history}};
  doc["matches"] = json::array();
  for (const auto& m : data.all_matches()) doc["matches"].push_back(match_json(m, data.is_test(m.match_id)));
  return doc.dump();
}

Dataset read_dataset(std::string_view raw) {
  json doc;
  try {
    doc = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error& err) {
    throw ParseError(err.what(), 1);
  }
  if (doc.value("version", 0) != 1) throw SchemaError("unsupported dataset version");
  DatasetOptions opts;
  opts.train_fraction = doc["options"].value("trainFraction", 0.8);
  opts.cross_division_history = doc["options"].value("crossDivisionHistory", true);
  std::vector<MatchRecord> train, test;
  std::map<MatchId, std::vector<PlayerMatchLine>> lines;
  for (const auto& j : doc.at("matches")) {
    MatchRecord m;
    m.match_id = j.at("matchId").get<MatchId>();
    m.division = j.at("divisionId").get<std::string>();
    m.date = j.at("date").get<std::int64_t>();
    m.home_team_id = j.at("homeTeamId").get<TeamId>();
    m.away_team_id = j.at("awayTeamId").get<TeamId>();
    m.home_players = j.at("homePlayers").get<std::vector<PlayerId>>();
    m.away_players = j.at("awayPlayers").get<std::vector<PlayerId>>();
    m.label = outcome_from_name(j.at("label").get<std::string>());
    auto& ls = lines[m.match_id];
    for (const auto& lj : j.at("lines")) {
      PlayerMatchLine l;
      l.match_id = m.match_id;
      l.player_id = lj.at("playerId").get<PlayerId>();
      l.team_id = lj.at("teamId").get<TeamId>();
      l.role = role_from_name(lj.at("role").get<std::string>());
      l.started = lj.at("started").get<bool>();
      l.outcome = outcome_from_name(lj.at("outcome").get<std::string>());
      l.counts = counts_from_json(lj.at("counts"));
      ls.push_back(l);
    }
    (j.at("split").get<std::string>() == "test" ? test : train).push_back(std::move(m));
  }
  return Dataset(std::move(train), std::move(test), std::move(lines), opts);
}

}  // namespace higformer
