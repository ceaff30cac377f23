#include "higformer/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <iostream>
#include <set>

#include "higformer/errors.hpp"
#include "higformer/checkpoint.hpp"
#include "higformer/training.hpp"

namespace higformer {

using nlohmann::json;

namespace {

constexpr int kApiVersion = 1;

json error_body(int status, std::string_view code, std::string_view message) {
  return {{"v", kApiVersion}, {"error", {{"status", status}, {"code", code}, {"message", message}}}};
}

void require_version(const json& body) {
  if (!body.is_object()) throw SchemaError("request body must be a JSON object");
  if (!body.contains("v") || !body.at("v").is_number_integer() || body.at("v").get<int>() != kApiVersion) {
    throw SchemaError("request must carry \"v\": 1");
  }
}

std::int64_t require_id(const json& body, const char* key) {
  if (!body.contains(key) || !body.at(key).is_number_integer()) {
    throw SchemaError(std::string("field '") + key + "' must be an integer id");
  }
  return body.at(key).get<std::int64_t>();
}

std::vector<PlayerId> require_ids(const json& parent, const char* key) {
  if (!parent.contains(key) || !parent.at(key).is_array()) {
    throw SchemaError(std::string("field '") + key + "' must be an array of player ids");
  }
  std::vector<PlayerId> out;
  for (const auto& v : parent.at(key)) {
    if (!v.is_number_integer()) throw SchemaError(std::string("field '") + key + "' holds a non-integer id");
    out.push_back(v.get<PlayerId>());
  }
  return out;
}

json distribution_json(const OutcomeDistribution& d) { return {{"win", d.win}, {"draw", d.draw}, {"lose", d.lose}}; }

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Most frequent role of a player for one team, ties to the earlier role.
Role usual_role(const Dataset& data, PlayerId pid, TeamId team) {
  std::array<int, 4> counts{};
  for (auto m : data.appearances(pid)) {
    const auto& line = data.line(m, pid);
    if (line.team_id == team) ++counts[static_cast<std::size_t>(line.role)];
  }
  return static_cast<Role>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::set<PlayerId> team_players(const Dataset& data, TeamId team) {
  std::set<PlayerId> out;
  for (const auto& [mid, lines] : data.all_lines()) {
    for (const auto& l : lines) {
      if (l.team_id == team) out.insert(l.player_id);
    }
  }
  return out;
}

bool known_team(const Dataset& data, TeamId team) {
  const auto teams = data.teams();
  return std::binary_search(teams.begin(), teams.end(), team);
}

}  // namespace

ServingSnapshot::ServingSnapshot(HigFormer m, EmbeddingStore s, Dataset d, std::size_t history, std::string hash)
    : model(std::move(m)),
      store(std::move(s)),
      data(std::move(d)),
      history_length(history),
      checkpoint_hash(std::move(hash)),
      team_representation(model.team_representation()) {}

SubstitutionRequest parse_whatif_request(const json& body) {
  require_version(body);
  SubstitutionRequest req;
  req.team_id = require_id(body, "team_id");
  if (body.contains("opponent") && !body.at("opponent").is_null()) req.opponent = require_id(body, "opponent");
  if (body.contains("substitutions")) {
    const auto& subs = body.at("substitutions");
    if (!subs.is_array()) throw SchemaError("field 'substitutions' must be an array");
    for (const auto& s : subs) {
      if (!s.is_object()) throw SchemaError("each substitution must be an object {out, in}");
      req.substitutions.push_back({require_id(s, "out"), require_id(s, "in")});
    }
  }
  return req;
}

PredictionService::PredictionService(std::shared_ptr<const ServingSnapshot> snapshot)
    : snapshot_(std::move(snapshot)) {
  if (!snapshot_) throw ConfigError("service needs a model snapshot");
}

PredictionService::~PredictionService() = default;

void PredictionService::swap_snapshot(std::shared_ptr<const ServingSnapshot> snapshot) {
  if (!snapshot) throw ConfigError("service needs a model snapshot");
  std::lock_guard lock(mutex_);
  snapshot_ = std::move(snapshot);
}

std::shared_ptr<const ServingSnapshot> PredictionService::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

json PredictionService::teams(const ServingSnapshot& s) const {
  json out = json::array();
  for (auto team : s.data.teams()) {
    json entry = {{"team_id", team}};
    json roster = json::array();
    for (auto pid : team_players(s.data, team)) roster.push_back(pid);
    entry["roster"] = roster;
    try {
      const auto report = substitution_analysis(s.model, s.store, s.data, {team, std::nullopt, {}}, s.history_length);
      entry["baseline"] = distribution_json(report.baseline);
      entry["fixtures"] = report.fixtures;
    } catch (const DomainError&) {
      entry["baseline"] = nullptr;
      entry["fixtures"] = json::array();
    }
    out.push_back(entry);
  }
  return {{"v", kApiVersion}, {"teams", out}};
}

json PredictionService::players(const ServingSnapshot& s, const std::map<std::string, std::string>& query) const {
  auto it = query.find("team");
  if (it == query.end()) throw SchemaError("query parameter 'team' is required");
  TeamId team = 0;
  try {
    std::size_t used = 0;
    team = std::stoll(it->second, &used);
    if (used != it->second.size()) throw SchemaError("");
  } catch (const std::exception&) {
    throw SchemaError("query parameter 'team' must be an integer id");
  }
  if (!known_team(s.data, team)) throw LookupError("unknown team " + std::to_string(team));
  json out = json::array();
  for (auto pid : team_players(s.data, team)) {
    const auto apps = s.data.appearances(pid).size();
    out.push_back({{"player_id", pid},
                   {"role", role_name(usual_role(s.data, pid, team))},
                   {"appearances", apps},
                   {"history_length", std::min(apps, s.history_length)}});
  }
  return {{"v", kApiVersion}, {"team_id", team}, {"players", out}};
}

json PredictionService::predict(const ServingSnapshot& s, const json& body) const {
  require_version(body);
  MatchRecord query;
  query.home_team_id = require_id(body, "home_team");
  query.away_team_id = require_id(body, "away_team");
  if (query.home_team_id == query.away_team_id) throw SchemaError("home_team and away_team must differ");
  if (!body.contains("rosters") || !body.at("rosters").is_object()) {
    throw SchemaError("field 'rosters' must be an object {home, away}");
  }
  query.home_players = require_ids(body.at("rosters"), "home");
  query.away_players = require_ids(body.at("rosters"), "away");
  if (query.home_players.empty() || query.away_players.empty()) {
    throw SchemaError("each roster needs at least one player");
  }
  for (auto team : {query.home_team_id, query.away_team_id}) {
    if (!known_team(s.data, team)) throw LookupError("unknown team " + std::to_string(team));
  }
  for (const auto* roster : {&query.home_players, &query.away_players}) {
    for (auto pid : *roster) {
      if (s.data.appearances(pid).empty()) throw LookupError("unknown player " + std::to_string(pid));
    }
  }
  const auto& all = s.data.all_matches();
  if (body.contains("date") && !body.at("date").is_null()) {
    if (!body.at("date").is_string()) throw SchemaError("field 'date' must be an ISO-8601 string");
    try {
      query.date = parse_iso8601(body.at("date").get<std::string>());
    } catch (const Error& e) {
      throw SchemaError(std::string("field 'date': ") + e.what());
    }
    query.match_id = 0;
  } else {
    query.date = all.empty() ? 0 : all.back().date + 1;
    query.match_id = all.empty() ? 0 : all.back().match_id + 1;
  }
  for (auto it = all.rbegin(); it != all.rend(); ++it) {
    if (it->home_team_id == query.home_team_id || it->away_team_id == query.home_team_id) {
      query.division = it->division;
      break;
    }
  }
  const auto input = build_match_input(s.model, s.store, s.data, query, s.history_length);
  const auto p = predict_match(s.model, s.team_representation, input);
  json home_lengths = json::array(), away_lengths = json::array();
  for (const auto& slot : input.players) (slot.home ? home_lengths : away_lengths).push_back(slot.history_length());
  return {{"v", kApiVersion},
          {"y_hat", p.y_hat},
          {"class", outcome_name(p.outcome_class)},
          {"r", vector_json(p.r)},
          {"b", vector_json(p.b)},
          {"r_norm", p.r.norm()},
          {"b_norm", p.b.norm()},
          {"history_lengths", {{"home", home_lengths}, {"away", away_lengths}}}};
}

json PredictionService::whatif(const ServingSnapshot& s, const json& body) const {
  const auto req = parse_whatif_request(body);
  return substitution_analysis(s.model, s.store, s.data, req, s.history_length).to_json();
}

HttpResponse PredictionService::handle(std::string_view method, std::string_view path,
                                       const std::map<std::string, std::string>& query,
                                       std::string_view body) const {
  const auto snap = snapshot();
  static const std::map<std::string, std::string, std::less<>> kRoutes = {
      {"/api/health", "GET"}, {"/api/teams", "GET"}, {"/api/players", "GET"},
      {"/api/predict", "POST"}, {"/api/whatif", "POST"}};
  auto route = kRoutes.find(path);
  if (route == kRoutes.end()) return {404, error_body(404, "not_found", "no such endpoint").dump()};
  if (route->second != method) {
    return {405, error_body(405, "method_not_allowed", "use " + route->second).dump()};
  }
  try {
    json parsed;
    if (method == "POST") {
      try {
        parsed = json::parse(body);
      } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed JSON body: ") + e.what());
      }
    }
    json out;
    if (path == "/api/health") {
      out = {{"v", kApiVersion}, {"status", "ok"}, {"checkpoint", snap->checkpoint_hash},
             {"teams", snap->data.teams().size()}, {"embeddings", snap->store.size()}};
    } else if (path == "/api/teams") {
      out = teams(*snap);
    } else if (path == "/api/players") {
      out = players(*snap, query);
    } else if (path == "/api/predict") {
      out = predict(*snap, parsed);
    } else {
      out = whatif(*snap, parsed);
    }
    return {200, out.dump()};
  } catch (const NoHistoryError& e) {
    auto b = error_body(409, "no_history", e.what());
    b["error"]["player_id"] = e.player_id();
    return {409, b.dump()};
  } catch (const LookupError& e) {
    return {404, error_body(404, "not_found", e.what()).dump()};
  } catch (const SchemaError& e) {
    return {400, error_body(400, "bad_request", e.what()).dump()};
  } catch (const DomainError& e) {
    return {400, error_body(400, "bad_request", e.what()).dump()};
  } catch (const json::exception& e) {
    return {400, error_body(400, "bad_request", e.what()).dump()};
  } catch (const std::exception& e) {
    const auto id = hex64(fnv1a64(std::to_string(++fault_counter_) + e.what()));
    std::cerr << "internal fault " << id << ": " << e.what() << "\n";
    auto b = error_body(500, "internal", "internal error");
    b["error"]["id"] = id;
    return {500, b.dump()};
  }
}

void PredictionService::install_routes() {
  server_ = std::make_unique<httplib::Server>();
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto out = handle(req.method, req.path, query, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  server_->Get(R"(/api/.*)", dispatch);
  server_->Post(R"(/api/.*)", dispatch);
  server_->Put(R"(/api/.*)", dispatch);
  server_->Delete(R"(/api/.*)", dispatch);
}

bool PredictionService::listen(const std::string& host, int port) {
  install_routes();
  return server_->listen(host, port);
}

int PredictionService::bind_any_port(const std::string& host) {
  install_routes();
  return server_->bind_to_any_port(host);
}

bool PredictionService::listen_after_bind() { return server_->listen_after_bind(); }

void PredictionService::stop() {
  if (server_) server_->stop();
}

}  // namespace higformer
