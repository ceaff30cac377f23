#include <doctest.h>

#include <thread>

#include "higformer/errors.hpp"
#include "higformer/service.hpp"
#include "higformer/training.hpp"
#include "support/fixtures.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals.
#include <httplib.h>

using namespace higformer;
using nlohmann::json;

namespace {

std::shared_ptr<const ServingSnapshot> make_snapshot(std::uint64_t seed = 3, PlayerId late_player = -1) {
  const auto league = fixtures::small_league();
  const auto data = late_player >= 0 ? fixtures::with_late_debut(league.dataset, late_player) : league.dataset;
  const auto graphs = build_graph_cache(data, league.events);
  HigFormer model(fixtures::tiny_model(), build_dataset_team_graph(data), seed);
  auto store = precompute_embeddings(model, data, graphs);
  return std::make_shared<ServingSnapshot>(std::move(model), std::move(store), data, 3, "abc123");
}

struct Reply {
  int status;
  json body;
};

Reply call(const PredictionService& s, std::string_view method, std::string_view path, const json& body = nullptr,
           std::map<std::string, std::string> query = {}) {
  const auto r = s.handle(method, path, query, body.is_null() ? "" : body.dump());
  return {r.status, json::parse(r.body)};
}

json predict_body(const ServingSnapshot& s, const MatchRecord& m) {
  return {{"v", 1},
          {"home_team", m.home_team_id},
          {"away_team", m.away_team_id},
          {"rosters", {{"home", m.home_players}, {"away", m.away_players}}}};
}

}  // namespace

TEST_CASE("health, teams and players") {
  const auto snap = make_snapshot();
  PredictionService svc(snap);
  const auto h = call(svc, "GET", "/api/health");
  CHECK(h.status == 200);
  CHECK(h.body.at("v") == 1);
  CHECK(h.body.at("checkpoint") == "abc123");

  const auto t = call(svc, "GET", "/api/teams");
  REQUIRE(t.status == 200);
  CHECK(t.body.at("teams").size() == 4);
  for (const auto& team : t.body.at("teams")) {
    CHECK(team.at("roster").size() == 14);
    if (!team.at("baseline").is_null()) {
      const auto& b = team.at("baseline");
      CHECK(b.at("win").get<double>() + b.at("draw").get<double>() + b.at("lose").get<double>() ==
            doctest::Approx(100.0));
    }
  }

  const TeamId team = snap->data.teams().front();
  const auto p = call(svc, "GET", "/api/players", nullptr, {{"team", std::to_string(team)}});
  REQUIRE(p.status == 200);
  CHECK(p.body.at("players").size() == 14);
  CHECK(p.body.at("players")[0].at("history_length") == 3);
  CHECK(call(svc, "GET", "/api/players", nullptr, {{"team", "12x"}}).status == 400);
  CHECK(call(svc, "GET", "/api/players").status == 400);
  CHECK(call(svc, "GET", "/api/players", nullptr, {{"team", "999"}}).status == 404);
}

TEST_CASE("predict agrees with the library and validates input") {
  const auto snap = make_snapshot();
  PredictionService svc(snap);
  const auto& m = snap->data.test().back();
  const auto r = call(svc, "POST", "/api/predict", predict_body(*snap, m));
  REQUIRE(r.status == 200);

  MatchRecord query = m;
  const auto& last = snap->data.all_matches().back();
  query.date = last.date + 1;
  query.match_id = last.match_id + 1;
  const auto expect = predict_match(snap->model, snap->team_representation,
                                    build_match_input(snap->model, snap->store, snap->data, query, 3));
  CHECK(r.body.at("y_hat").get<double>() == doctest::Approx(expect.y_hat).epsilon(1e-12));
  CHECK(r.body.at("class") == outcome_name(expect.outcome_class));
  CHECK(r.body.at("r").size() == 8);
  CHECK(r.body.at("history_lengths").at("home").size() == m.home_players.size());

  auto bad = predict_body(*snap, m);
  bad.erase("v");
  CHECK(call(svc, "POST", "/api/predict", bad).status == 400);
  bad = predict_body(*snap, m);
  bad["rosters"]["home"] = json::array();
  CHECK(call(svc, "POST", "/api/predict", bad).status == 400);
  bad = predict_body(*snap, m);
  bad["home_team"] = 999;
  CHECK(call(svc, "POST", "/api/predict", bad).status == 404);
  bad = predict_body(*snap, m);
  bad["rosters"]["away"].push_back(123456);
  CHECK(call(svc, "POST", "/api/predict", bad).status == 404);
  bad = predict_body(*snap, m);
  bad["date"] = "yesterday";
  CHECK(call(svc, "POST", "/api/predict", bad).status == 400);
  const auto raw = svc.handle("POST", "/api/predict", {}, "{not json");
  CHECK(raw.status == 400);
  CHECK(json::parse(raw.body).at("error").at("code") == "bad_request");

  // An early date leaves every player without history but still predicts.
  auto early = predict_body(*snap, m);
  early["date"] = "1990-01-01";
  const auto e = call(svc, "POST", "/api/predict", early);
  REQUIRE(e.status == 200);
  for (const auto& h : e.body.at("history_lengths").at("home")) CHECK(h == 0);
}

TEST_CASE("what-if requests") {
  const auto base = make_snapshot();
  const auto m = base->data.test().front();
  const PlayerId outsider = m.away_players.front();
  const auto snap = make_snapshot(3, outsider);
  PredictionService svc(snap);
  const TeamId team = m.home_team_id;
  const PlayerId starter = m.home_players.front();

  const auto ok = call(svc, "POST", "/api/whatif",
                       {{"v", 1}, {"team_id", team}, {"substitutions", {{{"out", starter}, {"in", starter}}}}});
  REQUIRE(ok.status == 200);
  CHECK(ok.body.at("v") == 1);
  const auto no_hist = call(svc, "POST", "/api/whatif",
                            {{"v", 1}, {"team_id", team}, {"substitutions", {{{"out", starter}, {"in", outsider}}}}});
  CHECK(no_hist.status == 409);
  CHECK(no_hist.body.at("error").at("code") == "no_history");
  CHECK(no_hist.body.at("error").at("player_id") == outsider);
  CHECK(call(svc, "POST", "/api/whatif", {{"v", 1}, {"team_id", 999}}).status == 404);
  CHECK(call(svc, "POST", "/api/whatif", {{"v", 1}, {"team_id", team}, {"substitutions", {{{"out", starter}}}}})
            .status == 400);
  CHECK(call(svc, "POST", "/api/whatif",
             {{"v", 1}, {"team_id", team}, {"substitutions", {{{"out", outsider}, {"in", starter}}}}})
            .status == 400);
  CHECK_THROWS_AS(parse_whatif_request({{"v", 2}, {"team_id", 1}}), SchemaError);
}

TEST_CASE("routing errors") {
  PredictionService svc(make_snapshot());
  CHECK(call(svc, "GET", "/api/nope").status == 404);
  const auto r = call(svc, "GET", "/api/predict");
  CHECK(r.status == 405);
  CHECK(r.body.at("v") == 1);
  CHECK(call(svc, "DELETE", "/api/teams").status == 405);
}

TEST_CASE("snapshot swap and a real HTTP round trip") {
  PredictionService svc(make_snapshot());
  const int port = svc.bind_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server([&] { svc.listen_after_bind(); });
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/api/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body).at("checkpoint") == "abc123");

  auto next = make_snapshot(9);
  svc.swap_snapshot(next);
  res = client.Post("/api/whatif", R"({"v": 1, "team_id": -5})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(svc.snapshot() == next);
  svc.stop();
  server.join();
  CHECK_THROWS_AS(svc.swap_snapshot(nullptr), ConfigError);
}
