#include <doctest.h>

#include <random>

#include "higformer/analysis.hpp"
#include "higformer/errors.hpp"
#include "higformer/training.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace higformer;

TEST_CASE("per-class accuracy matches a brute-force confusion matrix") {
  // Every (label, prediction) pair over three divisions, repeated with random multiplicities.
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> reps(0, 3);
  std::vector<Outcome> pred, truth;
  std::vector<std::string> div;
  for (int d = 0; d < 3; ++d)
    for (int t = 0; t < 3; ++t)
      for (int p = 0; p < 3; ++p)
        for (int k = reps(rng); k > 0; --k) {
          truth.push_back(static_cast<Outcome>(t));
          pred.push_back(static_cast<Outcome>(p));
          div.push_back("D" + std::to_string(d));
        }
  const auto report = per_class_accuracy(pred, truth, div);
  const auto cm = oracle::confusion(pred, truth);
  std::size_t diag = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t row = cm[c][0] + cm[c][1] + cm[c][2];
    diag += cm[c][c];
    CHECK(report.overall.total[c] == row);
    CHECK(report.overall.correct[c] == cm[c][c]);
    if (row > 0) CHECK(*report.overall.accuracy(static_cast<Outcome>(c)) == doctest::Approx(100.0 * cm[c][c] / row));
  }
  CHECK(*report.overall.average() == doctest::Approx(100.0 * diag / truth.size()));
  CHECK(report.divisions.size() == 3);
  std::size_t n = 0;
  for (const auto& [name, acc] : report.divisions) n += acc.count();
  CHECK(n == truth.size());
  CHECK(report.render().find("Total") != std::string::npos);
  CHECK(report.to_json().at("v") == 1);

  const std::vector<std::string> short_div{"D0"};
  CHECK_THROWS_AS(per_class_accuracy(pred, truth, short_div), DomainError);
}

TEST_CASE("an empty class renders as a dash, not zero") {
  const std::vector<Outcome> p{Outcome::kWin, Outcome::kLose};
  const std::vector<Outcome> t{Outcome::kWin, Outcome::kWin};
  const std::vector<std::string> d{"A", "A"};
  const auto r = per_class_accuracy(p, t, d);
  CHECK_FALSE(r.overall.accuracy(Outcome::kDraw).has_value());
  CHECK(*r.overall.accuracy(Outcome::kWin) == doctest::Approx(50.0));
  CHECK(r.to_json()["total"]["draw"].is_null());
  CHECK(r.render().find(" -") != std::string::npos);
}

TEST_CASE("role groups") {
  CHECK(role_group(true, Role::kGK) == 0);
  CHECK(role_group(false, Role::kFW) == 7);
  CHECK(role_group_name(5) == "AW-DF");
  CHECK(role_group_name(2) == "HM-MF");
}

TEST_CASE("player attention drops edge and class tokens and renormalizes") {
  ag::Matrix a(4, 4);
  a << 0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25, 0.5, 0.3, 0.1, 0.1, 0.0, 0.6, 0.2, 0.2;
  const std::vector<ag::Matrix> heads{a, a};
  const std::vector<TokenKind> kinds{TokenKind::kClass, TokenKind::kNode, TokenKind::kNode, TokenKind::kEdge};
  const auto p = player_attention(heads, kinds);
  REQUIRE(p.rows() == 2);
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(1, 0) == doctest::Approx(0.75));
}

TEST_CASE("role attention matrix is row-stochastic over present groups") {
  const auto league = fixtures::small_league();
  const auto graphs = build_graph_cache(league.dataset, league.events);
  HigFormer model(fixtures::tiny_model(), build_dataset_team_graph(league.dataset), 1);
  const auto m = attention_role_matrix(model, league.dataset, graphs, league.dataset.test(), false);
  CHECK(m.warnings.size() == 1);
  for (std::size_t i = 0; i < 8; ++i) {
    REQUIRE(m.present[i]);
    CHECK(m.weights.row(static_cast<Eigen::Index>(i)).sum() == doctest::Approx(1.0));
  }
  CHECK(m.pairs.minCoeff() > 0.0);
  CHECK(m.weights.minCoeff() >= 0.0);
  CHECK(m.render().find("HM-GK") != std::string::npos);
}

TEST_CASE("substitution analysis") {
  const auto league = fixtures::small_league();
  const auto& data = league.dataset;
  const auto graphs = build_graph_cache(data, league.events);
  HigFormer model(fixtures::tiny_model(), build_dataset_team_graph(data), 5);
  const auto store = precompute_embeddings(model, data, graphs);
  const auto& fixture = data.test().front();
  const TeamId team = fixture.home_team_id;
  const PlayerId starter = fixture.home_players.front();
  const PlayerId bench = fixture.home_players.back();

  SUBCASE("a player swapped for themself changes nothing") {
    const auto r = substitution_analysis(model, store, data, {team, std::nullopt, {{starter, starter}}}, 3);
    CHECK(r.rows.at(0).distribution == r.baseline);
    CHECK(r.rows.at(0).delta == OutcomeDistribution{});
    CHECK(r.rows.at(0).mean_y_hat == r.baseline_mean_y_hat);
    CHECK(r.baseline.win + r.baseline.draw + r.baseline.lose == doctest::Approx(100.0));
  }

  SUBCASE("matches a direct re-prediction of each fixture") {
    const auto r = substitution_analysis(model, store, data, {team, std::nullopt, {{starter, bench}}}, 3);
    const auto rep = model.team_representation();
    double mean = 0.0, base = 0.0;
    for (const auto id : r.fixtures) {
      const auto& m = data.match(id);
      const bool home = m.home_team_id == team;
      const auto in = build_match_input(model, store, data, m, 3);
      base += home ? predict_match(model, rep, in).y_hat : 1.0 - predict_match(model, rep, in).y_hat;
      // Swap by rebuilding the roster with the bench player's history in the starter's slot.
      auto swapped = m;
      auto& roster = home ? swapped.home_players : swapped.away_players;
      std::replace(roster.begin(), roster.end(), starter, bench);
      auto sub_in = build_match_input(model, store, data, swapped, 3);
      // The bench player's original slot, if rostered, keeps its own history.
      const double y = predict_match(model, rep, sub_in).y_hat;
      mean += home ? y : 1.0 - y;
    }
    CHECK(r.baseline_mean_y_hat == doctest::Approx(base / r.fixtures.size()).epsilon(1e-12));
    CHECK(r.rows.at(0).mean_y_hat == doctest::Approx(mean / r.fixtures.size()).epsilon(1e-12));
    for (const auto id : r.fixtures) {
      const auto& m = data.match(id);
      CHECK((m.home_team_id == team || m.away_team_id == team));
      CHECK(data.is_test(id));
    }
  }

  SUBCASE("opponent filter and combined rows") {
    const TeamId opp = fixture.away_team_id;
    const auto r = substitution_analysis(model, store, data, {team, opp, {{starter, bench}, {bench, starter}}}, 3);
    for (const auto id : r.fixtures) {
      const auto& m = data.match(id);
      CHECK((m.home_team_id == opp || m.away_team_id == opp));
    }
    CHECK(r.rows.size() == 2);
    CHECK(r.combined.substitutions.size() == 2);
    CHECK(r.render().find("baseline") != std::string::npos);
    CHECK(r.to_json().at("v") == 1);
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(substitution_analysis(model, store, data, {999, std::nullopt, {}}, 3), LookupError);
    CHECK_THROWS_AS(substitution_analysis(model, store, data, {team, std::nullopt, {{starter, 424242}}}, 3),
                    LookupError);
    const PlayerId outsider = fixture.away_players.front();
    CHECK_THROWS_AS(substitution_analysis(model, store, data, {team, std::nullopt, {{outsider, starter}}}, 3),
                    DomainError);
    const auto late = fixtures::with_late_debut(data, outsider);
    const auto late_store = precompute_embeddings(model, late, graphs);
    CHECK_THROWS_AS(substitution_analysis(model, late_store, late, {team, std::nullopt, {{starter, outsider}}}, 3),
                    NoHistoryError);
  }
}
