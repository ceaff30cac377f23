#include "higformer/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "higformer/errors.hpp"

namespace higformer {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Squad layout: 11 starters (1 GK, 4 DF, 4 MF, 2 FW) then substitutes cycling DF/MF/FW.
Role squad_role(int slot) {
  static constexpr std::array<Role, 11> kStarters = {
      Role::kGK, Role::kDF, Role::kDF, Role::kDF, Role::kDF, Role::kMF,
      Role::kMF, Role::kMF, Role::kMF, Role::kFW, Role::kFW};
  if (slot < 11) return kStarters[static_cast<std::size_t>(slot)];
  static constexpr std::array<Role, 3> kSubs = {Role::kDF, Role::kMF, Role::kFW};
  return kSubs[static_cast<std::size_t>(slot - 11) % kSubs.size()];
}

// Base per-match rates by role (GK, DF, MF, FW) for each event kind.
constexpr std::array<std::array<double, 4>, kNumEventKinds> kBaseRate = {{
    {0.2, 1.6, 1.6, 1.4},  // duel
    {0.0, 0.5, 0.4, 0.3},  // foul
    {0.6, 0.3, 0.3, 0.1},  // free kick
    {0.8, 0.0, 0.0, 0.0},  // goalkeeper leaving line
    {0.2, 0.5, 0.4, 0.3},  // interruption
    {0.0, 0.0, 0.1, 0.6},  // offside
    {0.4, 1.2, 1.6, 1.4},  // others on the ball
    {2.0, 4.0, 5.0, 3.0},  // pass
    {1.5, 0.0, 0.0, 0.0},  // save attempt
    {0.0, 0.2, 0.6, 1.4},  // shot
}};

// Sensitivity of each kind's log-rate to (skill - opponent strength).
constexpr std::array<double, kNumEventKinds> kSkillSlope = {
    -0.10, -0.25, 0.10, -0.30, 0.0, 0.20, 0.25, 0.35, -0.45, 0.45};

// Sensitivity of each kind's log-rate to the realized result (+1 win, -1 loss).
constexpr std::array<double, kNumEventKinds> kResultSlope = {
    0.0, 0.05, 0.05, -0.10, 0.0, 0.05, 0.10, 0.15, -0.25, 0.30};

struct Fixture {
  int matchday;
  int home;
  int away;
};

std::vector<Fixture> round_robin(int n_teams, int n_rounds) {
  std::vector<int> ring(static_cast<std::size_t>(n_teams));
  std::iota(ring.begin(), ring.end(), 0);
  std::vector<Fixture> out;
  const int cycle = n_teams - 1;
  for (int day = 0; day < n_rounds; ++day) {
    const int r = day % cycle;
    const bool mirrored = (day / cycle) % 2 == 1;
    // Circle method: team 0 fixed, the others rotate by r.
    std::vector<int> order(static_cast<std::size_t>(n_teams));
    order[0] = 0;
    for (int i = 1; i < n_teams; ++i) {
      order[static_cast<std::size_t>(i)] = 1 + ((i - 1 + r) % cycle);
    }
    for (int i = 0; i < n_teams / 2; ++i) {
      int a = order[static_cast<std::size_t>(i)];
      int b = order[static_cast<std::size_t>(n_teams - 1 - i)];
      // alternate hosting so each ordered pair appears once per double cycle
      bool a_home = (i == 0) ? (r % 2 == 0) : (i % 2 == 1);
      if (mirrored) a_home = !a_home;
      out.push_back({day, a_home ? a : b, a_home ? b : a});
    }
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_teams < 2 || n_teams % 2 != 0) throw ConfigError("n_teams must be even and >= 2");
  if (n_players_per_team < 11 || n_players_per_team > static_cast<int>(kMaxSquad)) {
    throw ConfigError("n_players_per_team must lie in [11, 23]");
  }
  if (n_rounds < 0) throw ConfigError("n_rounds must be non-negative");
  if (!(strength_spread >= 0.0) || !std::isfinite(strength_spread)) {
    throw ConfigError("strength_spread must be finite and non-negative");
  }
  if (!(draw_margin >= 0.0)) throw ConfigError("draw_margin must be non-negative");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1]");
  }
}

std::array<double, 3> outcome_probabilities(const SynthConfig& config, double home_strength,
                                            double away_strength) {
  const double d = config.outcome_scale * (home_strength - away_strength) + config.home_advantage;
  const double win = sigmoid(d - config.draw_margin);
  const double lose = sigmoid(-d - config.draw_margin);
  return {win, 1.0 - win - lose, lose};
}

double bayes_optimal_accuracy(const SynthConfig& config, const std::map<TeamId, double>& strengths) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [a, sa] : strengths) {
    for (const auto& [b, sb] : strengths) {
      if (a == b) continue;
      const auto p = outcome_probabilities(config, sa, sb);
      sum += *std::max_element(p.begin(), p.end());
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

SyntheticLeague synthesize_league(const SynthConfig& config) {
  config.validate();
  SyntheticLeague league;
  league.config = config;
  std::mt19937_64 rng(config.seed);

  const int n = config.n_teams;
  const int rounds = config.n_rounds > 0 ? config.n_rounds : 4 * (n - 1);

  std::vector<double> levels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    levels[static_cast<std::size_t>(i)] =
        n == 1 ? 0.0 : config.strength_spread * (static_cast<double>(i) / (n - 1) - 0.5);
  }
  std::shuffle(levels.begin(), levels.end(), rng);

  auto team_id = [](int t) { return static_cast<TeamId>(t + 1); };
  auto player_id = [](int t, int slot) { return static_cast<PlayerId>((t + 1) * 100 + slot); };

  std::normal_distribution<double> skill_noise(0.0, config.skill_noise);
  for (int t = 0; t < n; ++t) {
    league.team_strength[team_id(t)] = levels[static_cast<std::size_t>(t)];
    for (int s = 0; s < config.n_players_per_team; ++s) {
      league.player_skill[player_id(t, s)] = levels[static_cast<std::size_t>(t)] + skill_noise(rng);
    }
  }

  const auto fixtures = round_robin(n, rounds);
  const std::int64_t season_start = parse_iso8601("2017-08-01");
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  MatchId next_match = 1000;
  for (const auto& fx : fixtures) {
    MatchMetadata m;
    m.match_id = next_match++;
    m.division = config.division;
    m.date = season_start + static_cast<std::int64_t>(fx.matchday) * 3 * 86400 + 18 * 3600;
    m.home_team_id = team_id(fx.home);
    m.away_team_id = team_id(fx.away);

    const double s_home = levels[static_cast<std::size_t>(fx.home)];
    const double s_away = levels[static_cast<std::size_t>(fx.away)];
    const auto p = outcome_probabilities(config, s_home, s_away);
    const double u = unit(rng);
    const Outcome result = u < p[0] ? Outcome::kWin : u < p[0] + p[1] ? Outcome::kDraw : Outcome::kLose;
    std::poisson_distribution<int> margin(0.6);
    const int base_goals = margin(rng);
    const int diff = 1 + margin(rng);
    if (result == Outcome::kWin) {
      m.home_goals = base_goals + diff;
      m.away_goals = base_goals;
    } else if (result == Outcome::kLose) {
      m.home_goals = base_goals;
      m.away_goals = base_goals + diff;
    } else {
      m.home_goals = m.away_goals = base_goals;
    }

    struct Active {
      PlayerId id;
      Role role;
      double activity;
    };
    std::array<std::vector<Active>, 2> active;
    for (int side = 0; side < 2; ++side) {
      const int t = side == 0 ? fx.home : fx.away;
      auto& lineup = side == 0 ? m.home_lineup : m.away_lineup;
      for (int s = 0; s < config.n_players_per_team; ++s) {
        const bool starter = s < 11;
        lineup.push_back({player_id(t, s), squad_role(s), starter});
        double activity = 1.0;
        if (!starter) activity = unit(rng) < 0.5 ? 0.35 : 0.0;
        if (activity > 0.0) active[static_cast<std::size_t>(side)].push_back({player_id(t, s), squad_role(s), activity});
      }
    }

    std::vector<EventRecord> match_events;
    for (int side = 0; side < 2; ++side) {
      const TeamId team = side == 0 ? m.home_team_id : m.away_team_id;
      const double opp_strength = side == 0 ? s_away : s_home;
      const Outcome side_result = side == 0 ? result : flip(result);
      const double result_sign =
          side_result == Outcome::kWin ? 1.0 : side_result == Outcome::kLose ? -1.0 : 0.0;
      const auto& mates = active[static_cast<std::size_t>(side)];
      const auto& opponents = active[static_cast<std::size_t>(1 - side)];
      for (const auto& pl : mates) {
        const double rel = config.outcome_scale * (league.player_skill.at(pl.id) - opp_strength);
        for (std::size_t k = 0; k < kNumEventKinds; ++k) {
          const double base = kBaseRate[k][static_cast<std::size_t>(pl.role)];
          if (base <= 0.0) continue;
          const double rate =
              pl.activity * base * std::exp(kSkillSlope[k] * rel + kResultSlope[k] * result_sign);
          std::poisson_distribution<int> count(rate);
          const int c = count(rng);
          const auto kind = static_cast<EventKind>(k);
          for (int i = 0; i < c; ++i) {
            EventRecord e;
            e.match_id = m.match_id;
            e.division = m.division;
            e.timestamp = std::round(unit(rng) * 5400.0 * 10.0) / 10.0;
            e.kind = kind;
            e.actor_player_id = pl.id;
            e.actor_team_id = team;
            if (kind == EventKind::kPass && mates.size() > 1) {
              // prefer teammates in the same or an adjacent line
              std::vector<double> w;
              for (const auto& other : mates) {
                const int gap = std::abs(static_cast<int>(other.role) - static_cast<int>(pl.role));
                w.push_back(other.id == pl.id ? 0.0 : other.activity / (1.0 + gap * gap));
              }
              std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
              e.counterpart_player_id = mates[pick(rng)].id;
            } else if ((kind == EventKind::kDuel || kind == EventKind::kFoul) && !opponents.empty()) {
              std::uniform_int_distribution<std::size_t> pick(0, opponents.size() - 1);
              e.counterpart_player_id = opponents[pick(rng)].id;
            }
            match_events.push_back(std::move(e));
          }
        }
      }
    }
    std::stable_sort(match_events.begin(), match_events.end(),
                     [](const EventRecord& a, const EventRecord& b) { return a.timestamp < b.timestamp; });
    league.events.insert(league.events.end(), match_events.begin(), match_events.end());
    league.metadata.push_back(std::move(m));
  }

  DatasetOptions opts;
  opts.train_fraction = config.train_fraction;
  league.dataset = build_match_dataset(league.events, league.metadata, opts);
  league.bayes_accuracy = bayes_optimal_accuracy(config, league.team_strength);

  double test_sum = 0.0;
  for (const auto& m : league.dataset.test()) {
    const auto p = outcome_probabilities(config, league.team_strength.at(m.home_team_id),
                                         league.team_strength.at(m.away_team_id));
    test_sum += *std::max_element(p.begin(), p.end());
  }
  league.test_bayes_accuracy =
      league.dataset.test().empty() ? 0.0 : test_sum / static_cast<double>(league.dataset.test().size());
  return league;
}

std::string write_synthetic_manifest(const SyntheticLeague& league) {
  using nlohmann::json;
  const auto& c = league.config;
  json doc;
  doc["version"] = 1;
  doc["config"] = {{"nTeams", c.n_teams},
                   {"nPlayersPerTeam", c.n_players_per_team},
                   {"nRounds", c.n_rounds},
                   {"strengthSpread", c.strength_spread},
                   {"seed", c.seed},
                   {"outcomeScale", c.outcome_scale},
                   {"homeAdvantage", c.home_advantage},
                   {"drawMargin", c.draw_margin},
                   {"skillNoise", c.skill_noise},
                   {"trainFraction", c.train_fraction},
                   {"division", c.division}};
  json strengths = json::object();
  for (const auto& [t, s] : league.team_strength) strengths[std::to_string(t)] = s;
  json skills = json::object();
  for (const auto& [p, s] : league.player_skill) skills[std::to_string(p)] = s;
  doc["teamStrength"] = strengths;
  doc["playerSkill"] = skills;
  doc["bayesAccuracy"] = league.bayes_accuracy;
  doc["testBayesAccuracy"] = league.test_bayes_accuracy;
  return doc.dump(1);
}

}  // namespace higformer
