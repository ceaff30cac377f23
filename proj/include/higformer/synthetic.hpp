#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "higformer/dataset.hpp"
#include "higformer/events.hpp"

namespace higformer {

/// Artificial league with a known outcome model.
///
/// Each team has a latent strength s. For a fixture with strength gap
/// d = outcome_scale * (s_home - s_away) + home_advantage:
///   P(home win) = sigmoid(d - draw_margin)
///   P(away win) = sigmoid(-d - draw_margin)
///   P(draw)     = 1 - P(home win) - P(away win)
/// Strengths are evenly spaced over [-spread/2, spread/2] and assigned to
/// teams by a seeded shuffle. Player skills scatter around their team's
/// strength and drive event rates, so histories carry strength signal.
struct SynthConfig {
  int n_teams = 10;
  int n_players_per_team = 14;
  /// Matchdays; every team plays once per matchday. 0 selects two double round-robins.
  int n_rounds = 0;
  double strength_spread = 2.0;
  std::uint64_t seed = 0;
  double outcome_scale = 2.0;
  double home_advantage = 0.25;
  double draw_margin = 0.7;
  double skill_noise = 0.25;
  double train_fraction = 0.8;
  std::string division = "SYN";

  void validate() const;
};

struct SyntheticLeague {
  SynthConfig config;
  std::vector<EventRecord> events;
  std::vector<MatchMetadata> metadata;
  Dataset dataset;
  std::map<TeamId, double> team_strength;
  std::map<PlayerId, double> player_skill;
  /// Mean over ordered team pairs of the largest outcome probability.
  double bayes_accuracy = 0.0;
  /// Same quantity averaged over the fixtures in the test split.
  double test_bayes_accuracy = 0.0;
};

/// Outcome probabilities in {win, draw, lose} order from the home perspective.
std::array<double, 3> outcome_probabilities(const SynthConfig& config, double home_strength,
                                            double away_strength);

/// Closed-form Bayes accuracy over all ordered pairs of distinct teams.
double bayes_optimal_accuracy(const SynthConfig& config, const std::map<TeamId, double>& strengths);

SyntheticLeague synthesize_league(const SynthConfig& config);

/// Sidecar manifest: config, strengths, skills, Bayes accuracies.
std::string write_synthetic_manifest(const SyntheticLeague& league);

}  // namespace higformer
