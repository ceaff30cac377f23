#include "higformer/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "higformer/errors.hpp"
#include "higformer/training.hpp"

namespace higformer {

using nlohmann::json;

namespace {

std::string fixed(double v, int precision = 2, bool sign = false) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), sign ? "%+.*f" : "%.*f", precision, v);
  return buf;
}

// Display width of UTF-8 text: continuation bytes take no column.
std::size_t columns(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
  const auto n = columns(s);
  if (n >= width) return s;
  return left ? s + std::string(width - n, ' ') : std::string(width - n, ' ') + s;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string optional_text(const std::optional<double>& v) { return v ? fixed(*v) : "-"; }

}  // namespace

std::optional<double> ClassAccuracy::accuracy(Outcome c) const {
  const auto i = static_cast<std::size_t>(c);
  if (total[i] == 0) return std::nullopt;
  return 100.0 * static_cast<double>(correct[i]) / static_cast<double>(total[i]);
}

std::optional<double> ClassAccuracy::average() const {
  const auto n = count();
  if (n == 0) return std::nullopt;
  return 100.0 * static_cast<double>(correct[0] + correct[1] + correct[2]) / static_cast<double>(n);
}

AccuracyReport per_class_accuracy(std::span<const Outcome> predictions, std::span<const Outcome> labels,
                                  std::span<const std::string> divisions) {
  if (predictions.size() != labels.size() || predictions.size() != divisions.size()) {
    throw DomainError("per_class_accuracy: predictions, labels and divisions differ in length");
  }
  AccuracyReport report;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    const bool hit = predictions[i] == labels[i];
    for (auto* acc : {&report.divisions[divisions[i]], &report.overall}) {
      ++acc->total[c];
      if (hit) ++acc->correct[c];
    }
  }
  return report;
}

std::string AccuracyReport::render() const {
  std::ostringstream os;
  for (const auto& w : warnings) os << "WARNING: " << w << "\n";
  os << pad("Division", 12, true) << pad("Win", 8) << pad("Draw", 8) << pad("Lose", 8) << pad("Avg", 8)
     << pad("N", 7) << "\n";
  auto row = [&](const std::string& name, const ClassAccuracy& a) {
    os << pad(name, 12, true) << pad(optional_text(a.accuracy(Outcome::kWin)), 8)
       << pad(optional_text(a.accuracy(Outcome::kDraw)), 8) << pad(optional_text(a.accuracy(Outcome::kLose)), 8)
       << pad(optional_text(a.average()), 8) << pad(std::to_string(a.count()), 7) << "\n";
  };
  for (const auto& [name, acc] : divisions) row(name, acc);
  row("Total", overall);
  return os.str();
}

json AccuracyReport::to_json() const {
  auto one = [](const ClassAccuracy& a) {
    return json{{"win", optional_json(a.accuracy(Outcome::kWin))},
                {"draw", optional_json(a.accuracy(Outcome::kDraw))},
                {"lose", optional_json(a.accuracy(Outcome::kLose))},
                {"avg", optional_json(a.average())},
                {"correct", a.correct},
                {"total", a.total}};
  };
  json j = {{"v", 1}, {"total", one(overall)}, {"divisions", json::object()}, {"warnings", warnings}};
  for (const auto& [name, acc] : divisions) j["divisions"][name] = one(acc);
  return j;
}

std::string role_group_name(std::size_t group) {
  if (group >= kRoleGroups) throw DomainError("role group out of range");
  return std::string(group < 4 ? "HM-" : "AW-") + std::string(role_name(static_cast<Role>(group % 4)));
}

std::size_t role_group(bool home, Role role) { return (home ? 0 : 4) + static_cast<std::size_t>(role); }

ag::Matrix player_attention(const std::vector<ag::Matrix>& heads, std::span<const TokenKind> kinds) {
  if (heads.empty()) throw DomainError("no attention heads");
  ag::Matrix avg = ag::Matrix::Zero(heads[0].rows(), heads[0].cols());
  for (const auto& h : heads) avg += h;
  avg /= static_cast<double>(heads.size());
  std::vector<Eigen::Index> nodes;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (kinds[i] == TokenKind::kNode) nodes.push_back(static_cast<Eigen::Index>(i));
  }
  const auto n = static_cast<Eigen::Index>(nodes.size());
  ag::Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = avg(nodes[static_cast<std::size_t>(i)], nodes[static_cast<std::size_t>(j)]);
    const double s = out.row(i).sum();
    if (s > 0.0) out.row(i) /= s;
  }
  return out;
}

RoleAttentionMatrix attention_role_matrix(const HigFormer& model, const Dataset& data,
                                          const std::map<MatchId, CachedGraph>& graphs,
                                          std::span<const MatchRecord> matches, bool trained) {
  RoleAttentionMatrix out;
  if (!trained) out.warnings.push_back("global encoder is untrained; attention weights are not meaningful");
  Eigen::Matrix<double, 8, 8> sums = Eigen::Matrix<double, 8, 8>::Zero();
  for (const auto& m : matches) {
    auto it = graphs.find(m.match_id);
    if (it == graphs.end()) throw DataError("no cached graph for match " + std::to_string(m.match_id));
    const auto& graph = it->second.graph;
    const auto input = GraphInput::from(graph, it->second.identifiers);
    ag::Tape tape;
    const auto enc =
        model.player_net().encode_global(tape, model.store(), input, GlobalMode::kEmbeddings, true);
    const auto a = player_attention(enc.last_layer_attention, enc.kinds);
    std::vector<std::size_t> group;
    for (const auto& node : graph.nodes) {
      group.push_back(role_group(node.type == NodeType::kRed, data.line(m.match_id, node.player_id).role));
    }
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const auto gi = static_cast<Eigen::Index>(group[static_cast<std::size_t>(i)]);
      out.present[static_cast<std::size_t>(gi)] = true;
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const auto gj = static_cast<Eigen::Index>(group[static_cast<std::size_t>(j)]);
        sums(gi, gj) += a(i, j);
        out.pairs(gi, gj) += 1.0;
      }
    }
  }
  for (Eigen::Index i = 0; i < 8; ++i) {
    for (Eigen::Index j = 0; j < 8; ++j) {
      out.weights(i, j) = out.pairs(i, j) > 0.0 ? sums(i, j) / out.pairs(i, j) : 0.0;
    }
    const double s = out.weights.row(i).sum();
    if (s > 0.0) out.weights.row(i) /= s;
  }
  return out;
}

std::string RoleAttentionMatrix::render() const {
  std::ostringstream os;
  for (const auto& w : warnings) os << "WARNING: " << w << "\n";
  os << pad("", 7);
  for (std::size_t j = 0; j < kRoleGroups; ++j) os << pad(role_group_name(j), 8);
  os << "\n";
  for (std::size_t i = 0; i < kRoleGroups; ++i) {
    os << pad(role_group_name(i), 7, true);
    for (std::size_t j = 0; j < kRoleGroups; ++j) {
      os << pad(present[i] ? fixed(weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 4) : "-", 8);
    }
    os << "\n";
  }
  return os.str();
}

json RoleAttentionMatrix::to_json() const {
  json groups_json = json::array();
  json rows = json::array();
  for (std::size_t i = 0; i < kRoleGroups; ++i) {
    groups_json.push_back(role_group_name(i));
    json row = json::array();
    for (std::size_t j = 0; j < kRoleGroups; ++j) row.push_back(weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    rows.push_back(row);
  }
  return {{"v", 1}, {"groups", groups_json}, {"weights", rows}, {"present", present}, {"warnings", warnings}};
}

namespace {

struct Fixture {
  const MatchRecord* match = nullptr;
  bool team_is_home = true;
  MatchInput input;
};

OutcomeDistribution distribution_of(const std::vector<Outcome>& classes) {
  std::array<double, 3> counts{};
  for (auto c : classes) counts[static_cast<std::size_t>(c)] += 1.0;
  const double n = static_cast<double>(classes.size());
  return {100.0 * counts[0] / n, 100.0 * counts[1] / n, 100.0 * counts[2] / n};
}

OutcomeDistribution minus(const OutcomeDistribution& a, const OutcomeDistribution& b) {
  return {a.win - b.win, a.draw - b.draw, a.lose - b.lose};
}

json distribution_json(const OutcomeDistribution& d) { return {{"win", d.win}, {"draw", d.draw}, {"lose", d.lose}}; }

}  // namespace

SubstitutionReport substitution_analysis(const HigFormer& model, const EmbeddingStore& store, const Dataset& data,
                                         const SubstitutionRequest& request, std::size_t history_length) {
  const auto teams = data.teams();
  auto known_team = [&](TeamId t) { return std::find(teams.begin(), teams.end(), t) != teams.end(); };
  if (!known_team(request.team_id)) throw LookupError("unknown team " + std::to_string(request.team_id));
  if (request.opponent && !known_team(*request.opponent)) {
    throw LookupError("unknown opponent " + std::to_string(*request.opponent));
  }
  for (const auto& s : request.substitutions) {
    for (auto pid : {s.out_player, s.in_player}) {
      if (data.appearances(pid).empty()) throw LookupError("unknown player " + std::to_string(pid));
    }
  }

  std::vector<Fixture> fixtures;
  for (const auto& m : data.test()) {
    const bool home = m.home_team_id == request.team_id;
    if (!home && m.away_team_id != request.team_id) continue;
    const auto opp = home ? m.away_team_id : m.home_team_id;
    if (request.opponent && opp != *request.opponent) continue;
    fixtures.push_back({&m, home, build_match_input(model, store, data, m, history_length)});
  }
  if (fixtures.empty()) {
    throw DomainError("team " + std::to_string(request.team_id) + " has no test fixtures in scope");
  }
  std::set<PlayerId> roster;
  for (const auto& f : fixtures) {
    for (const auto& slot : f.input.players) {
      if (slot.home == f.team_is_home) roster.insert(slot.player_id);
    }
  }
  for (const auto& s : request.substitutions) {
    if (!roster.contains(s.out_player)) {
      throw DomainError("player " + std::to_string(s.out_player) + " is not on the roster of team " +
                        std::to_string(request.team_id) + " in the selected fixtures");
    }
  }

  const auto rep = model.team_representation();
  // Team-perspective class and score for each fixture under a substitution set.
  auto evaluate = [&](std::span<const Substitution> subs, double& mean_y) {
    std::vector<Outcome> classes;
    mean_y = 0.0;
    for (const auto& f : fixtures) {
      MatchInput input = f.input;
      for (const auto& s : subs) {
        for (auto& slot : input.players) {
          if (slot.home != f.team_is_home || slot.player_id != s.out_player) continue;
          const auto window = player_history(data, s.in_player, *f.match, history_length);
          if (window.entries.empty()) throw NoHistoryError(s.in_player);
          const auto h = static_cast<Eigen::Index>(window.entries.size());
          PlayerSlot replacement;
          replacement.player_id = s.in_player;
          replacement.home = slot.home;
          replacement.global.resize(h, store.width());
          replacement.local.resize(h, store.width());
          replacement.features.resize(h, static_cast<Eigen::Index>(kNumEventKinds));
          for (Eigen::Index r = 0; r < h; ++r) {
            const auto& rec = store.at(s.in_player, window.entries[static_cast<std::size_t>(r)].match_id);
            replacement.global.row(r) = rec.global.transpose();
            replacement.local.row(r) = rec.local.transpose();
            replacement.features.row(r) = rec.features.transpose();
          }
          slot = std::move(replacement);
        }
      }
      const auto p = predict_match(model, rep, input);
      classes.push_back(f.team_is_home ? p.outcome_class : flip(p.outcome_class));
      mean_y += f.team_is_home ? p.y_hat : 1.0 - p.y_hat;
    }
    mean_y /= static_cast<double>(fixtures.size());
    return distribution_of(classes);
  };

  SubstitutionReport report;
  report.team_id = request.team_id;
  for (const auto& f : fixtures) report.fixtures.push_back(f.match->match_id);
  report.baseline = evaluate({}, report.baseline_mean_y_hat);
  for (const auto& s : request.substitutions) {
    SubstitutionRow row;
    row.substitutions = {s};
    row.distribution = evaluate(row.substitutions, row.mean_y_hat);
    row.delta = minus(row.distribution, report.baseline);
    report.rows.push_back(std::move(row));
  }
  report.combined.substitutions = request.substitutions;
  report.combined.distribution =
      request.substitutions.empty() ? report.baseline : evaluate(request.substitutions, report.combined.mean_y_hat);
  if (request.substitutions.empty()) report.combined.mean_y_hat = report.baseline_mean_y_hat;
  report.combined.delta = minus(report.combined.distribution, report.baseline);
  return report;
}

std::string SubstitutionReport::render() const {
  std::ostringstream os;
  auto row = [&](const std::string& label, const OutcomeDistribution& d, bool sign) {
    os << pad(label, 30, true) << pad(fixed(d.win, 2, sign), 9) << pad(fixed(d.draw, 2, sign), 9)
       << pad(fixed(d.lose, 2, sign), 9) << "\n";
  };
  os << pad("Team " + std::to_string(team_id) + " (" + std::to_string(fixtures.size()) + " fixtures)", 30, true)
     << pad("Win", 9) << pad("Draw", 9) << pad("Lose", 9) << "\n";
  row("baseline", baseline, false);
  for (const auto& r : rows) {
    const auto& s = r.substitutions.front();
    row("→ " + std::to_string(s.in_player) + " for " + std::to_string(s.out_player), r.delta, true);
  }
  if (rows.size() > 1) row("combined", combined.delta, true);
  return os.str();
}

json SubstitutionReport::to_json() const {
  auto row_json = [](const SubstitutionRow& r) {
    json subs = json::array();
    for (const auto& s : r.substitutions) subs.push_back({{"out", s.out_player}, {"in", s.in_player}});
    return json{{"substitutions", subs},
                {"distribution", distribution_json(r.distribution)},
                {"delta", distribution_json(r.delta)},
                {"meanYHat", r.mean_y_hat}};
  };
  json rows_json = json::array();
  for (const auto& r : rows) rows_json.push_back(row_json(r));
  return {{"v", 1},
          {"teamId", team_id},
          {"fixtures", fixtures},
          {"baseline", distribution_json(baseline)},
          {"baselineMeanYHat", baseline_mean_y_hat},
          {"rows", rows_json},
          {"combined", row_json(combined)}};
}

}  // namespace higformer
