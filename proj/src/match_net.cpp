#include "higformer/match_net.hpp"

#include <algorithm>
#include <memory>

#include "higformer/errors.hpp"

namespace higformer {

using ag::Matrix;
using ag::Var;

std::vector<PooledPlayerEmbedding> pool_history(std::span<const std::vector<Eigen::VectorXd>> histories,
                                                std::size_t capacity, Eigen::Index width) {
  std::vector<PooledPlayerEmbedding> out;
  out.reserve(histories.size());
  for (const auto& h : histories) {
    PooledPlayerEmbedding p;
    p.vector = Eigen::VectorXd::Zero(width);
    const auto start = h.size() > capacity ? h.size() - capacity : 0;
    for (auto i = start; i < h.size(); ++i) {
      if (h[i].size() != width) throw ConfigError("pool_history: embedding width mismatch");
      p.vector += h[i];
    }
    p.history_length = h.size() - start;
    if (p.history_length > 0) p.vector /= static_cast<double>(p.history_length);
    out.push_back(std::move(p));
  }
  return out;
}

MatchNet::MatchNet(nn::ParameterStore& store, nn::Initializer& init, const ModelConfig& config)
    : config_(config) {
  const auto& g = groups::kMatchNet;
  const auto d = config.out_dim;
  no_history_ = store.add(g, g + "/no_history", init.normal(1, d, 0.02));
  for (int l = 0; l < config.match_layers; ++l) {
    blocks_.push_back(nn::TransformerBlock::create(store, init, g, g + "/block" + std::to_string(l), d,
                                                   config.match_heads, config.ff_multiplier));
  }
  const Eigen::Index outputs = config.loss_mode == LossMode::kCrossEntropy ? 3 : 1;
  if (config.head_hidden > 0) {
    head_hidden_ = nn::Linear::create(store, init, g, g + "/head_hidden", d, config.head_hidden);
    head_out_ = nn::Linear::create(store, init, g, g + "/head_out", config.head_hidden, outputs);
  } else {
    head_out_ = nn::Linear::create(store, init, g, g + "/head_out", d, outputs);
  }
}

Var MatchNet::pool(ag::Tape& tape, const nn::ParameterStore& store, const PlayerNet& player_net,
                   const MatchInput& input) const {
  const auto n = static_cast<Eigen::Index>(input.players.size());
  const auto d = config_.out_dim;
  Eigen::Index total = 0;
  for (const auto& p : input.players) total += p.global.rows();
  if (!config_.use_player_net || total == 0) return tape.constant(Matrix::Zero(n, d));

  Matrix global(total, d), local(total, d), features(total, static_cast<Eigen::Index>(kNumEventKinds));
  Matrix average = Matrix::Zero(n, total);
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = input.players[static_cast<std::size_t>(i)];
    const auto h = p.global.rows();
    if (p.local.rows() != h || p.features.rows() != h || (h > 0 && (p.global.cols() != d || p.local.cols() != d))) {
      throw ConfigError("player history blocks have inconsistent shapes");
    }
    if (h == 0) continue;
    global.middleRows(row, h) = p.global;
    local.middleRows(row, h) = p.local;
    features.middleRows(row, h) = p.features;
    average.block(i, row, 1, h).setConstant(1.0 / static_cast<double>(h));
    row += h;
  }
  const auto weights = player_net.expert_weights(tape, store, tape.constant(std::move(features)));
  const auto fused = fuse(tape.constant(std::move(global)), tape.constant(std::move(local)), weights);
  return ag::matmul(tape.constant(std::move(average)), fused);
}

Var MatchNet::compare_match(ag::Tape& tape, const nn::ParameterStore& store, const Var& pooled,
                            const Var& team_rows, std::span<const std::size_t> history_lengths,
                            std::vector<Matrix>* attention) const {
  if (pooled.cols() != config_.out_dim || team_rows.cols() != config_.out_dim ||
      pooled.rows() != team_rows.rows()) {
    throw ConfigError("compare_match: width mismatch between player and team embeddings");
  }
  if (static_cast<Eigen::Index>(history_lengths.size()) != pooled.rows()) {
    throw ConfigError("compare_match: history lengths do not match the roster");
  }
  Matrix cold(pooled.rows(), 1);
  for (std::size_t i = 0; i < history_lengths.size(); ++i) {
    cold(static_cast<Eigen::Index>(i), 0) = history_lengths[i] == 0 ? 1.0 : 0.0;
  }
  auto x = ag::add(pooled, team_rows);
  if (config_.use_player_net && cold.sum() > 0.0) {
    x = ag::add(x, ag::matmul(tape.constant(std::move(cold)), nn::param(tape, store, no_history_)));
  }
  for (const auto& block : blocks_) x = block(tape, store, x, attention);
  return x;
}

MatchOutput MatchNet::predict(ag::Tape& tape, const nn::ParameterStore& store, const Var& z_match,
                              std::span<const bool> is_home) const {
  std::vector<int> home, away;
  for (std::size_t i = 0; i < is_home.size(); ++i) (is_home[i] ? home : away).push_back(static_cast<int>(i));
  if (home.empty() || away.empty()) throw PredictionError("each team needs at least one player");
  MatchOutput out;
  out.z_match = z_match;
  out.r = ag::mean_rows(ag::gather_rows(z_match, home));
  out.b = ag::mean_rows(ag::gather_rows(z_match, away));
  auto diff = ag::sub(out.r, out.b);
  if (head_hidden_.weight >= 0) diff = ag::gelu(head_hidden_(tape, store, diff));
  const auto raw = head_out_(tape, store, diff);
  if (config_.loss_mode == LossMode::kCrossEntropy) {
    out.logits = raw;
    const auto probs = ag::softmax_rows(raw);
    Matrix weights(3, 1);
    weights << 1.0, 0.5, 0.0;
    out.y_hat = ag::matmul(probs, tape.constant(std::move(weights)));
  } else {
    out.y_hat = ag::sigmoid(raw);
  }
  return out;
}

MatchOutput MatchNet::forward(ag::Tape& tape, const nn::ParameterStore& store, const PlayerNet& player_net,
                              const MatchInput& unordered, const Var& team_representation) const {
  // Canonical order makes the output bitwise independent of roster order.
  MatchInput input = unordered;
  std::stable_sort(input.players.begin(), input.players.end(), [](const PlayerSlot& a, const PlayerSlot& b) {
    return a.home != b.home ? a.home : a.player_id < b.player_id;
  });
  const auto n = input.players.size();
  std::vector<int> team_index;
  std::vector<std::size_t> lengths;
  std::vector<char> home_flags;
  for (const auto& p : input.players) {
    team_index.push_back(p.home ? input.home_team : input.away_team);
    lengths.push_back(p.history_length());
    home_flags.push_back(p.home ? 1 : 0);
  }
  const auto pooled = pool(tape, store, player_net, input);
  Var team_rows;
  if (config_.use_team_net) {
    if (input.home_team < 0 || input.away_team < 0) throw ConfigError("match input lacks team indices");
    team_rows = ag::gather_rows(team_representation, team_index);
  } else {
    team_rows = tape.constant(Matrix::Zero(static_cast<Eigen::Index>(n), config_.out_dim));
  }
  std::vector<Matrix> attention;
  const auto z = compare_match(tape, store, pooled, team_rows, lengths, &attention);
  std::unique_ptr<bool[]> flags(new bool[n]);
  for (std::size_t i = 0; i < n; ++i) flags[i] = home_flags[i] != 0;
  auto out = predict(tape, store, z, std::span<const bool>(flags.get(), n));
  out.attention = std::move(attention);
  return out;
}

MatchPrediction to_prediction(const MatchOutput& out, const ModelConfig& config) {
  MatchPrediction p;
  p.y_hat = out.y_hat.value()(0, 0);
  p.r = out.r.value().row(0).transpose();
  p.b = out.b.value().row(0).transpose();
  if (config.loss_mode == LossMode::kCrossEntropy) {
    const auto& l = out.logits.value();
    Eigen::Index best = 0;
    l.row(0).maxCoeff(&best);
    p.outcome_class = static_cast<Outcome>(best);
  } else {
    p.outcome_class = classify(std::clamp(p.y_hat, 0.0, 1.0), config.thresholds);
  }
  return p;
}

}  // namespace higformer
