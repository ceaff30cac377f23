#pragma once

#include <span>
#include <vector>

#include "higformer/autograd.hpp"
#include "higformer/model_config.hpp"
#include "higformer/nn.hpp"
#include "higformer/player_net.hpp"

namespace higformer {

struct PooledPlayerEmbedding {
  Eigen::VectorXd vector;
  std::size_t history_length = 0;
};

/// Mean of each player's last `capacity` embeddings (chronological input,
/// most recent last). Players without history pool to the zero vector.
std::vector<PooledPlayerEmbedding> pool_history(std::span<const std::vector<Eigen::VectorXd>> histories,
                                                std::size_t capacity, Eigen::Index width);

/// One rostered player with the expert embeddings of their past matches.
struct PlayerSlot {
  PlayerId player_id = 0;
  bool home = true;
  ag::Matrix global;    // h x d, oldest first
  ag::Matrix local;     // h x d
  ag::Matrix features;  // h x 10, log(1 + count)
  std::size_t history_length() const { return static_cast<std::size_t>(global.rows()); }
};

struct MatchInput {
  std::vector<PlayerSlot> players;
  int home_team = -1;  // team graph index
  int away_team = -1;
};

struct MatchOutput {
  ag::Var y_hat;   // 1 x 1, home-win score in (0, 1)
  ag::Var logits;  // 1 x 3 (win, draw, lose), cross-entropy mode only
  ag::Var r, b;    // 1 x d pooled home / away representations
  ag::Var z_match; // players x d
  std::vector<ag::Matrix> attention;
};

struct MatchPrediction {
  double y_hat = 0.5;
  Outcome outcome_class = Outcome::kLose;
  Eigen::VectorXd r;
  Eigen::VectorXd b;
};

/// Match comparison transformer and prediction head.
class MatchNet {
 public:
  MatchNet() = default;
  MatchNet(nn::ParameterStore& store, nn::Initializer& init, const ModelConfig& config);

  /// Gate-fused, history-averaged embedding per rostered player (players x d).
  ag::Var pool(ag::Tape& tape, const nn::ParameterStore& store, const PlayerNet& player_net,
               const MatchInput& input) const;

  /// Adds each player's team row (and the no-history vector for cold starts)
  /// and runs the encoder layers. No positional encoding.
  ag::Var compare_match(ag::Tape& tape, const nn::ParameterStore& store, const ag::Var& pooled,
                        const ag::Var& team_rows, std::span<const std::size_t> history_lengths,
                        std::vector<ag::Matrix>* attention = nullptr) const;

  MatchOutput predict(ag::Tape& tape, const nn::ParameterStore& store, const ag::Var& z_match,
                      std::span<const bool> is_home) const;

  /// Full forward from stored histories and a team representation. Players are
  /// processed home first, then by player id; z_match and attention follow that order.
  MatchOutput forward(ag::Tape& tape, const nn::ParameterStore& store, const PlayerNet& player_net,
                      const MatchInput& input, const ag::Var& team_representation) const;

  int no_history_vector() const { return no_history_; }

 private:
  ModelConfig config_;
  int no_history_ = -1;
  std::vector<nn::TransformerBlock> blocks_;
  nn::Linear head_hidden_, head_out_;
};

/// Home-win score and class from a forward pass.
MatchPrediction to_prediction(const MatchOutput& out, const ModelConfig& config);

}  // namespace higformer
