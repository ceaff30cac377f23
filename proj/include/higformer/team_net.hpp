#pragma once

#include <utility>
#include <vector>

#include "higformer/autograd.hpp"
#include "higformer/graph.hpp"
#include "higformer/model_config.hpp"
#include "higformer/nn.hpp"

namespace higformer {

struct TeamOutput {
  ag::Var output;                     // |V_team| x d
  std::vector<ag::Matrix> attention;  // per layer, |V_team| x |V_team|
};

/// Homogeneous GAT over the team winning-rate graph. Each team's input is a
/// trainable embedding row; a winning-rate edge u -> v adds
/// rate_scale * rate to the attention logit of v attending to u.
class TeamNet {
 public:
  TeamNet() = default;
  TeamNet(nn::ParameterStore& store, nn::Initializer& init, const ModelConfig& config,
          std::size_t num_teams);

  TeamOutput encode_teams(ag::Tape& tape, const nn::ParameterStore& store,
                          const TeamInteractionGraph& graph) const;

  std::size_t num_teams() const { return num_teams_; }
  int embedding_table() const { return table_; }

 private:
  struct Layer {
    int weight = -1;
    int attn_dst = -1;
    int attn_src = -1;
    int rate_scale = -1;
  };
  ModelConfig config_;
  std::size_t num_teams_ = 0;
  int table_ = -1;
  std::vector<Layer> layers_;
};

/// Rows of the two competing teams, in (home, away) order.
std::pair<Eigen::VectorXd, Eigen::VectorXd> lookup_match_teams(const ag::Matrix& representation,
                                                               const TeamInteractionGraph& graph,
                                                               TeamId home, TeamId away);

}  // namespace higformer
