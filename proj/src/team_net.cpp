#include "higformer/team_net.hpp"

#include "higformer/errors.hpp"
#include "higformer/player_net.hpp"

namespace higformer {

using ag::Matrix;
using ag::Var;

TeamNet::TeamNet(nn::ParameterStore& store, nn::Initializer& init, const ModelConfig& config,
                 std::size_t num_teams)
    : config_(config), num_teams_(num_teams) {
  const auto h = config.hidden;
  table_ = store.add(groups::kTeamEmbeddings, "team_embeddings/table",
                     init.normal(static_cast<Eigen::Index>(num_teams), h, 0.1));
  Eigen::Index in = h;
  for (int l = 0; l < config.team_layers; ++l) {
    const Eigen::Index out = (l + 1 == config.team_layers) ? config.out_dim : h;
    const auto prefix = groups::kTeamEncoder + "/layer" + std::to_string(l);
    Layer layer;
    layer.weight = store.add(groups::kTeamEncoder, prefix + ".w", init.fan_in_uniform(in, out, in));
    layer.attn_dst = store.add(groups::kTeamEncoder, prefix + ".a_dst", init.fan_in_uniform(out, 1, out));
    layer.attn_src = store.add(groups::kTeamEncoder, prefix + ".a_src", init.fan_in_uniform(out, 1, out));
    layer.rate_scale = store.add(groups::kTeamEncoder, prefix + ".rate_scale", Matrix::Ones(1, 1));
    layers_.push_back(layer);
    in = out;
  }
}

TeamOutput TeamNet::encode_teams(ag::Tape& tape, const nn::ParameterStore& store,
                                 const TeamInteractionGraph& graph) const {
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  if (graph.num_nodes() > num_teams_) {
    throw ConfigError("team graph has " + std::to_string(n) + " teams but the embedding table has " +
                      std::to_string(num_teams_) + " rows");
  }
  Matrix mask = Matrix::Identity(n, n);
  Matrix rates = Matrix::Zero(n, n);
  for (const auto& e : graph.edges) {
    mask(e.dst, e.src) = 1.0;
    rates(e.dst, e.src) = e.winning_rate;
  }
  const auto rate_matrix = tape.constant(rates);

  TeamOutput out;
  auto x = ag::slice_rows(nn::param(tape, store, table_), 0, n);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const auto h = ag::matmul(x, nn::param(tape, store, layer.weight));
    const auto s_dst = ag::matmul(h, nn::param(tape, store, layer.attn_dst));
    const auto s_src = ag::matmul(h, nn::param(tape, store, layer.attn_src));
    auto logits = ag::leaky_relu(ag::outer_sum(s_dst, ag::transpose(s_src)), config_.leaky_slope);
    if (config_.team_rate_bias) {
      // rate_scale (1x1) times the rate matrix, via an outer product with ones
      const auto ones = tape.constant(Matrix::Ones(n, 1));
      const auto scale = ag::matmul(ones, nn::param(tape, store, layer.rate_scale));  // n x 1
      logits = ag::add(logits, ag::scale_rows(rate_matrix, scale));
    }
    const auto alpha = ag::softmax_rows(logits, &mask);
    out.attention.push_back(alpha.value());
    x = ag::matmul(alpha, h);
    if (l + 1 < layers_.size()) x = ag::elu(x);
  }
  out.output = x;
  return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> lookup_match_teams(const Matrix& representation,
                                                               const TeamInteractionGraph& graph,
                                                               TeamId home, TeamId away) {
  const auto hi = graph.index_of(home);
  const auto ai = graph.index_of(away);
  if (!hi) throw LookupError("unknown team " + std::to_string(home));
  if (!ai) throw LookupError("unknown team " + std::to_string(away));
  if (*hi >= representation.rows() || *ai >= representation.rows()) {
    throw LookupError("team representation has too few rows");
  }
  return {representation.row(*hi).transpose(), representation.row(*ai).transpose()};
}

}  // namespace higformer
