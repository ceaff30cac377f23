#include "higformer/player_net.hpp"

#include <cmath>

#include "higformer/errors.hpp"

namespace higformer {
namespace {

using ag::Matrix;
using ag::Var;

constexpr int kSelf = 0;
constexpr int kPassSlot = 1;
constexpr int kDefenseSlot = 2;

int relation_slot(EdgeType t) { return t == EdgeType::kPass ? kPassSlot : kDefenseSlot; }

}  // namespace

Matrix count_features(const Matrix& raw_counts) {
  return raw_counts.unaryExpr([](double c) { return std::log1p(c); });
}

GraphInput GraphInput::from(const PlayerInteractionGraph& graph, const NodeIdentifierSet& ids) {
  if (static_cast<std::size_t>(ids.identifiers.rows()) != graph.num_nodes()) {
    throw ConfigError("identifier rows do not match graph nodes");
  }
  GraphInput in;
  in.features = count_features(graph.feature_matrix());
  for (const auto& n : graph.nodes) in.node_types.push_back(static_cast<int>(n.type));
  in.edges = graph.edges;
  in.identifiers = ids.identifiers;
  return in;
}

PlayerNet::PlayerNet(nn::ParameterStore& store, nn::Initializer& init, const ModelConfig& config)
    : config_(config) {
  config.validate();
  const auto d_id = config.id_dim;
  const auto h = config.hidden;
  const auto feat = static_cast<Eigen::Index>(kNumEventKinds);

  node_type_table_ = store.add(groups::kTypeTables, "type_tables/node_type",
                               init.normal(kNumNodeTypes, d_id, 0.02));
  edge_type_table_ = store.add(groups::kTypeTables, "type_tables/edge_type",
                               init.normal(kNumEdgeTypes, d_id, 0.02));

  const auto& g = groups::kGlobalEncoder;
  node_proj_ = nn::Linear::create(store, init, g, g + "/node_proj", feat, h);
  edge_proj_ = nn::Linear::create(store, init, g, g + "/edge_proj", 1, h);
  input_proj_ = nn::Linear::create(store, init, g, g + "/input_proj", h + d_id, h);
  class_token_ = store.add(g, g + "/class_token", init.normal(1, h, 0.02));
  for (int l = 0; l < config.global_layers; ++l) {
    blocks_.push_back(nn::TransformerBlock::create(store, init, g, g + "/block" + std::to_string(l), h,
                                                   config.heads, config.ff_multiplier));
  }
  final_norm_ = nn::LayerNorm::create(store, g, g + "/final_norm", h);
  output_proj_ = nn::Linear::create(store, init, g, g + "/output_proj", h, config.out_dim);

  const auto& lg = groups::kLocalEncoder;
  Eigen::Index in = feat;
  for (int l = 0; l < config.local_layers; ++l) {
    const Eigen::Index out = (l + 1 == config.local_layers) ? config.out_dim : h;
    const auto prefix = lg + "/layer" + std::to_string(l);
    LocalLayer layer;
    static const char* kNames[3] = {"self", "pass", "defense"};
    for (int t = 0; t < 3; ++t) {
      layer.weights[static_cast<std::size_t>(t)] =
          store.add(lg, prefix + ".w_" + kNames[t], init.fan_in_uniform(in, out, in));
    }
    layer.attn_proj = store.add(lg, prefix + ".w_attn", init.fan_in_uniform(in, out, in));
    layer.attn_dst = store.add(lg, prefix + ".a_dst", init.fan_in_uniform(out, 1, out));
    layer.attn_src = store.add(lg, prefix + ".a_src", init.fan_in_uniform(out, 1, out));
    local_layers_.push_back(layer);
    in = out;
  }

  gate_in_ = nn::Linear::create(store, init, groups::kGate, "gate/in", feat, config.gate_hidden);
  gate_out_ = nn::Linear::create(store, init, groups::kGate, "gate/out", config.gate_hidden, 2);
}

TokenSequence PlayerNet::augment_tokens(ag::Tape& tape, const nn::ParameterStore& store,
                                        const GraphInput& graph) const {
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  const auto m = static_cast<Eigen::Index>(graph.edges.size());
  if (graph.identifiers.cols() != config_.id_dim) {
    throw ConfigError("identifier width " + std::to_string(graph.identifiers.cols()) +
                      " does not match type table width " + std::to_string(config_.id_dim));
  }
  if (graph.identifiers.rows() != n || graph.features.rows() != n) {
    throw ConfigError("graph input rows are inconsistent");
  }

  const auto node_types = nn::param(tape, store, node_type_table_);
  const auto edge_types = nn::param(tape, store, edge_type_table_);

  const auto node_feat = node_proj_(tape, store, tape.constant(graph.features));
  const auto node_id = ag::add(tape.constant(2.0 * graph.identifiers), ag::gather_rows(node_types, graph.node_types));
  std::vector<Var> rows{ag::hconcat(std::vector<Var>{node_feat, node_id})};

  TokenSequence seq;
  seq.kinds.assign(static_cast<std::size_t>(n), TokenKind::kNode);
  if (m > 0) {
    Matrix edge_raw(m, 1);
    Matrix direction(m, config_.id_dim);
    std::vector<int> kinds;
    for (Eigen::Index e = 0; e < m; ++e) {
      const auto& edge = graph.edges[static_cast<std::size_t>(e)];
      edge_raw(e, 0) = std::log1p(static_cast<double>(edge.count));
      direction.row(e) = graph.identifiers.row(edge.src) - graph.identifiers.row(edge.dst);
      kinds.push_back(static_cast<int>(edge.type));
    }
    const auto edge_feat = edge_proj_(tape, store, tape.constant(std::move(edge_raw)));
    const auto edge_id = ag::add(tape.constant(std::move(direction)), ag::gather_rows(edge_types, kinds));
    rows.push_back(ag::hconcat(std::vector<Var>{edge_feat, edge_id}));
    seq.kinds.insert(seq.kinds.end(), static_cast<std::size_t>(m), TokenKind::kEdge);
  }
  seq.tokens = rows.size() == 1 ? rows[0] : ag::vconcat(rows);
  seq.feature_width = config_.hidden;
  seq.id_width = config_.id_dim;
  return seq;
}

GlobalOutput PlayerNet::encode_global(ag::Tape& tape, const nn::ParameterStore& store,
                                      const GraphInput& graph, GlobalMode mode,
                                      std::optional<bool> prepend_class_token) const {
  const bool with_class = prepend_class_token.value_or(mode == GlobalMode::kClassToken);
  if (mode == GlobalMode::kClassToken && !with_class) {
    throw ConfigError("class-token readout requires the class token");
  }
  auto seq = augment_tokens(tape, store, graph);
  GlobalOutput out;
  auto x = input_proj_(tape, store, seq.tokens);
  out.kinds = seq.kinds;
  if (with_class) {
    x = ag::vconcat(std::vector<Var>{nn::param(tape, store, class_token_), x});
    out.kinds.insert(out.kinds.begin(), TokenKind::kClass);
  }
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    std::vector<Matrix> attn;
    x = blocks_[l](tape, store, x, &attn);
    out.all_attention.insert(out.all_attention.end(), attn.begin(), attn.end());
    if (l + 1 == blocks_.size()) out.last_layer_attention = std::move(attn);
  }
  x = output_proj_(tape, store, final_norm_(tape, store, x));
  if (!x.value().allFinite()) {
    throw NumericError("non-finite activation in the global encoder (" + std::to_string(x.rows()) +
                       " tokens)");
  }
  const Eigen::Index offset = with_class ? 1 : 0;
  out.output = mode == GlobalMode::kClassToken
                   ? ag::slice_rows(x, 0, 1)
                   : ag::slice_rows(x, offset, static_cast<Eigen::Index>(graph.num_nodes()));
  return out;
}

LocalOutput PlayerNet::encode_local(ag::Tape& tape, const nn::ParameterStore& store,
                                    const GraphInput& graph) const {
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  if (n == 0) throw ConfigError("local encoder needs a nonempty graph");

  // Row v, column block t, column u: relation of type t from u into v.
  Matrix mask = Matrix::Zero(n, 3 * n);
  Matrix multiplier = Matrix::Zero(n, 3 * n);
  for (Eigen::Index v = 0; v < n; ++v) {
    mask(v, v) = 1.0;
    multiplier(v, v) = 1.0;
  }
  for (const auto& e : graph.edges) {
    const auto col = relation_slot(e.type) * n + e.src;
    mask(e.dst, col) = 1.0;
    multiplier(e.dst, col) = std::log1p(static_cast<double>(e.count));
  }
  const auto mult = tape.constant(multiplier);

  LocalOutput out;
  auto x = tape.constant(graph.features);
  for (const auto& layer : local_layers_) {
    const auto proj = ag::matmul(x, nn::param(tape, store, layer.attn_proj));
    const auto s_dst = ag::matmul(proj, nn::param(tape, store, layer.attn_dst));
    const auto s_src = ag::matmul(proj, nn::param(tape, store, layer.attn_src));
    const auto scores = ag::leaky_relu(ag::outer_sum(s_dst, ag::transpose(s_src)), config_.leaky_slope);
    const auto logits = ag::hadamard(ag::hconcat(std::vector<Var>{scores, scores, scores}), mult);
    const auto alpha = ag::softmax_rows(logits, &mask);
    out.attention.push_back(alpha.value());
    std::vector<Var> messages;
    for (int t = 0; t < 3; ++t) {
      const auto h = ag::matmul(x, nn::param(tape, store, layer.weights[static_cast<std::size_t>(t)]));
      messages.push_back(ag::matmul(ag::slice_cols(alpha, t * n, n), h));
    }
    x = ag::elu(ag::add(ag::add(messages[0], messages[1]), messages[2]));
  }
  out.output = x;
  return out;
}

Var PlayerNet::gate(ag::Tape& tape, const nn::ParameterStore& store, const Var& node_features) const {
  const auto hidden = ag::gelu(gate_in_(tape, store, node_features));
  return ag::softmax_rows(gate_out_(tape, store, hidden));
}

Var PlayerNet::expert_weights(ag::Tape& tape, const nn::ParameterStore& store,
                              const Var& node_features) const {
  if (config_.use_global && config_.use_local) return gate(tape, store, node_features);
  Matrix forced = Matrix::Zero(node_features.rows(), 2);
  forced.col(config_.use_global ? 0 : 1).setOnes();
  return tape.constant(std::move(forced));
}

Var PlayerNet::forward(ag::Tape& tape, const nn::ParameterStore& store, const GraphInput& graph) const {
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  const auto zeros = [&] { return tape.constant(Matrix::Zero(n, config_.out_dim)); };
  const auto global = config_.use_global
                          ? encode_global(tape, store, graph, GlobalMode::kEmbeddings, true).output
                          : zeros();
  const auto local = config_.use_local ? encode_local(tape, store, graph).output : zeros();
  const auto weights = expert_weights(tape, store, tape.constant(graph.features));
  return fuse(global, local, weights);
}

Var fuse(const Var& global, const Var& local, const Var& weights) {
  if (global.rows() != local.rows() || global.cols() != local.cols()) {
    throw ConfigError("fuse: expert outputs differ in shape");
  }
  if (weights.rows() != global.rows() || weights.cols() != 2) {
    throw ConfigError("fuse: gate weights must be |V| x 2");
  }
  return ag::add(ag::scale_rows(global, ag::slice_cols(weights, 0, 1)),
                 ag::scale_rows(local, ag::slice_cols(weights, 1, 1)));
}

}  // namespace higformer
