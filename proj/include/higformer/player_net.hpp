#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "higformer/autograd.hpp"
#include "higformer/graph.hpp"
#include "higformer/model_config.hpp"
#include "higformer/nn.hpp"

namespace higformer {

namespace groups {
inline const std::string kTypeTables = "type_tables";
inline const std::string kGlobalEncoder = "global_encoder";
inline const std::string kLocalEncoder = "local_encoder";
inline const std::string kGate = "gate";
inline const std::string kTeamEmbeddings = "team_embeddings";
inline const std::string kTeamEncoder = "team_encoder";
inline const std::string kMatchNet = "match_net";
}  // namespace groups

/// log(1 + count) applied to raw event counts before they enter any network.
ag::Matrix count_features(const ag::Matrix& raw_counts);

/// Model-ready view of one cached match graph.
struct GraphInput {
  ag::Matrix features;       // |V| x 10, log(1 + count)
  std::vector<int> node_types;
  std::vector<GraphEdge> edges;
  ag::Matrix identifiers;    // |V| x d_id

  static GraphInput from(const PlayerInteractionGraph& graph, const NodeIdentifierSet& ids);
  std::size_t num_nodes() const { return node_types.size(); }
};

enum class TokenKind { kClass, kNode, kEdge };

struct TokenSequence {
  ag::Var tokens;  // rows: node tokens then edge tokens
  std::vector<TokenKind> kinds;
  Eigen::Index feature_width = 0;
  Eigen::Index id_width = 0;
};

enum class GlobalMode { kEmbeddings, kClassToken };

struct GlobalOutput {
  ag::Var output;  // |V| x d in embeddings mode, 1 x d in class-token mode
  std::vector<TokenKind> kinds;  // kinds of the attended sequence
  std::vector<ag::Matrix> last_layer_attention;  // one per head
  std::vector<ag::Matrix> all_attention;         // every layer, every head
};

struct LocalOutput {
  ag::Var output;  // |V| x d
  /// Per layer: |V| x 3|V| attention over (self, pass, defense) in-neighbors.
  std::vector<ag::Matrix> attention;
};

/// Player interaction network: token graph transformer (global expert),
/// heterogeneous GAT (local expert), and the per-node gate fusing them.
class PlayerNet {
 public:
  PlayerNet() = default;
  PlayerNet(nn::ParameterStore& store, nn::Initializer& init, const ModelConfig& config);

  TokenSequence augment_tokens(ag::Tape& tape, const nn::ParameterStore& store,
                               const GraphInput& graph) const;

  /// `prepend_class_token` defaults to the mode; embeddings can also be read
  /// with the class token present, which matches how the encoder is pretrained.
  GlobalOutput encode_global(ag::Tape& tape, const nn::ParameterStore& store, const GraphInput& graph,
                             GlobalMode mode, std::optional<bool> prepend_class_token = {}) const;

  LocalOutput encode_local(ag::Tape& tape, const nn::ParameterStore& store, const GraphInput& graph) const;

  /// |V| x 2 expert weights (global, local) from raw node features.
  ag::Var gate(ag::Tape& tape, const nn::ParameterStore& store, const ag::Var& node_features) const;

  /// Gate weights honoring the ablation switches (forced one-hot when an expert is off).
  ag::Var expert_weights(ag::Tape& tape, const nn::ParameterStore& store,
                         const ag::Var& node_features) const;

  /// Fused player embeddings for one graph.
  ag::Var forward(ag::Tape& tape, const nn::ParameterStore& store, const GraphInput& graph) const;

  const ModelConfig& config() const { return config_; }
  int node_type_table() const { return node_type_table_; }
  int edge_type_table() const { return edge_type_table_; }

 private:
  struct LocalLayer {
    std::array<int, 3> weights{};  // self, pass, defense
    int attn_proj = -1;
    int attn_dst = -1;
    int attn_src = -1;
  };

  ModelConfig config_;
  int node_type_table_ = -1;
  int edge_type_table_ = -1;
  nn::Linear node_proj_, edge_proj_, input_proj_, output_proj_;
  int class_token_ = -1;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_norm_;
  std::vector<LocalLayer> local_layers_;
  nn::Linear gate_in_, gate_out_;
};

/// Z = p_glo * Z_glo + p_loc * Z_loc with each node's weights broadcast over its row.
ag::Var fuse(const ag::Var& global, const ag::Var& local, const ag::Var& weights);

}  // namespace higformer
