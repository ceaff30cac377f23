#include <doctest.h>

#include "higformer/errors.hpp"
#include "higformer/player_net.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace higformer;
using ag::Matrix;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.hidden = 16;
  c.out_dim = 8;
  c.heads = 2;
  c.match_heads = 2;
  c.global_layers = 2;
  c.local_layers = 2;
  c.gate_hidden = 8;
  return c;
}

struct Net {
  nn::ParameterStore store;
  PlayerNet net;
  explicit Net(const ModelConfig& c, std::uint64_t seed = 3) {
    nn::Initializer init(seed);
    net = PlayerNet(store, init, c);
  }
  Matrix value(const std::string& name) const { return store.at(store.find(name)).value; }
};

oracle::PlayerGatLayer gat_layer(const Net& n, int l) {
  const auto p = "local_encoder/layer" + std::to_string(l);
  return {{n.value(p + ".w_self"), n.value(p + ".w_pass"), n.value(p + ".w_defense")},
          n.value(p + ".w_attn"),
          n.value(p + ".a_dst"),
          n.value(p + ".a_src")};
}

PlayerInteractionGraph two_node(EdgeType type, int src, std::int64_t count) {
  PlayerInteractionGraph g;
  g.nodes = {{1, NodeType::kRed}, {2, NodeType::kBlue}};
  g.node_features.resize(2);
  g.node_features[0].counts = {3, 0, 1, 0, 2, 0, 5, 9, 0, 1};
  g.node_features[1].counts = {1, 4, 0, 1, 0, 1, 2, 3, 2, 0};
  g.edges = {{src, 1 - src, type, count}};
  return g;
}

}  // namespace

TEST_CASE("token augmentation: one token per node and per edge") {
  Net n(small_config());
  const auto g = fixtures::four_node_graph();
  const auto in = fixtures::graph_input(g);
  ag::Tape tape;
  const auto seq = n.net.augment_tokens(tape, n.store, in);
  const auto& t = seq.tokens.value();
  REQUIRE(t.rows() == 8);
  CHECK(t.cols() == 16 + 8);
  CHECK(std::count(seq.kinds.begin(), seq.kinds.end(), TokenKind::kNode) == 4);
  CHECK(std::count(seq.kinds.begin(), seq.kinds.end(), TokenKind::kEdge) == 4);

  const Matrix node_types = n.value("type_tables/node_type");
  const Matrix edge_types = n.value("type_tables/edge_type");
  const Matrix& p = in.identifiers;
  for (int v = 0; v < 4; ++v) {
    const Matrix expect = 2.0 * p.row(v) + node_types.row(in.node_types[static_cast<std::size_t>(v)]);
    CHECK((t.block(v, 16, 1, 8) - expect).norm() < 1e-12);
    const Matrix feat = in.features.row(v) * n.value("global_encoder/node_proj.weight") +
                        n.value("global_encoder/node_proj.bias");
    CHECK((t.block(v, 0, 1, 16) - feat).norm() < 1e-12);
  }
  for (int e = 0; e < 4; ++e) {
    const auto& edge = g.edges[static_cast<std::size_t>(e)];
    const Matrix expect = p.row(edge.src) - p.row(edge.dst) + edge_types.row(static_cast<int>(edge.type));
    CHECK((t.block(4 + e, 16, 1, 8) - expect).norm() < 1e-12);
    const Matrix feat = std::log1p(double(edge.count)) * n.value("global_encoder/edge_proj.weight") +
                        n.value("global_encoder/edge_proj.bias");
    CHECK((t.block(4 + e, 0, 1, 16) - feat).norm() < 1e-12);
  }
}

TEST_CASE("identifier width must match the type tables") {
  Net n(small_config());
  const auto in = fixtures::graph_input(fixtures::four_node_graph(), 6);
  ag::Tape tape;
  CHECK_THROWS_AS(n.net.augment_tokens(tape, n.store, in), ConfigError);
}

TEST_CASE("global encoder: shapes and attention rows") {
  Net n(small_config());
  const auto in = fixtures::graph_input(fixtures::four_node_graph());
  ag::Tape tape;
  const auto emb = n.net.encode_global(tape, n.store, in, GlobalMode::kEmbeddings);
  CHECK(emb.output.rows() == 4);
  CHECK(emb.output.cols() == 8);
  CHECK(emb.kinds.size() == 8);
  CHECK(emb.all_attention.size() == 4);  // 2 layers x 2 heads
  for (const auto& a : emb.all_attention) {
    CHECK(a.rows() == 8);
    CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(a.minCoeff() >= 0.0);
  }
  const auto cls = n.net.encode_global(tape, n.store, in, GlobalMode::kClassToken);
  CHECK(cls.output.rows() == 1);
  CHECK(cls.kinds.front() == TokenKind::kClass);
  CHECK(cls.last_layer_attention.front().rows() == 9);
  CHECK_THROWS_AS(n.net.encode_global(tape, n.store, in, GlobalMode::kClassToken, false), ConfigError);
}

TEST_CASE("local encoder matches a two-node oracle") {
  for (const auto type : {EdgeType::kPass, EdgeType::kDefense}) {
    for (int src : {0, 1}) {
      for (std::int64_t count : {1, 7}) {
        auto c = small_config();
        Net n(c, 10 + static_cast<std::uint64_t>(count));
        const auto g = two_node(type, src, count);
        const auto in = fixtures::graph_input(g);
        ag::Tape tape;
        const auto out = n.net.encode_local(tape, n.store, in).output.value();

        std::array<Eigen::VectorXd, 2> x{in.features.row(0).transpose(), in.features.row(1).transpose()};
        for (int l = 0; l < c.local_layers; ++l)
          x = oracle::two_node_player_gat(x, gat_layer(n, l), src, type == EdgeType::kPass ? 1 : 2,
                                          double(count), c.leaky_slope);
        CHECK((out.row(0).transpose() - x[0]).norm() < 1e-12);
        CHECK((out.row(1).transpose() - x[1]).norm() < 1e-12);
      }
    }
  }
}

TEST_CASE("local attention covers self plus typed in-neighbors") {
  Net n(small_config());
  const auto in = fixtures::graph_input(fixtures::four_node_graph());
  ag::Tape tape;
  const auto out = n.net.encode_local(tape, n.store, in);
  REQUIRE(out.attention.size() == 2);
  const auto& a = out.attention[0];
  CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  // Node 0 has no in-edges: attends only to itself.
  CHECK(a(0, 0) == doctest::Approx(1.0));
  // Node 1 receives a pass from 0 and a defense edge from 3.
  CHECK(a(1, 4 + 0) > 0.0);
  CHECK(a(1, 8 + 3) > 0.0);
  CHECK(a(1, 8 + 0) == 0.0);
}

TEST_CASE("gate weights form a distribution and fusion degenerates to one expert") {
  const auto in = fixtures::graph_input(fixtures::four_node_graph());
  Net full(small_config());
  {
    ag::Tape tape;
    const auto w = full.net.gate(tape, full.store, tape.constant(in.features)).value();
    CHECK(w.cols() == 2);
    CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(w.minCoeff() > 0.0);
  }
  auto only_global = small_config();
  only_global.use_local = false;
  auto only_local = small_config();
  only_local.use_global = false;
  Net g(only_global), l(only_local);
  ag::Tape tape;
  const auto fg = g.net.forward(tape, g.store, in).value();
  const auto eg = g.net.encode_global(tape, g.store, in, GlobalMode::kEmbeddings, true).output.value();
  CHECK((fg - eg).norm() == 0.0);
  const auto fl = l.net.forward(tape, l.store, in).value();
  const auto el = l.net.encode_local(tape, l.store, in).output.value();
  CHECK((fl - el).norm() == 0.0);

  const auto z_g = tape.constant(Matrix::Constant(2, 3, 1.0));
  const auto z_l = tape.constant(Matrix::Constant(2, 3, 5.0));
  Matrix w(2, 2);
  w << 0.25, 0.75, 1.0, 0.0;
  const auto fused = fuse(z_g, z_l, tape.constant(w)).value();
  CHECK(fused(0, 0) == doctest::Approx(4.0));
  CHECK(fused(1, 2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(fuse(z_g, tape.constant(Matrix::Zero(3, 3)), tape.constant(w)), ConfigError);
}

TEST_CASE("player network gradients match finite differences") {
  Net n(small_config(), 21);
  const auto in = fixtures::graph_input(fixtures::four_node_graph());
  const Matrix r = nn::Initializer(5).normal(4, 8, 1.0);
  const auto build = [&](ag::Tape& tape) {
    return ag::sum(ag::hadamard(n.net.forward(tape, n.store, in), tape.constant(r)));
  };
  // Key biases shift every logit of a query row equally, so softmax makes
  // their true gradient exactly zero; finite differences only see roundoff.
  std::vector<int> slots, key_bias;
  for (int i = 0; i < static_cast<int>(n.store.size()); ++i)
    (n.store.at(i).name.ends_with(".key.bias") ? key_bias : slots).push_back(i);
  CHECK(key_bias.size() == 2);
  const double err = oracle::gradient_check(
      n.store, slots,
      [&] {
        ag::Tape tape;
        return build(tape).value()(0, 0);
      },
      [&] {
        ag::Tape tape;
        tape.backward(build(tape));
        nn::Gradients g(n.store.size());
        g.add_from(tape);
        return g;
      },
      12, 7);
  CHECK(err < 1e-5);

  ag::Tape tape;
  tape.backward(build(tape));
  nn::Gradients g(n.store.size());
  g.add_from(tape);
  for (int s : key_bias) CHECK(g[s].norm() < 1e-12);
}
