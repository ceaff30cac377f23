#include <doctest.h>

#include <numeric>

#include "higformer/errors.hpp"
#include "higformer/team_net.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace higformer;
using ag::Matrix;

namespace {

ModelConfig small_config(int layers = 2, bool rate_bias = true) {
  ModelConfig c;
  c.hidden = 8;
  c.out_dim = 4;
  c.team_layers = layers;
  c.heads = 2;
  c.match_heads = 2;
  c.team_rate_bias = rate_bias;
  return c;
}

struct Net {
  nn::ParameterStore store;
  TeamNet net;
  ModelConfig config;
  Net(const ModelConfig& c, std::size_t teams, std::uint64_t seed = 2) : config(c) {
    nn::Initializer init(seed);
    net = TeamNet(store, init, c, teams);
  }
  Matrix value(const std::string& name) const { return store.at(store.find(name)).value; }
  Matrix run(const TeamInteractionGraph& g) const {
    ag::Tape tape;
    return net.encode_teams(tape, store, g).output.value();
  }
};

}  // namespace

TEST_CASE("team encoder matches a two-node oracle") {
  for (bool bias : {true, false}) {
    for (int src : {0, 1}) {
      Net n(small_config(2, bias), 2, 5 + static_cast<std::uint64_t>(src));
      n.store.at(n.store.find("team_encoder/layer0.rate_scale")).value(0, 0) = 1.7;
      TeamInteractionGraph g{{4, 9}, {{src, 1 - src, 0.8}}};
      const Matrix out = n.run(g);
      const Matrix table = n.value("team_embeddings/table");
      std::array<Eigen::VectorXd, 2> x{table.row(0).transpose(), table.row(1).transpose()};
      for (int l = 0; l < 2; ++l) {
        const auto p = "team_encoder/layer" + std::to_string(l);
        oracle::TeamGatLayer layer{n.value(p + ".w"), n.value(p + ".a_dst"), n.value(p + ".a_src"),
                                   n.value(p + ".rate_scale")(0, 0)};
        x = oracle::two_node_team_gat(x, layer, src, 0.8, bias, l == 0, n.config.leaky_slope);
      }
      CHECK((out.row(0).transpose() - x[0]).norm() < 1e-12);
      CHECK((out.row(1).transpose() - x[1]).norm() < 1e-12);
    }
  }
}

TEST_CASE("rate bias switch changes attention only when enabled") {
  const auto g = fixtures::three_team_graph();
  Net with(small_config(1, true), 3), without(small_config(1, false), 3);
  ag::Tape tape;
  const auto a = with.net.encode_teams(tape, with.store, g).attention[0];
  const auto b = without.net.encode_teams(tape, without.store, g).attention[0];
  // Same seed, so parameters agree; only the winning-rate term differs.
  CHECK((a - b).norm() > 1e-6);
  CHECK(a(1, 0) > 0.0);
  CHECK(a(0, 1) == 0.0);
  CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("an isolated team keeps its own projection") {
  Net n(small_config(1), 4);
  auto g = fixtures::three_team_graph();
  g.teams.push_back(7);
  const Matrix out = n.run(g);
  const Matrix expect = n.value("team_embeddings/table").row(3) * n.value("team_encoder/layer0.w");
  CHECK((out.row(3) - expect).norm() < 1e-12);
}

TEST_CASE("team encoder is equivariant to node relabeling") {
  Net n(small_config(3), 5, 9);
  TeamInteractionGraph g{{1, 2, 3, 4, 5}, {{0, 1, 0.7}, {2, 1, 0.55}, {3, 4, 1.0}, {4, 0, 0.6}}};
  const Matrix base = n.run(g);
  const std::vector<int> perm = {3, 0, 4, 1, 2};  // new index of old node i
  Net m(small_config(3), 5, 9);
  Matrix& table = m.store.at(m.net.embedding_table()).value;
  const Matrix orig = table;
  for (int i = 0; i < 5; ++i) table.row(perm[static_cast<std::size_t>(i)]) = orig.row(i);
  TeamInteractionGraph pg{{1, 2, 3, 4, 5}, {}};
  for (auto e : g.edges) pg.edges.push_back({perm[static_cast<std::size_t>(e.src)], perm[static_cast<std::size_t>(e.dst)], e.winning_rate});
  const Matrix permuted = m.run(pg);
  for (int i = 0; i < 5; ++i) CHECK((permuted.row(perm[static_cast<std::size_t>(i)]) - base.row(i)).norm() < 1e-12);
}

TEST_CASE("team lookup and table size checks") {
  const auto g = fixtures::three_team_graph();
  Matrix rep(3, 2);
  rep << 1, 2, 3, 4, 5, 6;
  const auto [home, away] = lookup_match_teams(rep, g, 3, 1);
  CHECK(home == Eigen::Vector2d(5, 6));
  CHECK(away == Eigen::Vector2d(1, 2));
  CHECK_THROWS_AS(lookup_match_teams(rep, g, 3, 42), LookupError);
  Net n(small_config(1), 2);
  ag::Tape tape;
  CHECK_THROWS_AS(n.net.encode_teams(tape, n.store, g), ConfigError);
}

TEST_CASE("team encoder gradients match finite differences") {
  Net n(small_config(2), 3, 13);
  const auto g = fixtures::three_team_graph();
  const Matrix r = nn::Initializer(1).normal(3, 4, 1.0);
  const auto build = [&](ag::Tape& tape) {
    return ag::sum(ag::hadamard(n.net.encode_teams(tape, n.store, g).output, tape.constant(r)));
  };
  std::vector<int> slots(n.store.size());
  std::iota(slots.begin(), slots.end(), 0);
  const double err = oracle::gradient_check(
      n.store, slots,
      [&] {
        ag::Tape tape;
        return build(tape).value()(0, 0);
      },
      [&] {
        ag::Tape tape;
        tape.backward(build(tape));
        nn::Gradients grads(n.store.size());
        grads.add_from(tape);
        return grads;
      },
      32, 3);
  CHECK(err < 1e-6);
}
