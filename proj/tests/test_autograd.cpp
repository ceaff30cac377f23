#include <doctest.h>

#include <functional>

#include "higformer/autograd.hpp"
#include "higformer/nn.hpp"
#include "support/oracles.hpp"

using namespace higformer;
using ag::Matrix;
using ag::Var;

namespace {

using Op = std::function<Var(ag::Tape&, const std::vector<Var>&)>;

/// Checks d sum(op(inputs) .* R) / d inputs against central differences.
double check_op(const std::vector<std::pair<int, int>>& shapes, const Op& op, std::uint64_t seed = 1) {
  nn::ParameterStore store;
  nn::Initializer init(seed);
  std::vector<int> slots;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    slots.push_back(store.add("t", "t/" + std::to_string(i), init.normal(shapes[i].first, shapes[i].second, 1.0)));
  Matrix weights;
  const auto build = [&](ag::Tape& tape) {
    std::vector<Var> in;
    for (int s : slots) in.push_back(nn::param(tape, store, s));
    const auto y = op(tape, in);
    if (weights.size() == 0) weights = nn::Initializer(seed + 99).normal(y.rows(), y.cols(), 1.0);
    return ag::sum(ag::hadamard(y, tape.constant(weights)));
  };
  const auto loss = [&] {
    ag::Tape tape;
    return build(tape).value()(0, 0);
  };
  const auto analytic = [&] {
    ag::Tape tape;
    tape.backward(build(tape));
    nn::Gradients g(store.size());
    g.add_from(tape);
    return g;
  };
  return oracle::gradient_check(store, slots, loss, analytic, 64, seed, 1e-5, 1e-7);
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("linear algebra ops match finite differences") {
  CHECK(check_op({{3, 4}, {4, 2}}, [](auto&, auto& v) { return ag::matmul(v[0], v[1]); }) < kTol);
  CHECK(check_op({{3, 4}, {3, 4}}, [](auto&, auto& v) { return v[0] + v[1]; }) < kTol);
  CHECK(check_op({{3, 4}, {3, 4}}, [](auto&, auto& v) { return v[0] - v[1]; }) < kTol);
  CHECK(check_op({{3, 4}, {3, 4}}, [](auto&, auto& v) { return ag::hadamard(v[0], v[1]); }) < kTol);
  CHECK(check_op({{3, 4}}, [](auto&, auto& v) { return ag::scale(v[0], -1.7); }) < kTol);
  CHECK(check_op({{3, 4}}, [](auto&, auto& v) { return ag::transpose(v[0]); }) < kTol);
  CHECK(check_op({{3, 4}, {1, 4}}, [](auto&, auto& v) { return ag::add_row(v[0], v[1]); }) < kTol);
  CHECK(check_op({{3, 4}, {3, 1}}, [](auto&, auto& v) { return ag::scale_rows(v[0], v[1]); }) < kTol);
  CHECK(check_op({{3, 1}, {1, 5}}, [](auto&, auto& v) { return ag::outer_sum(v[0], v[1]); }) < kTol);
}

TEST_CASE("shape ops and reductions match finite differences") {
  CHECK(check_op({{3, 2}, {3, 4}}, [](auto&, auto& v) { return ag::hconcat(v); }) < kTol);
  CHECK(check_op({{2, 4}, {3, 4}}, [](auto&, auto& v) { return ag::vconcat(v); }) < kTol);
  CHECK(check_op({{5, 3}}, [](auto&, auto& v) { return ag::slice_rows(v[0], 1, 3); }) < kTol);
  CHECK(check_op({{3, 5}}, [](auto&, auto& v) { return ag::slice_cols(v[0], 2, 2); }) < kTol);
  CHECK(check_op({{4, 3}}, [](auto&, auto& v) {
          const std::vector<int> rows{2, 0, 2, 3};
          return ag::gather_rows(v[0], rows);
        }) < kTol);
  CHECK(check_op({{4, 3}}, [](auto&, auto& v) { return ag::mean_rows(v[0]); }) < kTol);
  CHECK(check_op({{4, 3}}, [](auto&, auto& v) { return ag::sum(v[0]); }) < kTol);
}

TEST_CASE("nonlinearities match finite differences") {
  CHECK(check_op({{4, 5}}, [](auto&, auto& v) { return ag::elu(v[0]); }) < kTol);
  CHECK(check_op({{4, 5}}, [](auto&, auto& v) { return ag::leaky_relu(v[0], 0.2); }) < kTol);
  CHECK(check_op({{4, 5}}, [](auto&, auto& v) { return ag::gelu(v[0]); }) < kTol);
  CHECK(check_op({{4, 5}}, [](auto&, auto& v) { return ag::sigmoid(v[0]); }) < kTol);
  CHECK(check_op({{4, 5}}, [](auto&, auto& v) { return ag::square(v[0]); }) < kTol);
  CHECK(check_op({{4, 5}}, [](auto&, auto& v) { return ag::softmax_rows(v[0]); }) < kTol);
  CHECK(check_op({{4, 5}}, [](auto&, auto& v) { return ag::log_softmax_rows(v[0]); }) < kTol);
  CHECK(check_op({{4, 6}, {1, 6}, {1, 6}}, [](auto&, auto& v) { return ag::layer_norm_rows(v[0], v[1], v[2]); }) <
        kTol);
}

TEST_CASE("masked softmax zeros masked entries and empty rows") {
  Matrix mask(3, 3);
  mask << 1, 0, 1, 0, 0, 0, 1, 1, 1;
  CHECK(check_op({{3, 3}}, [&](auto&, auto& v) { return ag::softmax_rows(v[0], &mask); }) < kTol);
  ag::Tape tape;
  const auto s = ag::softmax_rows(tape.constant(Matrix::Constant(3, 3, 500.0)), &mask);
  CHECK(s.value()(0, 1) == 0.0);
  CHECK(s.value().row(1).isZero());
  CHECK(s.value()(0, 0) == doctest::Approx(0.5));
  CHECK(s.value().row(2).sum() == doctest::Approx(1.0));
}

TEST_CASE("gradients accumulate over shared subexpressions") {
  nn::ParameterStore store;
  const int w = store.add("t", "t/w", Matrix::Constant(1, 1, 3.0));
  ag::Tape tape;
  const auto x = nn::param(tape, store, w);
  CHECK(nn::param(tape, store, w).id() == x.id());
  tape.backward(ag::sum(ag::hadamard(x, x) + x));  // d/dx (x^2 + x) = 7
  CHECK(tape.grad(x)(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("frozen slots receive no gradient") {
  nn::ParameterStore store;
  const int a = store.add("t", "t/a", Matrix::Constant(2, 2, 1.0));
  const int b = store.add("t", "t/b", Matrix::Constant(2, 2, 2.0));
  ag::Tape tape;
  tape.freeze_slot(a);
  tape.backward(ag::sum(ag::hadamard(nn::param(tape, store, a), nn::param(tape, store, b))));
  nn::Gradients g(store.size());
  g.add_from(tape);
  CHECK_FALSE(g.touched(a));
  CHECK(g[b].isApprox(Matrix::Constant(2, 2, 1.0)));
}

TEST_CASE("Adam clips and updates only its own slots") {
  nn::ParameterStore store;
  const int a = store.add("t", "t/a", Matrix::Zero(1, 2));
  const int b = store.add("t", "t/b", Matrix::Zero(1, 2));
  nn::Adam adam(store, {a}, {.learning_rate = 0.1, .clip_norm = 1.0});
  nn::Gradients g(store.size());
  g[a] = Matrix::Constant(1, 2, 100.0);
  g[b] = Matrix::Constant(1, 2, 100.0);
  adam.step(store, g);
  // First Adam step moves each coordinate by about lr against the gradient sign.
  CHECK(store.at(a).value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(store.at(b).value.isZero());
  CHECK(adam.steps_taken() == 1);
}
