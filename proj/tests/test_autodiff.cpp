/*
 * Copyright (c) 2026 The unilabel Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "unilabel/autodiff.hpp"
#include "unilabel/errors.hpp"

using namespace unilabel;
using namespace unilabel::ad;
using unilabel::testing::max_rel_err;
using unilabel::testing::numeric_grad;
using unilabel::testing::random_tensor;

namespace {

constexpr double kKinkMargin = 1e-3;

// Two-layer tanh/relu net with an MAE head; params = {w1, b1, w2, b2}.
Var two_layer_mae(const std::vector<Var>& p, const Var& x, const Var& y) {
  Var h = relu(add_rowvec(matmul(x, p[0], false, true), p[1]));
  Var out = add_rowvec(matmul(h, p[2], false, true), p[3]);
  return mean_all(abs(sub(out, y)));
}

// Touches every supported op.
Var everything(const std::vector<Var>& p, const Var& x) {
  Var a = tanh(matmul(x, p[0]));                       // [n x 4]
  Var b = relu(add_rowvec(a, p[1]));                   // [n x 4]
  Var c = exp(scale(slice_cols(b, 1, 2), 0.5));        // [n x 2]
  Var d = log(add_scalar(mul(a, a), 1.0));             // [n x 4]
  Var e = concat_cols(std::vector<Var>{c, d, abs(sub(b, a))});  // [n x 10]
  Var norms = sqrt(add_scalar(sum_rows(mul(e, e)), 0.1));
  Var f = mul_colvec(e, reciprocal(norms));
  Var g = matmul(f, p[2], false, true);                // [n x 3]
  return add(mean_all(g), scale(sum_all(mul(g, g)), 0.1));
}

}  // namespace

TEST_CASE("derivative of x^2 at 3 is 6") {
  Graph g;
  Var x = g.leaf(Tensor::scalar(3.0));
  auto dx = grad(mul(x, x), std::vector<Var>{x});
  CHECK(dx[0].item() == 6.0);
}

TEST_CASE("constant losses and unreachable inputs give zero gradients") {
  Graph g;
  Var x = g.leaf(Tensor({2}, {1.0, 2.0}));
  Var other = g.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
  Var loss = sum_all(Var::constant(Tensor({2}, {4.0, 5.0})));
  auto d = grad(loss, std::vector<Var>{x});
  CHECK(d[0].value() == Tensor::zeros({2}));

  Var loss2 = sum_all(mul(x, x));
  auto d2 = grad(loss2, std::vector<Var>{other, Var::constant(Tensor::scalar(1.0))});
  CHECK(d2[0].value() == Tensor::zeros({3}));
  CHECK(d2[1].value() == Tensor::zeros({1, 1}));
}

TEST_CASE("non-scalar loss is a shape error") {
  Graph g;
  Var x = g.leaf(Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(grad(mul(x, x), std::vector<Var>{x}), ShapeError);
}

TEST_CASE("leaf tensors reject non-finite values") {
  CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), NumericalError);
  CHECK_THROWS_AS(Tensor({2}, {1.0, INFINITY}), NumericalError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ShapeError);
}

TEST_CASE("abs has subgradient zero at the origin") {
  Graph g;
  Var x = g.leaf(Tensor({3}, {-2.0, 0.0, 5.0}));
  auto d = grad(sum_all(abs(x)), std::vector<Var>{x});
  CHECK(d[0].value() == Tensor({3}, {-1.0, 0.0, 1.0}));
}

TEST_CASE("two-layer MAE gradient matches central differences") {
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> params{random_tensor({5, 3}, rng), random_tensor({5}, rng),
                               random_tensor({1, 5}, rng), random_tensor({1}, rng)};
    Var x = Var::constant(random_tensor({6, 3}, rng));
    Var y = Var::constant(random_tensor({6, 1}, rng));
    Graph g;
    auto p = g.leaves(params);
    Var loss = two_layer_mae(p, x, y);
    if (g.min_kink_margin() < kKinkMargin) continue;
    auto analytic = values(grad(loss, p));
    auto numeric = numeric_grad(
        [&](const std::vector<Tensor>& at) {
          std::vector<Var> c;
          for (const auto& t : at) c.push_back(Var::constant(t));
          return two_layer_mae(c, x, y).item();
        },
        params, 1e-5);
    CHECK(max_rel_err(analytic, numeric) < 1e-4);
    ++checked;
  }
  CHECK(checked >= 10);
}

TEST_CASE("composite expression over every op matches finite differences at 100 points") {
  std::mt19937_64 rng(5);
  int checked = 0;
  while (checked < 100) {
    std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({4}, rng),
                               random_tensor({3, 10}, rng)};
    Var x = Var::constant(random_tensor({5, 3}, rng));
    Graph g;
    auto p = g.leaves(params);
    Var loss = everything(p, x);
    if (g.min_kink_margin() < kKinkMargin) continue;
    auto analytic = values(grad(loss, p));
    auto numeric = numeric_grad(
        [&](const std::vector<Tensor>& at) {
          std::vector<Var> c;
          for (const auto& t : at) c.push_back(Var::constant(t));
          return everything(c, x).item();
        },
        params, 1e-5);
    REQUIRE(max_rel_err(analytic, numeric) < 1e-4);
    ++checked;
  }
}

TEST_CASE("differentiating the same graph twice is bitwise reproducible") {
  std::mt19937_64 rng(3);
  std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({4}, rng),
                             random_tensor({3, 10}, rng)};
  Var x = Var::constant(random_tensor({5, 3}, rng));
  Graph g;
  auto p = g.leaves(params);
  Var loss = everything(p, x);
  auto first = values(grad(loss, p));
  auto second = values(grad(loss, p));
  auto third = values(grad(loss, p, /*create_graph=*/true));
  CHECK(first == second);
  CHECK(first == third);
}

TEST_CASE("second derivatives through create_graph") {
  // d2/dx2 tanh(x) = -2 tanh(x) (1 - tanh(x)^2)
  for (double x0 : {-1.3, 0.2, 0.9}) {
    Graph g;
    Var x = g.leaf(Tensor::scalar(x0));
    auto dx = grad(sum_all(tanh(x)), std::vector<Var>{x}, true);
    auto ddx = grad(sum_all(dx[0]), std::vector<Var>{x});
    const double t = std::tanh(x0);
    CHECK(ddx[0].item() == doctest::Approx(-2.0 * t * (1.0 - t * t)).epsilon(1e-12));
  }
  // d2/dx2 of x*exp(x)/sqrt(x) mixes product, exp and sqrt rules.
  Graph g;
  const double x0 = 0.7;
  Var x = g.leaf(Tensor::scalar(x0));
  auto f = [](const Var& v) { return mul(mul(v, exp(v)), reciprocal(sqrt(v))); };
  auto d1 = grad(sum_all(f(x)), std::vector<Var>{x}, true);
  auto d2 = grad(sum_all(d1[0]), std::vector<Var>{x});
  auto d1_at = [&](double at) {
    Graph h;
    Var y = h.leaf(Tensor::scalar(at));
    return grad(sum_all(f(y)), std::vector<Var>{y})[0].item();
  };
  const double fd = (d1_at(x0 + 1e-5) - d1_at(x0 - 1e-5)) / 2e-5;
  CHECK(d2[0].item() == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("hypergradient of the quadratic toy is (1 - alpha)^2 theta") {
  Graph g;
  Var theta = g.leaf(Tensor::scalar(2.0));
  const double alpha = 0.1;
  Var inner = scale(mul(theta, theta), 0.5);
  std::vector<Var> params{theta};
  InnerStep step{params, sgd_step(inner, params, alpha, true), true};
  CHECK(step.updated[0].item() == doctest::Approx(1.8).epsilon(1e-15));
  Var outer = scale(mul(step.updated[0], step.updated[0]), 0.5);
  auto h = hypergrad(outer, step, HypergradMode::kSecondOrder);
  CHECK(std::abs(h[0].item() - 1.62) < 1e-10);

  auto fo = hypergrad(outer, step, HypergradMode::kFirstOrder);
  CHECK(fo[0].item() == doctest::Approx(1.8));
}

TEST_CASE("hypergradient with alpha = 0 equals the plain gradient exactly") {
  std::mt19937_64 rng(21);
  std::vector<Tensor> params{random_tensor({5, 3}, rng), random_tensor({5}, rng),
                             random_tensor({1, 5}, rng), random_tensor({1}, rng)};
  Var x = Var::constant(random_tensor({6, 3}, rng));
  Var y = Var::constant(random_tensor({6, 1}, rng));
  Var x2 = Var::constant(random_tensor({4, 3}, rng));
  Var y2 = Var::constant(random_tensor({4, 1}, rng));

  Graph g;
  auto p = g.leaves(params);
  InnerStep step{p, sgd_step(two_layer_mae(p, x, y), p, 0.0, true), true};
  auto h = values(hypergrad(two_layer_mae(step.updated, x2, y2), step, HypergradMode::kSecondOrder));

  Graph g2;
  auto q = g2.leaves(params);
  auto plain = values(grad(two_layer_mae(q, x2, y2), q));
  CHECK(h == plain);
}

TEST_CASE("hypergradient requires a graph-connected inner gradient") {
  Graph g;
  Var theta = g.leaf(Tensor::scalar(2.0));
  std::vector<Var> params{theta};
  InnerStep step{params, sgd_step(mul(theta, theta), params, 0.1, false), false};
  Var outer = mul(step.updated[0], step.updated[0]);
  CHECK_THROWS_AS(hypergrad(outer, step, HypergradMode::kSecondOrder), MissingSecondOrderGraph);
  CHECK_NOTHROW(hypergrad(outer, step, HypergradMode::kFirstOrder));
}

TEST_CASE("hypergradient of a tanh net matches finite differences of the composite") {
  std::mt19937_64 rng(8);
  const double alpha = 0.3;
  auto net = [](const std::vector<Var>& p, const Var& x, const Var& y) {
    Var h = tanh(add_rowvec(matmul(x, p[0], false, true), p[1]));
    Var out = matmul(h, p[2], false, true);
    return mean_all(mul(sub(out, y), sub(out, y)));
  };
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> params{random_tensor({4, 3}, rng), random_tensor({4}, rng),
                               random_tensor({1, 4}, rng)};
    Var xi = Var::constant(random_tensor({5, 3}, rng)), yi = Var::constant(random_tensor({5, 1}, rng));
    Var xo = Var::constant(random_tensor({7, 3}, rng)), yo = Var::constant(random_tensor({7, 1}, rng));
    Graph g;
    auto p = g.leaves(params);
    InnerStep step{p, sgd_step(net(p, xi, yi), p, alpha, true), true};
    auto analytic = values(hypergrad(net(step.updated, xo, yo), step, HypergradMode::kSecondOrder));
    auto composite = [&](const std::vector<Tensor>& at) {
      Graph h;
      auto q = h.leaves(at);
      auto updated = sgd_step(net(q, xi, yi), q, alpha, false);
      std::vector<Var> c;
      for (const auto& u : updated) c.push_back(detach(u));
      return net(c, xo, yo).item();
    };
    CHECK(max_rel_err(analytic, numeric_grad(composite, params, 1e-5)) < 1e-5);
  }
}

TEST_CASE("shape errors are reported") {
  Var a = Var::constant(Tensor::zeros({2, 3}));
  Var b = Var::constant(Tensor::zeros({3, 2}));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_NOTHROW(matmul(a, a, false, true));
  CHECK_THROWS_AS(add_rowvec(a, Var::constant(Tensor::zeros({2}))), ShapeError);
  CHECK_THROWS_AS(slice_cols(a, 2, 2), ShapeError);
}
