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

#include <algorithm>
#include <cmath>
#include <random>

#include "support.hpp"
#include "unilabel/errors.hpp"
#include "unilabel/losses.hpp"
#include "unilabel/model.hpp"

using namespace unilabel;
using unilabel::testing::random_tensor;
using unilabel::testing::rel_err;

namespace {

model::ModelDims small_dims() {
  model::ModelDims d;
  d.input_dims = {4, 5, 6};
  d.embed_dims = {6, 5, 4};
  d.fusion_dim = 4;
  d.encoder_hidden = 7;
  d.predictor_hidden = 5;
  return d;
}

model::Features random_features(const model::ModelDims& d, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  model::Features f;
  for (Modality m : kModalities) {
    f[index(m)] = ad::Var::constant(random_tensor({n, d.input_dims[index(m)]}, rng));
  }
  return f;
}

void zero_prefix(nn::ParamStore& s, const std::string& prefix) {
  for (auto& [name, t] : s) {
    if (name.rfind(prefix, 0) == 0) t = Tensor::zeros(t.shape());
  }
}

}  // namespace

TEST_CASE("encode produces one [n x d_m] embedding per modality") {
  const auto dims = small_dims();
  const auto store = model::init_model(dims, 7);
  const auto uni = model::encode(nn::bind_constant(store), random_features(dims, 9, 1));
  for (Modality m : kModalities) {
    CHECK(uni[index(m)].shape() == Shape{9, dims.embed_dims[index(m)]});
  }
}

TEST_CASE("encode with zero weights gives zero embeddings") {
  const auto dims = small_dims();
  auto store = model::init_model(dims, 7);
  zero_prefix(store, "enc.");
  const auto uni = model::encode(nn::bind_constant(store), random_features(dims, 3, 2));
  for (const auto& u : uni) {
    for (double v : u.value().data()) CHECK(v == 0.0);
  }
}

TEST_CASE("model init and forward are deterministic in the seed") {
  const auto dims = small_dims();
  CHECK(model::init_model(dims, 5) == model::init_model(dims, 5));
  CHECK_FALSE(model::init_model(dims, 5) == model::init_model(dims, 6));
  const auto x = random_features(dims, 4, 3);
  const auto a = model::encode(nn::bind_constant(model::init_model(dims, 5)), x);
  const auto b = model::encode(nn::bind_constant(model::init_model(dims, 5)), x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].value() == b[i].value());
}

TEST_CASE("encode rejects features of the wrong width") {
  const auto dims = small_dims();
  const auto store = model::init_model(dims, 7);
  auto x = random_features(dims, 3, 1);
  std::mt19937_64 rng(1);
  x[1] = ad::Var::constant(random_tensor({3, 9}, rng));
  CHECK_THROWS_AS(model::encode(nn::bind_constant(store), x), ShapeError);
}

TEST_CASE("fuse_predict is per-sample: permuting the batch permutes the outputs") {
  const auto dims = small_dims();
  const auto p = nn::bind_constant(model::init_model(dims, 11));
  const auto x = random_features(dims, 6, 4);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  model::Features px;
  for (std::size_t m = 0; m < 3; ++m) {
    const Tensor& src = x[m].value();
    Tensor dst = Tensor::zeros(src.shape());
    for (std::size_t r = 0; r < perm.size(); ++r) {
      for (std::size_t c = 0; c < src.cols(); ++c) dst.at(r, c) = src.at(perm[r], c);
    }
    px[m] = ad::Var::constant(dst);
  }
  const auto a = model::fuse_predict(p, model::encode(p, x));
  const auto b = model::fuse_predict(p, model::encode(p, px));
  for (std::size_t r = 0; r < perm.size(); ++r) {
    CHECK(b.y_hat.value()[r] == a.y_hat.value()[perm[r]]);
    for (std::size_t c = 0; c < dims.fusion_dim; ++c) {
      CHECK(b.x.value().at(r, c) == a.x.value().at(perm[r], c));
    }
  }
}

TEST_CASE("zero head weights make y_hat equal the head bias") {
  const auto dims = small_dims();
  auto store = model::init_model(dims, 3);
  store.at("pred.M.1.weight") = Tensor::zeros(store.at("pred.M.1.weight").shape());
  store.at("pred.M.1.bias") = Tensor({1}, {0.7});
  const auto p = nn::bind_constant(store);
  const auto f = model::fuse_predict(p, model::encode(p, random_features(dims, 5, 8)));
  CHECK(f.y_hat.shape() == Shape{5, 1});
  CHECK(f.x.shape() == Shape{5, dims.fusion_dim});
  for (double v : f.y_hat.value().data()) CHECK(v == 0.7);
}

TEST_CASE("fuse_predict rejects mismatched embedding widths and batch sizes") {
  const auto dims = small_dims();
  const auto p = nn::bind_constant(model::init_model(dims, 3));
  auto uni = model::encode(p, random_features(dims, 4, 1));
  std::mt19937_64 rng(2);
  auto wide = uni;
  wide[0] = ad::Var::constant(random_tensor({4, 9}, rng));
  CHECK_THROWS_AS(model::fuse_predict(p, wide), ShapeError);
  auto tall = uni;
  tall[2] = ad::Var::constant(random_tensor({5, dims.embed_dims[2]}, rng));
  CHECK_THROWS_AS(model::fuse_predict(p, tall), ShapeError);
}

TEST_CASE("y_hat depends on every encoder parameter tensor") {
  const auto dims = small_dims();
  const auto store = model::init_model(dims, 21);
  // Biases start at zero; give them generic values so they carry signal.
  auto params = store;
  std::mt19937_64 rng(5);
  for (auto& [name, t] : params) {
    if (name.find("bias") != std::string::npos) t = random_tensor(t.shape(), rng, 0.05, 0.2);
  }
  const auto x = random_features(dims, 8, 6);
  ad::Graph g;
  const auto p = nn::bind(g, params);
  const auto f = model::fuse_predict(p, model::encode(p, x));
  const ad::Var out = ad::sum_all(f.y_hat);
  const auto grads = ad::grad(out, p.vars());
  const auto names = p.names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].rfind("enc.", 0) != 0) continue;
    const Tensor& gt = grads[i].value();
    // Spot-check the largest entry against a central difference.
    std::size_t best = 0;
    for (std::size_t k = 1; k < gt.size(); ++k) {
      if (std::abs(gt[k]) > std::abs(gt[best])) best = k;
    }
    INFO(names[i]);
    REQUIRE(std::abs(gt[best]) > 0.0);
    const double h = 1e-6;
    auto eval = [&](double delta) {
      auto q = params;
      q.at(names[i])[best] += delta;
      const auto b = nn::bind_constant(q);
      return ad::sum_all(model::fuse_predict(b, model::encode(b, x)).y_hat).item();
    };
    const double fd = (eval(h) - eval(-h)) / (2 * h);
    CHECK(rel_err(gt[best], fd) < 1e-4);
  }
}

TEST_CASE("project maps to d_m, is zero at zero input with zero bias, and is seeded") {
  const auto dims = small_dims();
  const auto store = model::init_model(dims, 9);
  const auto p = nn::bind_constant(store);
  const ad::Var zero = ad::Var::constant(Tensor::zeros({3, dims.fusion_dim}));
  std::mt19937_64 rng(3);
  const ad::Var x = ad::Var::constant(random_tensor({3, dims.fusion_dim}, rng));
  for (Modality m : kModalities) {
    const auto z = model::project(p, zero, m);
    CHECK(z.shape() == Shape{3, dims.embed_dims[index(m)]});
    for (double v : z.value().data()) CHECK(v == 0.0);
    const auto a = model::project(p, x, m);
    CHECK(a.shape() == Shape{3, dims.embed_dims[index(m)]});
    for (double v : a.value().data()) CHECK(v >= 0.0);
    CHECK(a.value() == model::project(nn::bind_constant(model::init_model(dims, 9)), x, m).value());
  }
  const ad::Var bad = ad::Var::constant(Tensor::zeros({3, dims.fusion_dim + 1}));
  CHECK_THROWS_AS(model::project(p, bad, Modality::kVisual), ShapeError);
}

TEST_CASE("predict_unimodal matches a hand-written evaluation") {
  const auto dims = small_dims();
  auto store = model::init_model(dims, 13);
  std::mt19937_64 rng(4);
  for (auto& [name, t] : store) {
    if (name.find("bias") != std::string::npos) t = random_tensor(t.shape(), rng);
  }
  const Modality m = Modality::kAcoustic;
  const std::size_t dm = dims.embed_dims[index(m)];
  const Tensor rep = random_tensor({4, dm}, rng);
  const auto out = model::predict_unimodal(nn::bind_constant(store), ad::Var::constant(rep), m);
  REQUIRE(out.shape() == Shape{4, 1});
  const Tensor& w0 = store.at("pred.a.0.weight");
  const Tensor& b0 = store.at("pred.a.0.bias");
  const Tensor& w1 = store.at("pred.a.1.weight");
  const Tensor& b1 = store.at("pred.a.1.bias");
  for (std::size_t r = 0; r < 4; ++r) {
    double y = b1[0];
    for (std::size_t h = 0; h < w0.rows(); ++h) {
      double a = b0[h];
      for (std::size_t c = 0; c < dm; ++c) a += w0.at(h, c) * rep.at(r, c);
      y += w1.at(0, h) * std::max(a, 0.0);
    }
    CHECK(std::abs(out.value()[r] - y) < 1e-12);
  }
  store.at("pred.a.1.weight") = Tensor::zeros(w1.shape());
  store.at("pred.a.1.bias") = Tensor({1}, {-0.25});
  const auto flat = model::predict_unimodal(nn::bind_constant(store), ad::Var::constant(rep), m);
  for (double v : flat.value().data()) CHECK(v == -0.25);
  CHECK_THROWS_AS(model::predict_unimodal(nn::bind_constant(store),
                                          ad::Var::constant(Tensor::zeros({4, dm + 2})), m),
                  ShapeError);
}

TEST_CASE("fresh MUCN is rho * tanh(label)") {
  const auto store = model::init_mucn(6, 1);
  const auto p = nn::bind_constant(store);
  std::mt19937_64 rng(8);
  const ad::Var rep = ad::Var::constant(random_tensor({1, 6}, rng));
  CHECK(model::mucn_forward(p, rep, ad::Var::constant(Tensor({1, 1}, {0.0})), 3.0).item() == 0.0);
  const double v = model::mucn_forward(p, rep, ad::Var::constant(Tensor({1, 1}, {0.5})), 1.0).item();
  CHECK(std::abs(v - 0.46212) < 5e-6);
  CHECK(std::abs(v - std::tanh(0.5)) < 1e-15);
}

TEST_CASE("MUCN output stays strictly inside (-rho, rho)") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> wide(0.0, 8.0);
  const double rho = 3.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto store = model::init_mucn(4, trial);
    for (auto& [name, t] : store) t = random_tensor(t.shape(), rng, -5.0, 5.0);
    const auto p = nn::bind_constant(store);
    const std::size_t n = 500;
    const ad::Var rep = ad::Var::constant(random_tensor({n, 4}, rng, -20.0, 20.0));
    std::vector<double> labels(n);
    for (auto& l : labels) l = std::clamp(wide(rng), -(rho + 6), rho + 6);
    const auto out = model::mucn_forward(p, rep, ad::Var::constant(Tensor({n, 1}, labels)), rho);
    for (double v : out.value().data()) {
      CHECK(std::abs(v) < rho);
      ++checked;
    }
  }
  CHECK(checked == 10000);
}

TEST_CASE("MUCN rejects non-finite labels and mismatched shapes") {
  const auto p = nn::bind_constant(model::init_mucn(3, 1));
  const ad::Var rep = ad::Var::constant(Tensor::zeros({2, 3}));
  const ad::Var nan = ad::Var::constant(Tensor::unchecked({2, 1}, {0.0, std::nan("")}));
  CHECK_THROWS_AS(model::mucn_forward(p, rep, nan, 3.0), NumericalError);
  const ad::Var inf = ad::Var::constant(Tensor::unchecked({2, 1}, {INFINITY, 0.0}));
  CHECK_THROWS_AS(model::mucn_forward(p, rep, inf, 3.0), NumericalError);
  CHECK_THROWS_AS(model::mucn_forward(p, rep, ad::Var::constant(Tensor::zeros({3, 1})), 3.0),
                  ShapeError);
  CHECK_THROWS_AS(model::mucn_forward(p, ad::Var::constant(Tensor::zeros({2, 4})),
                                      ad::Var::constant(Tensor::zeros({2, 1})), 3.0),
                  ShapeError);
}

TEST_CASE("multimodal loss gradient matches finite differences on 20 parameters") {
  const auto dims = small_dims();
  const double h = 1e-6;
  int checked_models = 0;
  for (std::uint64_t seed = 1; seed < 40 && checked_models < 1; ++seed) {
    auto params = model::init_model(dims, seed);
    std::mt19937_64 rng(seed);
    for (auto& [name, t] : params) {
      if (name.find("bias") != std::string::npos) t = random_tensor(t.shape(), rng, -0.2, 0.2);
    }
    const auto x = random_features(dims, 5, seed + 100);
    const ad::Var y = ad::Var::constant(random_tensor({5, 1}, rng, -2.0, 2.0));
    auto loss_at = [&](const nn::ParamStore& s) {
      const auto b = nn::bind_constant(s);
      return losses::mae(model::fuse_predict(b, model::encode(b, x)).y_hat, y).item();
    };
    ad::Graph g;
    const auto p = nn::bind(g, params);
    const ad::Var loss = losses::mae(model::fuse_predict(p, model::encode(p, x)).y_hat, y);
    if (g.min_kink_margin() < 1e-4) continue;
    ++checked_models;
    const auto grads = ad::grad(loss, p.vars());
    const auto names = p.names();
    std::uniform_int_distribution<std::size_t> pick(0, names.size() - 1);
    for (int k = 0; k < 20; ++k) {
      const std::size_t t = pick(rng);
      std::uniform_int_distribution<std::size_t> el(0, params.at(names[t]).size() - 1);
      const std::size_t e = el(rng);
      auto q = params;
      q.at(names[t])[e] += h;
      const double fp = loss_at(q);
      q.at(names[t])[e] -= 2 * h;
      const double fm = loss_at(q);
      INFO(names[t], "[", e, "]");
      CHECK(rel_err(grads[t].value()[e], (fp - fm) / (2 * h)) < 1e-4);
    }
  }
  CHECK(checked_models == 1);
}

TEST_CASE("a freshly built model shares no storage with an existing one") {
  const auto dims = small_dims();
  auto first = model::init_model(dims, 4);
  const auto snapshot = first;
  auto fresh = model::init_model(dims, 4);
  auto a = first.begin();
  for (auto b = fresh.begin(); b != fresh.end(); ++a, ++b) {
    CHECK(a->second.data().data() != b->second.data().data());
  }
  for (auto& [name, t] : fresh) t = Tensor::filled(t.shape(), 1.5);
  CHECK(first == snapshot);
}

TEST_CASE("embedding export writes id, modality, kind and values") {
  const std::vector<long long> ids{7, 12};
  const Tensor rows({2, 2}, {0.5, -1.0, 0.25, 3.0});
  CHECK(model::embedding_csv(ids, Modality::kVisual, "proj", rows) ==
        "7,v,proj,0.5,-1\n12,v,proj,0.25,3\n");
  CHECK_THROWS_AS(model::embedding_csv(ids, Modality::kVisual, "uni", Tensor::zeros({3, 2})),
                  ShapeError);
}
