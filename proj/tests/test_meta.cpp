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
#include <set>

#include "meta_support.hpp"
#include "unilabel/errors.hpp"
#include "unilabel/meta.hpp"
#include "unilabel/model.hpp"

using namespace unilabel;
using namespace unilabel::testing;

TEST_CASE("lambda schedule") {
  CHECK(meta::lambda_schedule(0.5, 0) == 0.5);
  CHECK(meta::lambda_schedule(0.5, 1) == 0.25);
  CHECK(std::abs(meta::lambda_schedule(0.9, 9) - 0.34868) < 5e-6);
  for (double init : {0.1, 0.5, 0.99}) {
    for (std::size_t e = 0; e < 64; ++e) {
      CHECK(meta::lambda_schedule(init, e + 1) < meta::lambda_schedule(init, e));
    }
  }
  CHECK_THROWS_AS(meta::lambda_schedule(1.0, 0), ConfigError);
  CHECK_THROWS_AS(meta::lambda_schedule(0.0, 0), ConfigError);
}

TEST_CASE("mixed target") {
  CHECK(meta::mixed_target(2.0, -1.0, 0.0) == -1.0);
  CHECK(meta::mixed_target(2.0, -1.0, 1.0) == 2.0);
  CHECK(meta::mixed_target(2.0, -1.0, 0.25) == -0.25);
  CHECK_THROWS_AS(meta::mixed_target(0.0, 0.0, 1.5), ConfigError);
}

TEST_CASE("label corruption noise") {
  std::mt19937_64 rng(3);
  CHECK(std::abs(meta::corrupt_label(1.25, meta::kMinSigma, rng) - 1.25) < 1e-10);
  CHECK(std::abs(meta::make_noisy_label(-0.5, meta::kMinSigma, rng) + 0.5) < 1e-10);
  CHECK_THROWS_AS(meta::corrupt_label(0.0, 0.0, rng), ConfigError);
  CHECK_THROWS_AS(meta::make_noisy_label(0.0, 1e-13, rng), ConfigError);

  for (double sigma : {1.0, 0.3}) {
    for (int which = 0; which < 2; ++which) {
      std::mt19937_64 r(42 + which);
      const std::size_t n = 100000;
      double sum = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = which == 0 ? meta::corrupt_label(0.7, sigma, r) - 0.7
                                    : meta::make_noisy_label(0.7, sigma, r) - 0.7;
        sum += e;
        sq += e * e;
      }
      const double mean = sum / n;
      const double var = sq / n - mean * mean;
      CHECK(std::abs(mean) < 0.01);
      CHECK(std::abs(var / (sigma * sigma) - 1.0) < 0.02);
    }
  }
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 100; ++i) CHECK(meta::corrupt_label(0.0, 1.0, a) == meta::corrupt_label(0.0, 1.0, b));
}

TEST_CASE("denoising losses") {
  const auto mucn = nn::bind_constant(model::init_mucn(5, 2));
  std::mt19937_64 rng(1);
  const Tensor rep = random_tensor({1, 5}, rng);
  const std::vector<double> zero{0.0}, one{1.0};
  CHECK(meta::unimodal_denoise_loss(mucn, rep, zero, zero, 1e6).item() == 0.0);
  const double v = meta::unimodal_denoise_loss(mucn, rep, one, one, 3.0).item();
  CHECK(std::abs(v - 1.284782) < 5e-7);
  CHECK(std::abs(v - std::abs(1.0 - 3.0 * std::tanh(1.0))) < 1e-15);

  SUBCASE("random sets match per-sample recomputation") {
    auto store = random_mucn(5, rng);
    const auto p = nn::bind_constant(store);
    const Task t = random_task(37, 5, rng);
    double sum = 0.0;
    for (std::size_t j = 0; j < 37; ++j) {
      const Tensor row = meta::gather_rows(t.reps, std::vector<std::size_t>{j});
      const double out = model::mucn_forward(p, ad::Var::constant(row),
                                             ad::Var::constant(Tensor({1, 1}, {t.labels[j]})), 3.0)
                             .item();
      sum += std::abs(t.targets[j] - out);
    }
    CHECK(std::abs(meta::unimodal_denoise_loss(p, t.reps, t.labels, t.targets, 3.0).item() -
                   sum / 37) < 1e-12);
    CHECK(std::abs(meta::multimodal_denoise_loss(p, t.reps, t.labels, t.targets, 3.0).item() -
                   sum / 37) < 1e-12);
  }
  SUBCASE("perfect outputs give zero loss") {
    auto store = random_mucn(5, rng);
    const auto p = nn::bind_constant(store);
    Task t = random_task(20, 5, rng);
    const auto out = model::mucn_forward(p, ad::Var::constant(t.reps),
                                         ad::Var::constant(Tensor({20, 1}, t.labels)), 3.0);
    t.targets.assign(out.value().data().begin(), out.value().data().end());
    CHECK(meta::multimodal_denoise_loss(p, t.reps, t.labels, t.targets, 3.0).item() == 0.0);
  }
  CHECK_THROWS_AS(meta::denoise_loss(mucn, rep, std::vector<double>{1, 2}, one, 3.0), ShapeError);
}

TEST_CASE("outer task set has b * |S| extra rows disjoint from S") {
  std::mt19937_64 rng(5);
  std::vector<std::size_t> task(32);
  for (std::size_t i = 0; i < 32; ++i) task[i] = 7 * i;
  const auto d = meta::draw_outer_set(1284, task, 10, rng);
  CHECK_FALSE(d.with_replacement);
  CHECK(d.extra.size() + task.size() == 352);
  const std::set<std::size_t> extra(d.extra.begin(), d.extra.end());
  CHECK(extra.size() == d.extra.size());
  for (std::size_t i : task) CHECK(extra.count(i) == 0);
  for (std::size_t i : extra) CHECK(i < 1284);

  const auto small = meta::draw_outer_set(40, task = {0, 1, 2, 3}, 10, rng);
  CHECK(small.with_replacement);
  CHECK(small.extra.size() == 40);
  for (std::size_t i : small.extra) CHECK(i < 40);
}

TEST_CASE("inner update on a scalar toy") {
  // inner = outer = theta^2 / 2 at theta = 2, alpha = 0.1: theta' = 1.8.
  auto params = scalar_param(2.0);
  const meta::TaskLoss half_square = [](const nn::Bound& p) {
    return ad::scale(ad::sum_all(ad::mul(p["theta"], p["theta"])), 0.5);
  };
  const auto o = meta::gate_step(params, half_square, half_square, {0.1, 1e-3, 1, true});
  CHECK(o.branch == meta::Branch::kAccepted);
  CHECK(o.loss_pre == 2.0);
  CHECK(std::abs(o.loss_post - 1.62) < 1e-12);
  CHECK(std::abs(params.at("theta")[0] - 1.8) < 1e-15);
}

TEST_CASE("alpha = 0 always takes the meta-update branch") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    std::mt19937_64 rng(seed);
    auto mucn = random_mucn(4, rng);
    const auto before = mucn;
    const Task inner = random_task(6, 4, rng), outer = random_task(66, 4, rng);
    const auto o = meta::gate_step(
        mucn, [&](const nn::Bound& p) { return inner.loss(p, 3.0); },
        [&](const nn::Bound& p) { return outer.loss(p, 3.0); }, {0.0, 1e-3, 1, true});
    CHECK(o.branch == meta::Branch::kMetaUpdated);
    CHECK(o.loss_pre == o.loss_post);
    CHECK_FALSE(mucn == before);
  }
}

TEST_CASE("monotone toy is always accepted with theta = theta'") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ToyGate t = make_toy_gate(seed, false);
    auto params = scalar_param(t.theta0);
    // theta' computed independently: d/dtheta mean|y - 3 tanh(l + theta)|
    // is -3 * mean sech^2(l + theta) while every output is below its target.
    double g = 0.0;
    for (double l : t.inner_labels) g -= 3.0 / std::pow(std::cosh(l + t.theta0), 2);
    g /= static_cast<double>(t.inner_labels.size());
    const auto o = run_toy_gate(t, params);
    CHECK(o.branch == meta::Branch::kAccepted);
    CHECK(o.loss_post < o.loss_pre);
    CHECK(std::abs(params.at("theta")[0] - (t.theta0 - t.alpha * g)) < 1e-13);
  }
}

TEST_CASE("adversarial toy is meta-updated against the hypergradient") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ToyGate t = make_toy_gate(seed, true);
    auto params = scalar_param(t.theta0);
    const auto o = run_toy_gate(t, params);
    CHECK(o.branch == meta::Branch::kMetaUpdated);
    CHECK(o.loss_post >= o.loss_pre);
    // The outer loss rises with theta here, so the hypergradient is positive
    // and the update must lower theta.
    CHECK(params.at("theta")[0] < t.theta0);
  }
}

TEST_CASE("MUCN hypergradient matches finite differences of the composed loss") {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 5 && seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto mucn = random_mucn(3, rng);
    const Task inner = random_task(4, 3, rng), outer = random_task(12, 3, rng);
    const auto r = check_mucn_hypergrad(mucn, inner, outer, 0.05, 3.0);
    if (r.kink_margin < 1e-3) continue;
    ++checked;
    CHECK(r.max_rel_err < 1e-3);
  }
  CHECK(checked == 5);
}

TEST_CASE("first-order gate uses the gradient at theta'") {
  auto params = scalar_param(2.0);
  const meta::TaskLoss half_square = [](const nn::Bound& p) {
    return ad::scale(ad::sum_all(ad::mul(p["theta"], p["theta"])), 0.5);
  };
  // outer = (theta - 5)^2 / 2 grows when the inner step moves theta to 1.8.
  const meta::TaskLoss outer = [](const nn::Bound& p) {
    const ad::Var d = ad::add_scalar(p["theta"], -5.0);
    return ad::scale(ad::sum_all(ad::mul(d, d)), 0.5);
  };
  auto second = params;
  meta::gate_step(params, half_square, outer, {0.1, 0.5, 1, false});
  // d/dtheta' = 1.8 - 5 = -3.2; theta = 2 + 0.5 * 3.2.
  CHECK(std::abs(params.at("theta")[0] - 3.6) < 1e-12);
  meta::gate_step(second, half_square, outer, {0.1, 0.5, 1, true});
  // Second order: -3.2 * (1 - 0.1) = -2.88.
  CHECK(std::abs(second.at("theta")[0] - 3.44) < 1e-12);
}

TEST_CASE("non-finite losses leave the parameters untouched") {
  auto params = scalar_param(1.0);
  const meta::TaskLoss ok = [](const nn::Bound& p) { return ad::sum_all(p["theta"]); };
  const meta::TaskLoss bad = [](const nn::Bound& p) {
    return ad::sum_all(ad::log(ad::add_scalar(ad::scale(p["theta"], 0.0), -1.0)));
  };
  CHECK_THROWS_AS(meta::gate_step(params, ok, bad, {0.1, 0.1, 1, true}), NumericalError);
  CHECK_THROWS_AS(meta::gate_step(params, bad, ok, {0.1, 0.1, 1, true}), NumericalError);
  CHECK(params.at("theta")[0] == 1.0);
}

namespace {

meta::MetaConfig small_config() {
  meta::MetaConfig c;
  c.epochs = 4;
  c.batch_size = 8;
  c.oversample = 2;
  c.alpha = 0.05;
  c.meta_alpha = 0.01;
  c.seed = 77;
  return c;
}

}  // namespace

TEST_CASE("stage-2 loop: gate exclusivity, logging and determinism") {
  const auto bank = random_bank(45, {6, 5, 4}, 1);
  const auto snapshot = bank;
  auto config = small_config();
  const auto a = meta::run_meta(config, bank);
  CHECK(bank == snapshot);
  const std::size_t batches = 6;  // ceil(45 / 8)
  CHECK(a.gates.size() == 3 * batches * config.epochs);
  for (std::size_t m = 0; m < 3; ++m) {
    REQUIRE(a.counts[m].size() == config.epochs);
    std::size_t total = 0;
    for (const auto& c : a.counts[m]) {
      CHECK(c.accepted + c.meta_updated == batches);
      CHECK(c.skipped == 0);
      total += c.accepted + c.meta_updated;
    }
    CHECK(total == batches * config.epochs);
  }
  for (const auto& g : a.gates) {
    CHECK(std::isfinite(g.loss_pre));
    CHECK((g.branch == meta::Branch::kAccepted) == (g.loss_post < g.loss_pre));
  }
  CHECK(a.labels.size() == bank.size());
  for (const auto& [id, row] : a.labels.rows()) {
    for (double v : row.corrected) CHECK(std::abs(v) < config.rho);
  }

  const auto b = meta::run_meta(config, bank);
  CHECK(label_csv(a.labels) == label_csv(b.labels));
  CHECK(meta::gate_log_csv(a.gates) == meta::gate_log_csv(b.gates));
  config.parallel = false;
  const auto c = meta::run_meta(config, bank);
  CHECK(label_csv(a.labels) == label_csv(c.labels));
}

TEST_CASE("stage-2 with zero epochs extracts rho * tanh(y)") {
  const auto bank = random_bank(12, {3, 3, 3}, 4);
  auto config = small_config();
  config.epochs = 0;
  config.rho = 1.0;
  const auto r = meta::run_meta(config, bank);
  CHECK(r.gates.empty());
  REQUIRE(r.labels.size() == 12);
  for (std::size_t j = 0; j < bank.size(); ++j) {
    const auto& row = r.labels.at(bank.ids[j]);
    CHECK(row.y == bank.y[j]);
    for (double v : row.corrected) CHECK(std::abs(v - std::tanh(bank.y[j])) < 1e-15);
  }
}

TEST_CASE("small banks fall back to sampling with replacement and say so") {
  const auto bank = random_bank(10, {3, 3, 3}, 2);
  auto config = small_config();
  config.epochs = 1;
  const auto r = meta::run_meta(config, bank);
  CHECK(r.notes.size() == 3);
  for (const auto& n : r.notes) CHECK(n.find("with replacement") != std::string::npos);
}

TEST_CASE("gate log format") {
  const std::vector<meta::GateRecord> g{{0, 1, Modality::kVisual, 0.5, 0.25, meta::Branch::kAccepted},
                                        {2, 0, Modality::kLanguage, 1.0, 1.0,
                                         meta::Branch::kMetaUpdated}};
  CHECK(meta::gate_log_csv(g) ==
        "epoch,batch,modality,loss_pre,loss_post,branch\n0,1,v,0.5,0.25,accepted\n"
        "2,0,l,1,1,meta_updated\n");
}

TEST_CASE("frozen bank round-trips exactly and rejects malformed input") {
  const auto bank = random_bank(7, {3, 2, 4}, 8);
  const std::string text = meta::bank_jsonl(bank);
  CHECK(meta::parse_bank_jsonl(text) == bank);
  CHECK_THROWS_AS(meta::parse_bank_jsonl(""), ParseError);
  std::string truncated = text.substr(0, text.size() / 2);
  try {
    meta::parse_bank_jsonl(truncated);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() >= 1);
  }
  auto bad = bank;
  bad.y.pop_back();
  CHECK_THROWS_AS(meta::bank_jsonl(bad), ShapeError);
}

TEST_CASE("meta config validation") {
  meta::MetaConfig c;
  c.sigma = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.oversample = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lambda_init = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.k_inner = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(meta::MetaConfig{}.validate());
}
