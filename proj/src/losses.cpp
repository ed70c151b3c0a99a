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

#include "unilabel/losses.hpp"

#include <algorithm>
#include <cmath>

#include "unilabel/errors.hpp"

namespace unilabel::losses {

namespace {
constexpr double kZeroNorm = 1e-12;
}

ad::Var mae(const ad::Var& preds, const ad::Var& labels) {
  if (preds.shape() != labels.shape()) {
    throw ShapeError("mae: " + shape_string(preds.shape()) + " vs " +
                     shape_string(labels.shape()));
  }
  return ad::mean_all(ad::abs(ad::sub(preds, labels)));
}

double mae(std::span<const double> preds, std::span<const double> labels) {
  if (preds.size() != labels.size()) throw ShapeError("mae: length mismatch");
  if (preds.empty()) throw EmptyBatch();
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += std::abs(labels[i] - preds[i]);
  return sum / static_cast<double>(preds.size());
}

ad::Var l2_normalize(const ad::Var& v, ZeroRows zero_rows) {
  ad::Var sq = ad::sum_rows(ad::mul(v, v));
  const Tensor& s = sq.value();
  // Rows at zero get +1 inside the root so the norm and its derivative stay
  // finite; their (zero) row is then divided by one.
  Tensor fix = Tensor::zeros(s.shape());
  bool any = false;
  for (std::size_t r = 0; r < s.size(); ++r) {
    if (std::sqrt(s[r]) <= kZeroNorm) {
      if (zero_rows == ZeroRows::kThrow) throw ZeroVector();
      fix[r] = 1.0;
      any = true;
    }
  }
  if (any) sq = ad::add(sq, ad::Var::constant(std::move(fix)));
  return ad::mul_colvec(v, ad::reciprocal(ad::sqrt(sq)));
}

ad::Var contrastive_loss(const ad::Var& x_proj, const ad::Var& x_uni, double tau) {
  if (x_proj.shape() != x_uni.shape()) {
    throw ShapeError("contrastive_loss: " + shape_string(x_proj.shape()) + " vs " +
                     shape_string(x_uni.shape()));
  }
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  const ad::Var u = ad::detach(x_uni);
  const std::size_t n = x_proj.rows();
  ad::Var logits = ad::scale(ad::matmul(x_proj, u, false, true), 1.0 / tau);  // [n x n]
  // Row-max shift held constant; it cancels in the log-sum-exp.
  const Tensor& lv = logits.value();
  Tensor shift({n, 1}, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    double mx = lv.at(r, 0);
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, lv.at(r, c));
    shift[r] = mx;
  }
  ad::Var shifted = ad::sub(logits, ad::expand_cols(ad::Var::constant(std::move(shift)), n));
  // Each row's largest term is exp(0) = 1, so the log is >= 0 while the
  // (shifted) positive logit is <= 0; the row loss cannot round below zero.
  Tensor eye = Tensor::zeros({n, n});
  for (std::size_t r = 0; r < n; ++r) eye.at(r, r) = 1.0;
  ad::Var lse = ad::log(ad::sum_rows(ad::exp(shifted)));
  ad::Var positive = ad::sum_rows(ad::mul(shifted, ad::Var::constant(std::move(eye))));
  return ad::mean_all(ad::sub(lse, positive));
}

void Stage1Weights::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(eta >= 0.0) || !(gamma >= 0.0)) throw ConfigError("eta and gamma must be non-negative");
}

void Stage3Weights::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
}

Stage1Forward stage1_forward(const nn::Bound& p, const model::Features& x) {
  Stage1Forward f;
  f.uni = model::encode(p, x);
  f.fused = model::fuse_predict(p, f.uni);
  for (Modality m : kModalities) {
    f.projected[index(m)] = model::project(p, f.fused.x, m);
    f.projected_pred[index(m)] = model::predict_unimodal(p, f.projected[index(m)], m);
  }
  return f;
}

Stage1Terms stage1_loss(const nn::Bound& p, const Batch& batch, const Stage1Weights& w) {
  w.validate();
  const Stage1Forward f = stage1_forward(p, batch.x);
  Stage1Terms t;
  t.multimodal = mae(f.fused.y_hat, batch.y);
  t.total = t.multimodal;
  for (Modality m : kModalities) {
    const std::size_t i = index(m);
    t.projected[i] = mae(f.projected_pred[i], batch.y);
    t.contrastive[i] =
        contrastive_loss(l2_normalize(f.projected[i], ZeroRows::kPassZero),
                         l2_normalize(ad::detach(f.uni[i]), ZeroRows::kPassZero), w.tau);
    t.total = ad::add(t.total, ad::add(ad::scale(t.projected[i], w.eta),
                                       ad::scale(t.contrastive[i], w.gamma)));
  }
  return t;
}

Stage3Terms stage3_loss(const nn::Bound& p, const Batch& batch, const LabelStore& labels,
                        const Stage3Weights& w) {
  w.validate();
  PerModality<ad::Var> targets;
  for (Modality m : kModalities) {
    std::vector<double> v = labels.gather(batch.ids, m);
    const std::size_t n = v.size();
    targets[index(m)] = ad::Var::constant(Tensor({n, 1}, std::move(v)));
  }
  const PerModality<ad::Var> uni = model::encode(p, batch.x);
  const model::Fused fused = model::fuse_predict(p, uni);
  Stage3Terms t;
  t.multimodal = mae(fused.y_hat, batch.y);
  ad::Var sum;
  for (Modality m : kModalities) {
    const std::size_t i = index(m);
    t.unimodal[i] = mae(model::predict_unimodal(p, uni[i], m), targets[i]);
    sum = sum.defined() ? ad::add(sum, t.unimodal[i]) : t.unimodal[i];
  }
  t.total = ad::add(t.multimodal, ad::scale(sum, w.beta));
  return t;
}

}  // namespace unilabel::losses
