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

#pragma once

// Training objectives for pretraining, label correction and joint training.

#include <span>
#include <vector>

#include "unilabel/autodiff.hpp"
#include "unilabel/labels.hpp"
#include "unilabel/model.hpp"
#include "unilabel/nn.hpp"

namespace unilabel::losses {

/// Mean absolute error over [n x 1] (or equal-shape) inputs.
ad::Var mae(const ad::Var& preds, const ad::Var& labels);
/// Plain-value version; empty input throws EmptyBatch.
double mae(std::span<const double> preds, std::span<const double> labels);

enum class ZeroRows {
  kThrow,     // ZeroVector for any row with norm <= 1e-12
  kPassZero,  // such rows stay zero
};

/// Row-wise L2 normalization.
ad::Var l2_normalize(const ad::Var& v, ZeroRows zero_rows = ZeroRows::kThrow);

/// InfoNCE over the batch with the unimodal side detached; the positive for
/// row j is row j of `x_uni`, every row of `x_uni` is in the denominator.
ad::Var contrastive_loss(const ad::Var& x_proj, const ad::Var& x_uni, double tau);

struct Stage1Weights {
  double eta = 0.01;    // projected-prediction weight
  double gamma = 0.01;  // contrastive weight
  double tau = 1.0;
  void validate() const;
};

struct Stage3Weights {
  double beta = 0.01;
  void validate() const;
};

/// A batch of inputs and regression targets.
struct Batch {
  std::vector<long long> ids;
  model::Features x;
  ad::Var y;  // [n x 1]
};

/// Every intermediate of a stage-1 forward pass.
struct Stage1Forward {
  PerModality<ad::Var> uni;        // x_m
  model::Fused fused;              // x, y_hat
  PerModality<ad::Var> projected;  // x_{m'}
  PerModality<ad::Var> projected_pred;
};

Stage1Forward stage1_forward(const nn::Bound& p, const model::Features& x);

struct Stage1Terms {
  ad::Var total;
  ad::Var multimodal;
  PerModality<ad::Var> projected;
  PerModality<ad::Var> contrastive;
};

Stage1Terms stage1_loss(const nn::Bound& p, const Batch& batch, const Stage1Weights& w);

struct Stage3Terms {
  ad::Var total;
  ad::Var multimodal;
  PerModality<ad::Var> unimodal;
};

/// Corrected labels looked up by batch id; throws MissingLabel.
Stage3Terms stage3_loss(const nn::Bound& p, const Batch& batch, const LabelStore& labels,
                        const Stage3Weights& w);

}  // namespace unilabel::losses
