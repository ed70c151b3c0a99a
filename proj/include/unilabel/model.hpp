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

// Network graph: per-modality encoders, fusion network, multimodal and
// unimodal predictors, the contrastive projection heads, and the label
// correction network (MUCN).
//
// Parameter names:
//   enc.<m>.<i>     encoder layers, m in {a, v, l}
//   fusion.<i>      concat(x_l, x_a, x_v) -> 2d -> d
//   pred.M.<i>      d -> hidden -> 1
//   pred.<m>.<i>    d_m -> hidden -> 1
//   cpm.<m>.0       d -> d_m, ReLU
//   mucn.<i>        concat(x_m, label) -> d_m -> d_m -> 1 (separate store)

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unilabel/autodiff.hpp"
#include "unilabel/modality.hpp"
#include "unilabel/nn.hpp"

namespace unilabel::model {

struct ModelDims {
  PerModality<std::size_t> input_dims{24, 24, 40};
  PerModality<std::size_t> embed_dims{256, 64, 64};  // d_a, d_v, d_l
  std::size_t fusion_dim = 32;                        // d
  std::size_t encoder_hidden = 64;
  std::size_t predictor_hidden = 32;

  void validate() const;
};

using Features = PerModality<ad::Var>;

nn::ParamStore init_model(const ModelDims& dims, std::uint64_t seed);

/// x_m = F^m(features_m) for each modality.
PerModality<ad::Var> encode(const nn::Bound& p, const Features& features);

struct Fused {
  ad::Var x;      // [n x d]
  ad::Var y_hat;  // [n x 1]
};

Fused fuse_predict(const nn::Bound& p, const PerModality<ad::Var>& uni);

/// x_{m'} = ReLU(W_m x + b_m).
ad::Var project(const nn::Bound& p, const ad::Var& x, Modality m);

/// P^m on either a projected or a unimodal representation.
ad::Var predict_unimodal(const nn::Bound& p, const ad::Var& rep, Modality m);

/// Head (last layer) zero-initialized, so a fresh network outputs
/// rho * tanh(label).
nn::ParamStore init_mucn(std::size_t embed_dim, std::uint64_t seed, std::uint64_t stream = 0);

/// rho * tanh(label + y'), y' the last layer's output; label is [n x 1].
ad::Var mucn_forward(const nn::Bound& p, const ad::Var& rep, const ad::Var& label, double rho);

/// Rows `id,modality,kind,v_0,...` for every row of `rows`.
std::string embedding_csv(std::span<const long long> ids, Modality m, std::string_view kind,
                          const Tensor& rows);

}  // namespace unilabel::model
