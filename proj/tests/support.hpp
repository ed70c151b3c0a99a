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

// Test-only oracles. Nothing here calls into the backward pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "unilabel/tensor.hpp"

namespace unilabel::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = u(rng);
  return Tensor(std::move(shape), std::move(data));
}

inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

/// Central differences of f at `at`, one tensor per input.
inline std::vector<Tensor> numeric_grad(const ScalarFn& f, std::vector<Tensor> at, double h) {
  std::vector<Tensor> out;
  for (std::size_t t = 0; t < at.size(); ++t) {
    Tensor g = Tensor::zeros(at[t].shape());
    for (std::size_t i = 0; i < at[t].size(); ++i) {
      const double saved = at[t][i];
      at[t][i] = saved + h;
      const double fp = f(at);
      at[t][i] = saved - h;
      const double fm = f(at);
      at[t][i] = saved;
      g[i] = (fp - fm) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Largest elementwise relative error between two gradient lists.
inline double max_rel_err(const std::vector<Tensor>& analytic,
                          const std::vector<Tensor>& numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    for (std::size_t i = 0; i < analytic[t].size(); ++i) {
      worst = std::max(worst, rel_err(analytic[t][i], numeric[t][i], floor));
    }
  }
  return worst;
}

}  // namespace unilabel::testing
