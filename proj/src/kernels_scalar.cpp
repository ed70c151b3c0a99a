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

// Reference kernels. These define the semantics the SIMD variants are
// tested against.

#include <cmath>

#include "unilabel/kernels.hpp"

namespace unilabel::kernels {
namespace {

void gemm_scalar(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m, bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < n * m; ++i) c[i] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * n + i] : a[i * k + p];
      if (trans_b) {
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * b[j * k + p];
      } else {
        const double* brow = b + p * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy_scalar(const double* a, double s, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + s * b[i];
}

void relu_scalar(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void step_scalar(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? 1.0 : 0.0;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void adamw_scalar(double* param, const double* grad, double* m, double* v, std::size_t n,
                  const AdamWCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = m[i] / c.bias_correction1;
    const double vhat = v[i] / c.bias_correction2;
    param[i] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * param[i]);
  }
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{Isa::kScalar, gemm_scalar, add_scalar,  sub_scalar,
                                 mul_scalar,   scale_scalar, axpy_scalar, relu_scalar,
                                 step_scalar,  dot_scalar,  adamw_scalar};
  return table;
}

}  // namespace unilabel::kernels
