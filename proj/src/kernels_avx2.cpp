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

// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "unilabel/kernels.hpp"

namespace unilabel::kernels {
namespace {

// 6x8 register block. A is packed into zero-padded panels of six interleaved
// rows and B into zero-padded k x 8 column panels, so the inner loop streams
// both operands: twelve accumulators, two panel loads and six broadcasts per
// step of the shared dimension. Each output is accumulated over p in
// increasing order, matching the scalar kernel's order.
inline void block_6x8(const double* ap, const double* bp, double* c, std::size_t rows,
                      std::size_t cols, std::size_t k, std::size_t m) {
  __m256d c00 = _mm256_setzero_pd(), c01 = c00, c10 = c00, c11 = c00, c20 = c00, c21 = c00;
  __m256d c30 = c00, c31 = c00, c40 = c00, c41 = c00, c50 = c00, c51 = c00;
  for (std::size_t p = 0; p < k; ++p, ap += 6, bp += 8) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d x = _mm256_broadcast_sd(ap);
    c00 = _mm256_fmadd_pd(x, b0, c00);
    c01 = _mm256_fmadd_pd(x, b1, c01);
    x = _mm256_broadcast_sd(ap + 1);
    c10 = _mm256_fmadd_pd(x, b0, c10);
    c11 = _mm256_fmadd_pd(x, b1, c11);
    x = _mm256_broadcast_sd(ap + 2);
    c20 = _mm256_fmadd_pd(x, b0, c20);
    c21 = _mm256_fmadd_pd(x, b1, c21);
    x = _mm256_broadcast_sd(ap + 3);
    c30 = _mm256_fmadd_pd(x, b0, c30);
    c31 = _mm256_fmadd_pd(x, b1, c31);
    x = _mm256_broadcast_sd(ap + 4);
    c40 = _mm256_fmadd_pd(x, b0, c40);
    c41 = _mm256_fmadd_pd(x, b1, c41);
    x = _mm256_broadcast_sd(ap + 5);
    c50 = _mm256_fmadd_pd(x, b0, c50);
    c51 = _mm256_fmadd_pd(x, b1, c51);
  }
  const __m256d acc[12] = {c00, c01, c10, c11, c20, c21, c30, c31, c40, c41, c50, c51};
  if (cols == 8) {
    for (std::size_t r = 0; r < rows; ++r) {
      _mm256_storeu_pd(c + r * m, acc[2 * r]);
      _mm256_storeu_pd(c + r * m + 4, acc[2 * r + 1]);
    }
    return;
  }
  alignas(32) double tile[8];
  for (std::size_t r = 0; r < rows; ++r) {
    _mm256_store_pd(tile, acc[2 * r]);
    _mm256_store_pd(tile + 4, acc[2 * r + 1]);
    for (std::size_t j = 0; j < cols; ++j) c[r * m + j] = tile[j];
  }
}

void gemm_avx2(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m, bool trans_a, bool trans_b) {
  if (n == 0 || m == 0) return;
  thread_local std::vector<double> apack;
  thread_local std::vector<double> bpack;
  const std::size_t n6 = (n + 5) / 6 * 6;
  apack.assign(n6 * k, 0.0);
  for (std::size_t i0 = 0; i0 < n; i0 += 6) {
    double* dst = apack.data() + i0 * k;
    const std::size_t rows = std::min<std::size_t>(6, n - i0);
    if (trans_a) {
      for (std::size_t p = 0; p < k; ++p) {
        const double* src = a + p * n + i0;
        for (std::size_t r = 0; r < rows; ++r) dst[p * 6 + r] = src[r];
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* src = a + (i0 + r) * k;
        for (std::size_t p = 0; p < k; ++p) dst[p * 6 + r] = src[p];
      }
    }
  }
  bpack.resize(8 * k);
  for (std::size_t j0 = 0; j0 < m; j0 += 8) {
    const std::size_t cols = std::min<std::size_t>(8, m - j0);
    if (cols < 8) std::fill(bpack.begin(), bpack.end(), 0.0);
    if (trans_b) {
      for (std::size_t j = 0; j < cols; ++j) {
        const double* src = b + (j0 + j) * k;
        for (std::size_t p = 0; p < k; ++p) bpack[8 * p + j] = src[p];
      }
    } else if (cols == 8) {
      for (std::size_t p = 0; p < k; ++p) {
        const double* src = b + p * m + j0;
        _mm256_storeu_pd(bpack.data() + 8 * p, _mm256_loadu_pd(src));
        _mm256_storeu_pd(bpack.data() + 8 * p + 4, _mm256_loadu_pd(src + 4));
      }
    } else {
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < cols; ++j) bpack[8 * p + j] = b[p * m + j0 + j];
      }
    }
    for (std::size_t i0 = 0; i0 < n; i0 += 6) {
      block_6x8(apack.data() + i0 * k, bpack.data(), c + i0 * m + j0,
                std::min<std::size_t>(6, n - i0), cols, k, m);
    }
  }
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const double* a, double s, double* out, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
  }
  for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_avx2(const double* a, double s, const double* b, double* out, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i,
                     _mm256_fmadd_pd(sv, _mm256_loadu_pd(b + i), _mm256_loadu_pd(a + i)));
  }
  for (; i < n; ++i) out[i] = std::fma(s, b[i], a[i]);
}

void relu_avx2(const double* a, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(a + i);
    // x where x > 0, +0.0 elsewhere.
    _mm256_storeu_pd(out + i, _mm256_and_pd(x, _mm256_cmp_pd(x, zero, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void step_avx2(const double* a, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(a + i);
    _mm256_storeu_pd(out + i, _mm256_and_pd(one, _mm256_cmp_pd(x, zero, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? 1.0 : 0.0;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void adamw_avx2(double* param, const double* grad, double* m, double* v, std::size_t n,
                const AdamWCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1), b1c = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2), b2c = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d eps = _mm256_set1_pd(c.eps), lr = _mm256_set1_pd(c.lr);
  const __m256d wd = _mm256_set1_pd(c.weight_decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mv = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(b1c, g));
    const __m256d vv = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i),
                                       _mm256_mul_pd(b2c, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_div_pd(mv, bc1);
    const __m256d vhat = _mm256_div_pd(vv, bc2);
    const __m256d p = _mm256_loadu_pd(param + i);
    const __m256d upd = _mm256_fmadd_pd(
        wd, p, _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), eps)));
    _mm256_storeu_pd(param + i, _mm256_fnmadd_pd(lr, upd, p));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = m[i] / c.bias_correction1;
    const double vhat = v[i] / c.bias_correction2;
    param[i] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * param[i]);
  }
}

}  // namespace

const KernelTable* avx2_table() noexcept {
  static const KernelTable table{Isa::kAvx2, gemm_avx2, add_avx2,  sub_avx2,
                                 mul_avx2,   scale_avx2, axpy_avx2, relu_avx2,
                                 step_avx2,  dot_avx2,  adamw_avx2};
  return &table;
}

}  // namespace unilabel::kernels
