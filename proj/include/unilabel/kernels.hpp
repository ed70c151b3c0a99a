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

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation; an AVX2+FMA variant is selected at runtime when the CPU
// supports it. The environment variable UNILABEL_SIMD=scalar forces the
// reference path.

#include <cstddef>
#include <span>

namespace unilabel::kernels {

enum class Isa { kScalar, kAvx2 };

struct AdamWCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double weight_decay;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

/// Function table for one instruction set. Pointers are raw and unchecked;
/// use the span wrappers below outside of this module.
struct KernelTable {
  Isa isa;
  // c[n x m] = op(a) * op(b), all row-major and contiguous. op(a) is [n x k];
  // with trans_a the stored a is [k x n]. Likewise b is stored [m x k] under
  // trans_b.
  void (*gemm)(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m, bool trans_a, bool trans_b);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  // out = a + s * b
  void (*axpy)(const double* a, double s, const double* b, double* out, std::size_t n);
  void (*relu)(const double* a, double* out, std::size_t n);
  // out[i] = a[i] > 0 ? 1 : 0
  void (*step)(const double* a, double* out, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*adamw)(double* param, const double* grad, double* m, double* v, std::size_t n,
                const AdamWCoeffs& c);
};

const KernelTable& scalar_table() noexcept;
/// nullptr when the binary was built without the AVX2 translation unit.
const KernelTable* avx2_table() noexcept;

bool cpu_supports(Isa isa) noexcept;
/// Table for `isa`; throws std::invalid_argument when unsupported here.
const KernelTable& table(Isa isa);

/// The table every library routine dispatches through.
const KernelTable& active() noexcept;
/// Overrides the runtime choice. Not thread-safe against concurrent kernel use.
void select(Isa isa);
const char* isa_name(Isa isa) noexcept;

// Span wrappers over active().
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t n, std::size_t k, std::size_t m, bool trans_a = false,
          bool trans_b = false);
void transpose(std::span<const double> a, std::span<double> out, std::size_t rows,
               std::size_t cols);
void add(std::span<const double> a, std::span<const double> b, std::span<double> out);
void sub(std::span<const double> a, std::span<const double> b, std::span<double> out);
void mul(std::span<const double> a, std::span<const double> b, std::span<double> out);
void scale(std::span<const double> a, double s, std::span<double> out);
void axpy(std::span<const double> a, double s, std::span<const double> b,
          std::span<double> out);
void relu(std::span<const double> a, std::span<double> out);
void step(std::span<const double> a, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
void adamw(std::span<double> param, std::span<const double> grad, std::span<double> m,
           std::span<double> v, const AdamWCoeffs& c);

}  // namespace unilabel::kernels
