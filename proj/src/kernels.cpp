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

#include "unilabel/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string_view>

namespace unilabel::kernels {

#if !defined(UNILABEL_HAVE_AVX2)
const KernelTable* avx2_table() noexcept { return nullptr; }
#endif

bool cpu_supports(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(UNILABEL_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::invalid_argument(std::string("instruction set not available: ") +
                                isa_name(isa));
  }
  return isa == Isa::kAvx2 ? *avx2_table() : scalar_table();
}

const char* isa_name(Isa isa) noexcept {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

namespace {

const KernelTable* detect() noexcept {
  if (const char* env = std::getenv("UNILABEL_SIMD")) {
    if (std::string_view(env) == "scalar") return &scalar_table();
  }
  if (cpu_supports(Isa::kAvx2)) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> ptr{detect()};
  return ptr;
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_relaxed); }

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t n, std::size_t k, std::size_t m, bool trans_a, bool trans_b) {
  require(a.size() == n * k && b.size() == k * m && c.size() == n * m, "gemm: size mismatch");
  active().gemm(a.data(), b.data(), c.data(), n, k, m, trans_a, trans_b);
}

void transpose(std::span<const double> a, std::span<double> out, std::size_t rows,
               std::size_t cols) {
  require(a.size() == rows * cols && out.size() == rows * cols, "transpose: size mismatch");
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t r1 = std::min(rows, r0 + kBlock);
      const std::size_t c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = a[r * cols + c];
      }
    }
  }
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  require(a.size() == b.size() && a.size() == out.size(), "add: size mismatch");
  active().add(a.data(), b.data(), out.data(), a.size());
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  require(a.size() == b.size() && a.size() == out.size(), "sub: size mismatch");
  active().sub(a.data(), b.data(), out.data(), a.size());
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  require(a.size() == b.size() && a.size() == out.size(), "mul: size mismatch");
  active().mul(a.data(), b.data(), out.data(), a.size());
}

void scale(std::span<const double> a, double s, std::span<double> out) {
  require(a.size() == out.size(), "scale: size mismatch");
  active().scale(a.data(), s, out.data(), a.size());
}

void axpy(std::span<const double> a, double s, std::span<const double> b,
          std::span<double> out) {
  require(a.size() == b.size() && a.size() == out.size(), "axpy: size mismatch");
  active().axpy(a.data(), s, b.data(), out.data(), a.size());
}

void relu(std::span<const double> a, std::span<double> out) {
  require(a.size() == out.size(), "relu: size mismatch");
  active().relu(a.data(), out.data(), a.size());
}

void step(std::span<const double> a, std::span<double> out) {
  require(a.size() == out.size(), "step: size mismatch");
  active().step(a.data(), out.data(), a.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: size mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

void adamw(std::span<double> param, std::span<const double> grad, std::span<double> m,
           std::span<double> v, const AdamWCoeffs& c) {
  const auto n = param.size();
  require(grad.size() == n && m.size() == n && v.size() == n, "adamw: size mismatch");
  active().adamw(param.data(), grad.data(), m.data(), v.data(), n, c);
}

}  // namespace unilabel::kernels
