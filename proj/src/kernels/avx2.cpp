// Copyright 2026 The gradbid Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Compiled with -mavx2 -mfma. Nothing in here may be called unless
// cpu_supports(Isa::kAvx2) returned true.

#include <immintrin.h>

#include <cmath>

#include "kernels_internal.hpp"

namespace gradbid::kernels::avx2 {
namespace {

inline void store_acc(double* dst, __m256d acc, bool accumulate) {
  if (accumulate) acc = _mm256_add_pd(_mm256_loadu_pd(dst), acc);
  _mm256_storeu_pd(dst, acc);
}

// Single-row tail columns [j0, m): scalar fma chain, same order as the
// vector lanes so results do not depend on where the block boundary falls.
inline void row_tail(std::size_t k, std::size_t m, std::size_t j0,
                     const double* arow, const double* b, double* crow,
                     bool accumulate) {
  for (std::size_t j = j0; j < m; ++j) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc = std::fma(arow[p], b[p * m + j], acc);
    crow[j] = accumulate ? crow[j] + acc : acc;
  }
}

// Rows [i0, i0 + 4) x columns [j, j + 8).
inline void block_4x8(std::size_t k, std::size_t m, std::size_t j,
                      const double* a, const double* b, double* c,
                      bool accumulate) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  const double* a0 = a;
  const double* a1 = a + k;
  const double* a2 = a + 2 * k;
  const double* a3 = a + 3 * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * m + j;
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d av = _mm256_broadcast_sd(a0 + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a1 + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a2 + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a3 + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  store_acc(c + j, c00, accumulate);
  store_acc(c + j + 4, c01, accumulate);
  store_acc(c + m + j, c10, accumulate);
  store_acc(c + m + j + 4, c11, accumulate);
  store_acc(c + 2 * m + j, c20, accumulate);
  store_acc(c + 2 * m + j + 4, c21, accumulate);
  store_acc(c + 3 * m + j, c30, accumulate);
  store_acc(c + 3 * m + j + 4, c31, accumulate);
}

// One row x columns [j, j + 4).
inline void block_1x4(std::size_t k, std::size_t m, std::size_t j,
                      const double* arow, const double* b, double* crow,
                      bool accumulate) {
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p),
                          _mm256_loadu_pd(b + p * m + j), acc);
  }
  store_acc(crow + j, acc, accumulate);
}

void gemm(std::size_t n, std::size_t k, std::size_t m, const double* a,
          const double* b, double* c, bool accumulate) {
  const std::size_t m8 = m - m % 8;
  const std::size_t m4 = m - m % 4;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double* ablk = a + i * k;
    double* cblk = c + i * m;
    for (std::size_t j = 0; j < m8; j += 8) block_4x8(k, m, j, ablk, b, cblk, accumulate);
    for (std::size_t r = 0; r < 4; ++r) {
      const double* arow = ablk + r * k;
      double* crow = cblk + r * m;
      for (std::size_t j = m8; j < m4; j += 4) block_1x4(k, m, j, arow, b, crow, accumulate);
      row_tail(k, m, m4, arow, b, crow, accumulate);
    }
  }
  for (; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (std::size_t j = 0; j < m4; j += 4) block_1x4(k, m, j, arow, b, crow, accumulate);
    row_tail(k, m, m4, arow, b, crow, accumulate);
  }
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) total = std::fma(x[i], y[i], total);
  return total;
}

double sum(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) total += x[i];
  return total;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void relu(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // x > 0 ? x : 0, with NaN and -0.0 mapping exactly like the scalar path.
    const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, v));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* gy, double* gx,
                   std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d old = _mm256_loadu_pd(gx + i);
    const __m256d upd = _mm256_add_pd(old, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_blendv_pd(old, upd, mask));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

}  // namespace

const KernelTable kTable{&gemm, &dot,  &sum,  &axpy,
                         &add,  &mul,  &relu, &relu_backward};

}  // namespace gradbid::kernels::avx2
