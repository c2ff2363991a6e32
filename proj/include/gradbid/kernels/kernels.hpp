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

#pragma once

// Dense float64 inner loops used by the autodiff core. Every kernel has a
// portable scalar reference and an AVX2+FMA variant; the variant is chosen
// once at startup from CPUID and can be overridden for testing.
//
// All matrices are row-major. Each output element of gemm is produced by a
// single accumulation chain over k in increasing order, so a row of C never
// depends on the contents of any other row of A. The causal-mask guarantees
// of the transformer rely on this.

#include <cstddef>
#include <string_view>

namespace gradbid::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  // c[n x m] = a[n x k] * b[k x m]   (accumulate == false)
  // c[n x m] += a[n x k] * b[k x m]  (accumulate == true)
  void (*gemm)(std::size_t n, std::size_t k, std::size_t m, const double* a,
               const double* b, double* c, bool accumulate);
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = x + y, out = x * y (elementwise; out may alias x or y)
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  // out = max(x, 0); gx += (x > 0) ? gy : 0
  void (*relu)(const double* x, double* out, std::size_t n);
  void (*relu_backward)(const double* x, const double* gy, double* gx,
                        std::size_t n);
};

bool cpu_supports(Isa isa);

// Table for a specific ISA. Throws std::runtime_error if the CPU lacks it.
const KernelTable& table(Isa isa);

// The table all library code goes through.
const KernelTable& active();
Isa active_isa();

// Overrides the detected ISA (tests, benchmarks). Not thread-safe with
// concurrent kernel calls.
void set_active_isa(Isa isa);

// Convenience wrappers over active().
void gemm(std::size_t n, std::size_t k, std::size_t m, const double* a,
          const double* b, double* c, bool accumulate);
// c[n x m] (+)= a[n x k] * b[m x k]^T
void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const double* a,
             const double* b, double* c, bool accumulate);
// c[k x m] (+)= a[n x k]^T * b[n x m]
void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const double* a,
             const double* b, double* c, bool accumulate);

void transpose(std::size_t rows, std::size_t cols, const double* in,
               double* out);

}  // namespace gradbid::kernels
