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

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernels_internal.hpp"

namespace gradbid::kernels {
namespace {

Isa detect() {
  // GRADBID_ISA=scalar forces the reference path.
  if (const char* env = std::getenv("GRADBID_ISA"); env != nullptr) {
    if (std::string(env) == "scalar") return Isa::kScalar;
  }
  return cpu_supports(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{detect()};
  return slot;
}

// Scratch for the transposing wrappers; kernels are used from one thread
// per model replica.
thread_local std::vector<double> scratch;

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(GRADBID_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::runtime_error("kernel ISA not supported on this CPU: " +
                             std::string(isa_name(isa)));
  }
#if defined(GRADBID_HAVE_AVX2)
  if (isa == Isa::kAvx2) return avx2::kTable;
#endif
  return scalar::kTable;
}

const KernelTable& active() { return table(active_slot().load(std::memory_order_relaxed)); }

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  (void)table(isa);
  active_slot().store(isa, std::memory_order_relaxed);
}

void gemm(std::size_t n, std::size_t k, std::size_t m, const double* a,
          const double* b, double* c, bool accumulate) {
  active().gemm(n, k, m, a, b, c, accumulate);
}

void transpose(std::size_t rows, std::size_t cols, const double* in,
               double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
  }
}

void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const double* a,
             const double* b, double* c, bool accumulate) {
  scratch.resize(k * m);
  transpose(m, k, b, scratch.data());
  active().gemm(n, k, m, a, scratch.data(), c, accumulate);
}

void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const double* a,
             const double* b, double* c, bool accumulate) {
  scratch.resize(k * n);
  transpose(n, k, a, scratch.data());
  active().gemm(k, n, m, scratch.data(), b, c, accumulate);
}

}  // namespace gradbid::kernels
