// Copyright 2026 The pgsynth Authors
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

#ifndef PGSYNTH_SIMD_H_
#define PGSYNTH_SIMD_H_

#include <cstddef>

namespace pgsynth::simd {

// Inner loops of the product-tree sampler. Every table computes the same
// quantities; vector variants may differ from the scalar reference only
// by floating-point reassociation and fused multiply-add rounding.
struct KernelTable {
  const char* name;

  // out[k] = sum_j a[j] * b[k - j] for k in [0, na + nb - 1). Overwrites
  // out, which must not alias a or b.
  void (*convolve)(const double* a, size_t na, const double* b, size_t nb,
                   double* out);

  // Largest element of x[0, n); 0 when n == 0. Inputs are nonnegative.
  double (*max_value)(const double* x, size_t n);

  // x[k] *= factor.
  void (*scale)(double* x, size_t n, double factor);

  // sum_k a[k] * b_last[-k] for k in [0, n): pairs a read forward with b
  // read backward from b_last.
  double (*dot_reversed)(const double* a, const double* b_last, size_t n);

  // Smallest k with sum_{m <= k} a[m] * b_last[-m] >= target, or n - 1 when
  // rounding leaves the full sum below target.
  size_t (*search_reversed)(const double* a, const double* b_last, size_t n,
                            double target);
};

const KernelTable& ScalarKernels();

// AVX2+FMA table, or nullptr when it was not compiled in or the CPU lacks
// the instructions.
const KernelTable* Avx2Kernels();

// Table used by the library: the best available one unless the environment
// variable PGSYNTH_SIMD is set to "scalar".
const KernelTable& ActiveKernels();

}  // namespace pgsynth::simd

#endif  // PGSYNTH_SIMD_H_
