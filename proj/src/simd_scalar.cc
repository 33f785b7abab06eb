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

#include <algorithm>

#include "pgsynth/simd.h"

namespace pgsynth::simd {
namespace {

void Convolve(const double* a, size_t na, const double* b, size_t nb,
              double* out) {
  if (na > nb) {
    std::swap(a, b);
    std::swap(na, nb);
  }
  std::fill(out, out + na + nb - 1, 0.0);
  for (size_t i = 0; i < na; ++i) {
    const double ai = a[i];
    double* o = out + i;
    for (size_t j = 0; j < nb; ++j) o[j] += ai * b[j];
  }
}

double MaxValue(const double* x, size_t n) {
  double m = 0.0;
  for (size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void Scale(double* x, size_t n, double factor) {
  for (size_t i = 0; i < n; ++i) x[i] *= factor;
}

double DotReversed(const double* a, const double* b_last, size_t n) {
  double s = 0.0;
  for (size_t k = 0; k < n; ++k) s += a[k] * *(b_last - k);
  return s;
}

size_t SearchReversed(const double* a, const double* b_last, size_t n,
                      double target) {
  double acc = 0.0;
  for (size_t k = 0; k < n; ++k) {
    acc += a[k] * *(b_last - k);
    if (acc >= target) return k;
  }
  return n - 1;
}

}  // namespace

const KernelTable& ScalarKernels() {
  static const KernelTable table = {"scalar", Convolve, MaxValue, Scale,
                                    DotReversed, SearchReversed};
  return table;
}

}  // namespace pgsynth::simd
