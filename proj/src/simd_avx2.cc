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

// Compiled with -mavx2 -mfma. Nothing here may run before the dispatcher
// has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>

#include "pgsynth/simd.h"

namespace pgsynth::simd {
namespace {

// Reverses the four lanes of a vector loaded from p[-3..0].
inline __m256d LoadReversed(const double* p) {
  return _mm256_permute4x64_pd(_mm256_loadu_pd(p - 3), 0x1B);
}

inline double HorizontalSum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void Convolve(const double* a, size_t na, const double* b, size_t nb,
              double* out) {
  if (na > nb) {
    std::swap(a, b);
    std::swap(na, nb);
  }
  std::fill(out, out + na + nb - 1, 0.0);
  for (size_t i = 0; i < na; ++i) {
    const __m256d ai = _mm256_set1_pd(a[i]);
    double* o = out + i;
    size_t j = 0;
    for (; j + 4 <= nb; j += 4) {
      const __m256d acc = _mm256_loadu_pd(o + j);
      _mm256_storeu_pd(o + j,
                       _mm256_fmadd_pd(ai, _mm256_loadu_pd(b + j), acc));
    }
    for (; j < nb; ++j) o[j] += a[i] * b[j];
  }
}

double MaxValue(const double* x, size_t n) {
  __m256d m = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) m = _mm256_max_pd(m, _mm256_loadu_pd(x + i));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, m);
  double r = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  for (; i < n; ++i) r = std::max(r, x[i]);
  return r;
}

void Scale(double* x, size_t n, double factor) {
  const __m256d f = _mm256_set1_pd(factor);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(f, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= factor;
}

double DotReversed(const double* a, const double* b_last, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), LoadReversed(b_last - k),
                          acc);
  }
  double s = HorizontalSum(acc);
  for (; k < n; ++k) s += a[k] * *(b_last - k);
  return s;
}

// Skips whole blocks of four products while the running sum stays below
// the target, then finishes lane by lane.
size_t SearchReversed(const double* a, const double* b_last, size_t n,
                      double target) {
  double acc = 0.0;
  size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d p =
        _mm256_mul_pd(_mm256_loadu_pd(a + k), LoadReversed(b_last - k));
    const double block = HorizontalSum(p);
    if (acc + block >= target) break;
    acc += block;
  }
  for (; k < n; ++k) {
    acc += a[k] * *(b_last - k);
    if (acc >= target) return k;
  }
  return n - 1;
}

}  // namespace

const KernelTable& Avx2KernelTableUnchecked() {
  static const KernelTable table = {"avx2", Convolve, MaxValue, Scale,
                                    DotReversed, SearchReversed};
  return table;
}

}  // namespace pgsynth::simd
