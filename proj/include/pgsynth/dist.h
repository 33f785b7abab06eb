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

#ifndef PGSYNTH_DIST_H_
#define PGSYNTH_DIST_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "pgsynth/random.h"

namespace pgsynth {

// Poisson cdf F(k | mu) and its complement 1 - F(k | mu), evaluated through
// the regularized incomplete gamma function. k < 0 gives 0 and 1.
double PoissonCdf(int64_t k, double mu);
double PoissonUpperTail(int64_t k, double mu);

// Smallest k >= 0 with F(k | mu) >= p. Requires 0 < p < 1 and mu >= 0.
// For p > 1/2 the comparison is made on the upper tail, which keeps
// quantiles near 1 exact.
absl::StatusOr<int64_t> PoissonQuantile(double p, double mu);

// Thread-safe log-gamma for x > 0.
double LogGamma(double x);

// log[Gamma(z + shape) / z!] + z * log_ratio. At z = 0 the result is
// log Gamma(shape) for any log_ratio, including -infinity.
double LogNegBinKernel(int64_t z, double shape, double log_ratio);

// log(sum(exp(x))). Returns -infinity for an empty span or when every
// entry is -infinity.
double LogSumExp(std::span<const double> x);

// Exact Gamma(shape, rate) variates (rate parameterization, mean
// shape / rate). SampleLogGamma returns the logarithm of the draw and stays
// finite for shapes so small that the draw itself underflows.
// Requires shape > 0 and rate > 0.
double SampleLogGamma(double shape, double rate, RandomStream& rng);
double SampleGamma(double shape, double rate, RandomStream& rng);

// Exact draw from Binomial(total, prob) conditioned on [lo, hi] by inverse
// cdf over the renormalized pmf. Fails when 0 <= lo <= hi <= total does not
// hold or the restricted support carries no mass.
absl::StatusOr<int64_t> SampleTruncatedBinomial(int64_t total, double prob,
                                                int64_t lo, int64_t hi,
                                                RandomStream& rng);

// Multinomial(total, weights / sum(weights)) by sequential binomials.
// Weights must be nonnegative with a positive sum unless total is zero.
absl::StatusOr<std::vector<int64_t>> SampleMultinomial(
    int64_t total, std::span<const double> weights, RandomStream& rng);

}  // namespace pgsynth

#endif  // PGSYNTH_DIST_H_
