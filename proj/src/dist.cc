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

#include "pgsynth/dist.h"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace pgsynth {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Relative weight below which binomial pmf terms vanish in double precision.
constexpr double kNegligibleLogWeight = -745.0;

double LogBinomialPmf(int64_t k, int64_t n, double log_p, double log_q) {
  double lp = LogGamma(n + 1.0) - LogGamma(k + 1.0) - LogGamma(n - k + 1.0);
  if (k > 0) lp += k * log_p;
  if (n - k > 0) lp += (n - k) * log_q;
  return lp;
}

}  // namespace

double PoissonCdf(int64_t k, double mu) {
  if (k < 0) return 0.0;
  if (mu <= 0.0) return 1.0;
  return boost::math::gamma_q(static_cast<double>(k) + 1.0, mu);
}

double PoissonUpperTail(int64_t k, double mu) {
  if (k < 0) return 1.0;
  if (mu <= 0.0) return 0.0;
  return boost::math::gamma_p(static_cast<double>(k) + 1.0, mu);
}

absl::StatusOr<int64_t> PoissonQuantile(double p, double mu) {
  if (!(p > 0.0 && p < 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("poisson quantile: probability ", p, " outside (0, 1)"));
  }
  if (!(mu >= 0.0) || !std::isfinite(mu)) {
    return absl::InvalidArgumentError(
        absl::StrCat("poisson quantile: mean ", mu, " must be finite and >= 0"));
  }
  if (mu == 0.0) return 0;

  const double tail = 1.0 - p;  // exact for p in [1/2, 1)
  auto reached = [&](int64_t k) {
    if (k < 0) return false;
    return p > 0.5 ? PoissonUpperTail(k, mu) <= tail : PoissonCdf(k, mu) >= p;
  };

  const double z =
      boost::math::quantile(boost::math::normal_distribution<double>(), p);
  const double sd = std::sqrt(mu);
  int64_t guess = static_cast<int64_t>(std::floor(std::max(0.0, mu + z * sd)));
  int64_t step = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(sd)));

  // Invariant after bracketing: !reached(lo) and reached(hi).
  int64_t lo, hi;
  if (reached(guess)) {
    hi = guess;
    lo = guess - step;
    while (reached(lo)) {
      hi = lo;
      step *= 2;
      lo = std::max<int64_t>(-1, lo - step);
    }
  } else {
    lo = guess;
    hi = guess + step;
    while (!reached(hi)) {
      lo = hi;
      step *= 2;
      hi += step;
    }
  }
  while (hi - lo > 1) {
    const int64_t mid = lo + (hi - lo) / 2;
    (reached(mid) ? hi : lo) = mid;
  }
  return hi;
}

double LogGamma(double x) { return boost::math::lgamma(x); }

double LogNegBinKernel(int64_t z, double shape, double log_ratio) {
  assert(shape > 0.0);
  if (z == 0) return LogGamma(shape);
  const double zd = static_cast<double>(z);
  return LogGamma(zd + shape) - LogGamma(zd + 1.0) + zd * log_ratio;
}

double LogSumExp(std::span<const double> x) {
  if (x.empty()) return kNegInf;
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double SampleLogGamma(double shape, double rate, RandomStream& rng) {
  assert(shape > 0.0 && rate > 0.0);
  // Shape below one: X = Y * U^(1/shape) with Y ~ Gamma(shape + 1).
  double log_boost = 0.0;
  double a = shape;
  if (a < 1.0) {
    log_boost = std::log(rng.Uniform()) / a;
    a += 1.0;
  }
  // Marsaglia and Tsang squeeze-rejection for a >= 1.
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.StandardNormal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.Uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2 ||
        std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return std::log(d * v) + log_boost - std::log(rate);
    }
  }
}

double SampleGamma(double shape, double rate, RandomStream& rng) {
  return std::exp(SampleLogGamma(shape, rate, rng));
}

absl::StatusOr<int64_t> SampleTruncatedBinomial(int64_t total, double prob,
                                                int64_t lo, int64_t hi,
                                                RandomStream& rng) {
  if (!(0 <= lo && lo <= hi && hi <= total)) {
    return absl::FailedPreconditionError(absl::StrCat(
        "truncated binomial: empty support [", lo, ", ", hi, "] for total ",
        total));
  }
  if (!(prob >= 0.0 && prob <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("truncated binomial: probability ", prob));
  }
  if (prob == 0.0 || prob == 1.0) {
    const int64_t k = prob == 0.0 ? 0 : total;
    if (k < lo || k > hi) {
      return absl::FailedPreconditionError(
          "truncated binomial: support carries no mass");
    }
    return k;
  }
  if (lo == hi) return lo;

  const double log_p = std::log(prob);
  const double log_q = std::log1p(-prob);
  const int64_t mode = std::clamp(
      static_cast<int64_t>(std::floor((total + 1) * prob)), lo, hi);
  const double log_peak = LogBinomialPmf(mode, total, log_p, log_q);

  // The pmf is log-concave, so weights fall monotonically away from the
  // mode; stop once they no longer register in double precision.
  int64_t first = mode;
  while (first > lo &&
         LogBinomialPmf(first - 1, total, log_p, log_q) - log_peak >
             kNegligibleLogWeight) {
    --first;
  }
  int64_t last = mode;
  while (last < hi &&
         LogBinomialPmf(last + 1, total, log_p, log_q) - log_peak >
             kNegligibleLogWeight) {
    ++last;
  }
  std::vector<double> w(static_cast<size_t>(last - first + 1));
  double sum = 0.0;
  for (int64_t k = first; k <= last; ++k) {
    w[k - first] = std::exp(LogBinomialPmf(k, total, log_p, log_q) - log_peak);
    sum += w[k - first];
  }
  const double target = rng.Uniform() * sum;
  double acc = 0.0;
  for (int64_t k = first; k <= last; ++k) {
    acc += w[k - first];
    if (acc >= target) return k;
  }
  return last;
}

absl::StatusOr<std::vector<int64_t>> SampleMultinomial(
    int64_t total, std::span<const double> weights, RandomStream& rng) {
  if (total < 0) return absl::InvalidArgumentError("multinomial: negative total");
  std::vector<double> suffix(weights.size() + 1, 0.0);
  for (size_t i = weights.size(); i-- > 0;) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      return absl::InvalidArgumentError("multinomial: invalid weight");
    }
    suffix[i] = suffix[i + 1] + weights[i];
  }
  std::vector<int64_t> out(weights.size(), 0);
  if (total == 0) return out;
  if (!(suffix[0] > 0.0)) {
    return absl::FailedPreconditionError("multinomial: all weights are zero");
  }
  int64_t remaining = total;
  for (size_t i = 0; i < weights.size() && remaining > 0; ++i) {
    if (weights[i] == 0.0) continue;
    // The last positive weight takes everything left.
    const double p =
        suffix[i + 1] > 0.0 ? std::min(1.0, weights[i] / suffix[i]) : 1.0;
    auto k = SampleTruncatedBinomial(remaining, p, 0, remaining, rng);
    if (!k.ok()) return k.status();
    out[i] = *k;
    remaining -= *k;
  }
  return out;
}

}  // namespace pgsynth
