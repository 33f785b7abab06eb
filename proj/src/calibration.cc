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

#include "pgsynth/calibration.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace pgsynth {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Consecutive sweeps without a shrinking bracket before switching to the
// damped iteration.
constexpr int kStallSweeps = 64;
constexpr int kInnerIterations = 10000;

// Evaluates the per-stratum requirement map F: a -> required a, where
// required_i depends on the other strata through a_(i) (and, untruncated,
// through the pooled rate b_(i)/n_(i) and the stratum's own a_i). F is
// antitone in the other strata, which the bracketing solver relies on.
class RequirementMap {
 public:
  RequirementMap(const StrataTable& table, const PriorSpec& prior,
                 double epsilon, bool truncated,
                 const TruncationBounds* bounds, double a_floor)
      : y_(static_cast<double>(table.y_total())),
        e_(std::exp(epsilon)),
        floor_(a_floor),
        truncated_(truncated),
        bounds_(bounds),
        lambda0_(prior.lambda0) {
    n_.reserve(table.size());
    for (const Stratum& s : table.strata()) {
      n_.push_back(static_cast<double>(s.population));
      n_total_ += s.population;
    }
  }

  size_t size() const { return n_.size(); }

  // out_i = max(required_i, floor), +infinity when no finite a_i works.
  void Evaluate(std::span<const double> a, std::span<double> out) const {
    Totals t = Sum(a);
    for (size_t i = 0; i < a.size(); ++i) {
      const double a_not_i = OthersShape(t, a, i);
      if (truncated_) {
        out[i] = TruncatedRequirement(i, a_not_i);
      } else {
        out[i] = UntruncatedFixedPoint(i, a_not_i, OthersRateRatio(t, a, i));
      }
    }
  }

  // a_i - max(required_i(a), floor) with required_i read at the given a_i.
  void Slack(std::span<const double> a, std::span<double> out) const {
    Totals t = Sum(a);
    for (size_t i = 0; i < a.size(); ++i) {
      const double a_not_i = OthersShape(t, a, i);
      const double req =
          truncated_ ? TruncatedRequirement(i, a_not_i)
                     : UntruncatedRequirement(i, a_not_i,
                                              OthersRateRatio(t, a, i), a[i]);
      out[i] = a[i] - req;
    }
  }

 private:
  struct Totals {
    long double shape = 0.0L;  // finite part of sum a_j
    int infinite = 0;
    long double rate = 0.0L;   // finite part of sum a_j / lambda0_j
  };

  Totals Sum(std::span<const double> a) const {
    Totals t;
    for (size_t j = 0; j < a.size(); ++j) {
      if (std::isinf(a[j])) {
        ++t.infinite;
        continue;
      }
      t.shape += a[j];
      if (!truncated_) t.rate += a[j] / lambda0_[j];
    }
    return t;
  }

  static double OthersShape(const Totals& t, std::span<const double> a,
                            size_t i) {
    const int others_inf = t.infinite - (std::isinf(a[i]) ? 1 : 0);
    if (others_inf > 0) return kInf;
    return static_cast<double>(t.shape - (std::isinf(a[i]) ? 0.0L : a[i]));
  }

  // b_(i) / n_(i).
  double OthersRateRatio(const Totals& t, std::span<const double> a,
                         size_t i) const {
    const int others_inf = t.infinite - (std::isinf(a[i]) ? 1 : 0);
    if (others_inf > 0) return kInf;
    const long double own = std::isinf(a[i]) ? 0.0L : a[i] / lambda0_[i];
    return static_cast<double>((t.rate - own) /
                               static_cast<long double>(n_total_ - n_[i]));
  }

  double TruncatedRequirement(size_t i, double a_not_i) const {
    const double lo = static_cast<double>(bounds_->lower[i]);
    const double hi = static_cast<double>(bounds_->upper[i]);
    double nu = 1.0;
    if (std::isfinite(a_not_i) && hi > lo) {
      const double den = 2.0 * y_ - hi - lo + a_not_i - 1.0;
      if (den <= 0.0) return kInf;
      nu = (2.0 * y_ - 2.0 * lo + a_not_i - 1.0) / den;
    }
    if (e_ / nu <= 1.0) return kInf;
    return std::max((hi - lo) / (e_ / nu - 1.0) - 2.0 * lo, floor_);
  }

  double UntruncatedRequirement(size_t i, double a_not_i,
                                double others_ratio, double a_i) const {
    double nu = 1.0;
    if (std::isfinite(a_not_i)) {
      const double own_ratio = a_i / (lambda0_[i] * n_[i]);
      const double r = (others_ratio + 2.0) / (own_ratio + 2.0);
      nu = (y_ * std::max(1.0 - r, 0.0) + a_not_i + y_ - 1.0) /
           (a_not_i + y_ - 1.0);
    }
    if (e_ / nu <= 1.0) return kInf;
    return std::max(y_ / (e_ / nu - 1.0), floor_);
  }

  // Least a_i with a_i >= requirement(a_i); the requirement increases with
  // a_i through b_i, so iterating from the floor climbs monotonically.
  double UntruncatedFixedPoint(size_t i, double a_not_i,
                               double others_ratio) const {
    double x = floor_;
    for (int k = 0; k < kInnerIterations; ++k) {
      const double g = UntruncatedRequirement(i, a_not_i, others_ratio, x);
      if (!std::isfinite(g)) return kInf;
      if (std::abs(g - x) <= 1e-15 * g) return g;
      x = g;
    }
    return x;
  }

  double y_;
  double e_;
  double floor_;
  bool truncated_;
  const TruncationBounds* bounds_;
  std::vector<double> lambda0_;
  std::vector<double> n_;
  int64_t n_total_ = 0;
};

double MaxRelativeGap(std::span<const double> lo, std::span<const double> hi) {
  double gap = 0.0;
  for (size_t i = 0; i < lo.size(); ++i) {
    if (!std::isfinite(hi[i])) return kInf;
    gap = std::max(gap, (hi[i] - lo[i]) / hi[i]);
  }
  return gap;
}

bool AllFinite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(),
                     [](double v) { return std::isfinite(v); });
}

absl::Status ValidateForUntruncated(const StrataTable& table) {
  int64_t n_total = 0;
  for (const Stratum& s : table.strata()) n_total += s.population;
  for (size_t i = 0; i < table.size(); ++i) {
    const int64_t n = table.stratum(i).population;
    if (n == 0 || n_total - n == 0) {
      return absl::FailedPreconditionError(absl::StrCat(
          "degenerate stratum ", table.KeyString(i),
          ": its population or the population of all other strata is zero"));
    }
  }
  return absl::OkStatus();
}

bool Homogeneous(const StrataTable& table, std::span<const double> lambda0) {
  for (size_t i = 1; i < table.size(); ++i) {
    if (table.stratum(i).population != table.stratum(0).population ||
        lambda0[i] != lambda0[0]) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::string_view ModeName(Mode mode) {
  switch (mode) {
    case Mode::kUntruncated:
      return "untruncated";
    case Mode::kTruncated:
      return "truncated";
    case Mode::kDirichletEquivalent:
      return "dirichlet-equivalent";
  }
  return "unknown";
}

absl::StatusOr<Mode> ParseMode(std::string_view name) {
  if (name == "untruncated") return Mode::kUntruncated;
  if (name == "truncated") return Mode::kTruncated;
  if (name == "dirichlet-equivalent") return Mode::kDirichletEquivalent;
  return absl::InvalidArgumentError(absl::StrCat(
      "unknown mode '", std::string(name),
      "' (expected untruncated, truncated or dirichlet-equivalent)"));
}

absl::StatusOr<double> NuUntruncated(size_t i, std::span<const double> a,
                                     std::span<const double> b,
                                     const StrataTable& table) {
  if (i >= table.size() || a.size() != table.size() ||
      b.size() != table.size()) {
    return absl::InvalidArgumentError("nu: index or vector size mismatch");
  }
  long double a_not_i = 0.0L, b_not_i = 0.0L;
  int64_t n_not_i = 0;
  for (size_t j = 0; j < table.size(); ++j) {
    if (!(a[j] > 0.0 && b[j] > 0.0)) {
      return absl::InvalidArgumentError("nu: hyperparameters must be positive");
    }
    if (j == i) continue;
    a_not_i += a[j];
    b_not_i += b[j];
    n_not_i += table.stratum(j).population;
  }
  const int64_t n_i = table.stratum(i).population;
  if (n_i == 0 || n_not_i == 0) {
    return absl::FailedPreconditionError(
        absl::StrCat("nu: degenerate stratum ", table.KeyString(i)));
  }
  const double y = static_cast<double>(table.y_total());
  const double r = static_cast<double>(b_not_i / n_not_i + 2.0L) /
                   (b[i] / static_cast<double>(n_i) + 2.0);
  const double an = static_cast<double>(a_not_i);
  return (y * std::max(1.0 - r, 0.0) + an + y - 1.0) / (an + y - 1.0);
}

absl::StatusOr<double> NuTruncated(size_t i, double a_not_i,
                                   const TruncationBounds& bounds,
                                   int64_t y_total) {
  if (i >= bounds.lower.size()) {
    return absl::InvalidArgumentError("nu: stratum index out of range");
  }
  const int64_t lo = bounds.lower[i], hi = bounds.upper[i];
  if (!(a_not_i > 0.0) || lo > hi || hi > y_total) {
    return absl::InvalidArgumentError(
        "nu: requires a_(i) > 0 and L_i <= U_i <= y");
  }
  if (std::isinf(a_not_i)) return 1.0;
  const double y = static_cast<double>(y_total);
  const double den = 2.0 * y - static_cast<double>(hi + lo) + a_not_i - 1.0;
  if (den <= 0.0) {
    return absl::FailedPreconditionError(absl::StrCat(
        "calibration infeasible: nonpositive denominator for stratum ", i));
  }
  return (2.0 * y - 2.0 * static_cast<double>(lo) + a_not_i - 1.0) / den;
}

absl::StatusOr<Calibration> SolveHyperparameters(
    const StrataTable& table, const PriorSpec& prior, double epsilon, Mode mode,
    const TruncationBounds* bounds, const SolverOptions& options) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    return absl::InvalidArgumentError(
        absl::StrCat("epsilon = ", epsilon, " must be positive and finite"));
  }
  const size_t n = table.size();
  if (prior.lambda0.size() != n) {
    return absl::InvalidArgumentError("prior does not match strata table");
  }
  Calibration calib;
  calib.mode = mode;
  calib.epsilon = epsilon;
  calib.lambda0 = prior.lambda0;
  calib.dominance = CheckDominance(prior, table);

  const bool truncated = mode == Mode::kTruncated;
  if (truncated) {
    if (bounds == nullptr || bounds->lower.size() != n ||
        bounds->upper.size() != n) {
      return absl::InvalidArgumentError("truncated mode requires bounds");
    }
    for (size_t i = 0; i < n; ++i) {
      if (bounds->lower[i] > bounds->upper[i] ||
          bounds->upper[i] > table.y_total()) {
        return absl::InvalidArgumentError(
            absl::StrCat("bounds violate L <= U <= y at stratum ", i));
      }
    }
    if (!calib.dominance.pass) {
      if (n != 2) {
        size_t flagged = std::count(calib.dominance.flagged.begin(),
                                    calib.dominance.flagged.end(), true);
        return absl::FailedPreconditionError(absl::StrCat(
            "dominance check failed for ", flagged,
            " stratum(s); truncated calibration refuses to run"));
      }
      calib.dominance_exchange = true;
    }
    calib.bounds = *bounds;
  } else {
    if (absl::Status s = ValidateForUntruncated(table); !s.ok()) return s;
    if (mode == Mode::kDirichletEquivalent && !Homogeneous(table, prior.lambda0)) {
      return absl::FailedPreconditionError(
          "dirichlet-equivalent mode needs equal populations and prior rates");
    }
  }

  calib.a.assign(n, options.a_floor);
  if (table.y_total() > 0) {
    const RequirementMap f(table, prior, epsilon, truncated,
                           truncated ? &*calib.bounds : nullptr,
                           options.a_floor);
    // Monotone bracketing: lo = F(inf) and hi = F(lo) enclose every fixed
    // point; (lo, hi) <- (F(hi), F(lo)) narrows the enclosure since F is
    // antitone. hi is always feasible because F(hi) <= hi.
    std::vector<double> lo(n), hi(n), next_lo(n), next_hi(n);
    std::vector<double> inf(n, kInf);
    f.Evaluate(inf, lo);
    f.Evaluate(lo, hi);
    double best_gap = kInf;
    int since_improved = 0;
    int it = 0;
    for (; it < options.max_iterations; ++it) {
      const double gap = MaxRelativeGap(lo, hi);
      if (gap < options.tolerance) {
        calib.converged = true;
        break;
      }
      if (gap < best_gap * (1.0 - 1e-3)) {
        best_gap = gap;
        since_improved = 0;
      } else if (++since_improved > kStallSweeps && AllFinite(hi)) {
        break;
      }
      f.Evaluate(hi, next_lo);
      f.Evaluate(lo, next_hi);
      lo.swap(next_lo);
      hi.swap(next_hi);
    }
    std::vector<double> x = hi;
    if (!calib.converged && AllFinite(hi)) {
      // Damped Jacobi from the feasible side of the bracket.
      calib.damped = true;
      std::vector<double> fx(n);
      for (; it < options.max_iterations; ++it) {
        f.Evaluate(x, fx);
        if (!AllFinite(fx)) break;
        double change = 0.0;
        for (size_t i = 0; i < n; ++i) {
          change = std::max(change, std::abs(fx[i] - x[i]) / fx[i]);
          x[i] += 0.5 * (fx[i] - x[i]);
        }
        if (change < options.tolerance) {
          calib.converged = true;
          break;
        }
      }
    }
    calib.iterations = it;
    if (!calib.converged) {
      return absl::InternalError(absl::StrCat(
          "calibration failed to converge after ", it,
          " iterations; residual gap ", MaxRelativeGap(lo, hi)));
    }
    // Raising any a_j only lowers the other strata's requirements, so
    // lifting x to F(x) leaves every constraint satisfied.
    std::vector<double> fx(n);
    f.Evaluate(x, fx);
    for (size_t i = 0; i < n; ++i) x[i] = std::max(x[i], fx[i]);
    calib.a = std::move(x);
  } else {
    calib.converged = true;
  }

  calib.b.resize(n);
  for (size_t i = 0; i < n; ++i) {
    calib.b[i] = prior.lambda0[i] > 0.0 ? calib.a[i] / prior.lambda0[i] : kInf;
  }
  auto slack = ComputeSlack(table, calib, options);
  if (!slack.ok()) return slack.status();
  calib.slack = *std::move(slack);
  for (size_t i = 0; i < n; ++i) {
    if (!(calib.slack[i] >= -options.slack_tolerance)) {
      return absl::InternalError(absl::StrCat(
          "calibration verification failed at stratum ", table.KeyString(i),
          ": slack ", calib.slack[i]));
    }
  }
  return calib;
}

absl::StatusOr<std::vector<double>> ComputeSlack(const StrataTable& table,
                                                 const Calibration& calib,
                                                 const SolverOptions& options) {
  const size_t n = table.size();
  if (calib.a.size() != n || calib.lambda0.size() != n) {
    return absl::InvalidArgumentError("calibration does not match table");
  }
  std::vector<double> slack(n, 0.0);
  if (table.y_total() == 0) {
    for (size_t i = 0; i < n; ++i) slack[i] = calib.a[i] - options.a_floor;
    return slack;
  }
  PriorSpec prior;
  prior.lambda0 = calib.lambda0;
  const RequirementMap f(table, prior, calib.epsilon, calib.truncated(),
                         calib.bounds ? &*calib.bounds : nullptr,
                         options.a_floor);
  f.Slack(calib.a, slack);
  return slack;
}

absl::StatusOr<std::vector<double>> DirichletReduction(
    const Calibration& calib, const StrataTable& table) {
  if (calib.a.size() != table.size() || calib.lambda0.size() != table.size()) {
    return absl::InvalidArgumentError("calibration does not match table");
  }
  if (!Homogeneous(table, calib.lambda0)) {
    return absl::FailedPreconditionError(
        "dirichlet reduction inapplicable: populations or prior rates differ");
  }
  return calib.a;
}

nlohmann::json CalibrationToJson(const Calibration& calib,
                                 const StrataTable& table) {
  nlohmann::json j;
  j["mode"] = std::string(ModeName(calib.mode));
  j["epsilon"] = calib.epsilon;
  j["alpha"] = calib.bounds ? nlohmann::json(calib.bounds->alpha) : nullptr;
  j["c"] = calib.bounds ? nlohmann::json(calib.bounds->c) : nullptr;
  nlohmann::json strata = nlohmann::json::array();
  for (size_t i = 0; i < table.size(); ++i) {
    nlohmann::json s;
    s["key"] = table.KeyString(i);
    s["a"] = calib.a[i];
    s["b"] = std::isfinite(calib.b[i]) ? nlohmann::json(calib.b[i]) : nullptr;
    if (calib.bounds) {
      s["L"] = calib.bounds->lower[i];
      s["U"] = calib.bounds->upper[i];
    } else {
      s["L"] = nullptr;
      s["U"] = nullptr;
    }
    s["slack"] = calib.slack.empty() ? 0.0 : calib.slack[i];
    strata.push_back(std::move(s));
  }
  j["strata"] = std::move(strata);
  j["converged"] = calib.converged;
  j["iterations"] = calib.iterations;
  j["dominance_exchange"] = calib.dominance_exchange;
  return j;
}

}  // namespace pgsynth
