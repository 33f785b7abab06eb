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

#ifndef PGSYNTH_CALIBRATION_H_
#define PGSYNTH_CALIBRATION_H_

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "json.hpp"
#include "pgsynth/strata.h"

namespace pgsynth {

enum class Mode { kUntruncated, kTruncated, kDirichletEquivalent };

std::string_view ModeName(Mode mode);
absl::StatusOr<Mode> ParseMode(std::string_view name);

struct SolverOptions {
  double a_floor = 1e-3;
  double tolerance = 1e-10;        // relative, on the bracketing gap
  int max_iterations = 100000;
  double slack_tolerance = 1e-9;   // absolute
};

// Releasable mechanism parameters. b_i = a_i / lambda0_i for every stratum.
struct Calibration {
  Mode mode = Mode::kUntruncated;
  double epsilon = 0.0;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> lambda0;
  std::vector<double> slack;
  std::optional<TruncationBounds> bounds;  // truncated mode only
  bool converged = false;
  int iterations = 0;
  bool damped = false;  // the damped fallback iteration was needed
  DominanceReport dominance;
  // Two strata with one dominating: both requirements use the same formula.
  bool dominance_exchange = false;

  bool truncated() const { return mode == Mode::kTruncated; }
};

// Untruncated inflation factor for stratum i given full hyperparameter
// vectors. The pooled rate ratio is r_i = (b_(i)/n_(i) + 2) / (b_i/n_i + 2)
// and the factor grows by y * max(1 - r_i, 0) over a_(i) + y - 1.
absl::StatusOr<double> NuUntruncated(size_t i, std::span<const double> a,
                                     std::span<const double> b,
                                     const StrataTable& table);

// Truncated inflation factor
//   (2y - 2L_i + A - 1) / (2y - U_i - L_i + A - 1),  A = a_(i).
// A may be +infinity (factor 1). Fails when the denominator is not positive.
absl::StatusOr<double> NuTruncated(size_t i, double a_not_i,
                                   const TruncationBounds& bounds,
                                   int64_t y_total);

// Smallest hyperparameters meeting every stratum's privacy requirement.
// Truncated mode needs `bounds`; the other modes ignore it.
absl::StatusOr<Calibration> SolveHyperparameters(
    const StrataTable& table, const PriorSpec& prior, double epsilon, Mode mode,
    const TruncationBounds* bounds, const SolverOptions& options = {});

// Per-stratum requirement margins a_i - max(required_i(a), a_floor).
absl::StatusOr<std::vector<double>> ComputeSlack(
    const StrataTable& table, const Calibration& calib,
    const SolverOptions& options = {});

// Dirichlet concentration equal to a. Only defined for homogeneous
// populations and prior rates.
absl::StatusOr<std::vector<double>> DirichletReduction(
    const Calibration& calib, const StrataTable& table);

// {mode, epsilon, alpha, c, strata: [{key, a, b, L, U, slack}], converged,
//  iterations, dominance_exchange}
nlohmann::json CalibrationToJson(const Calibration& calib,
                                 const StrataTable& table);

}  // namespace pgsynth

#endif  // PGSYNTH_CALIBRATION_H_
