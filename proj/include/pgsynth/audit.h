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

#ifndef PGSYNTH_AUDIT_H_
#define PGSYNTH_AUDIT_H_

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "json.hpp"
#include "pgsynth/calibration.h"
#include "pgsynth/strata.h"

namespace pgsynth {

// Normalized log pmf on lo, lo + 1, ..., lo + log_p.size() - 1.
struct Pmf {
  int64_t lo = 0;
  std::vector<double> log_p;
  double LogProb(int64_t z) const;
};

// Normalized log pmf over an enumerated set of outcome vectors.
struct JointPmf {
  size_t num_strata = 0;
  std::vector<int64_t> outcomes;  // row-major, num_strata per outcome
  std::vector<double> log_p;
  size_t size() const { return log_p.size(); }
  std::span<const int64_t> outcome(size_t k) const {
    return {outcomes.data() + k * num_strata, num_strata};
  }
};

struct EnumerationOptions {
  int64_t cap = 1000000;  // largest enumerable outcome or dataset set
};

// All pmfs below take raw counts; a truncated calibration clamps them to
// its box first, as the mechanism does.

// Law of z_i against the pooled remainder, on [0, y] or [L_i, U_i].
absl::StatusOr<Pmf> ExactBivariatePmf(size_t i, std::span<const int64_t> counts,
                                      const StrataTable& table,
                                      const Calibration& calib);

// Full mechanism law over {sum z = y} intersected with the box.
absl::StatusOr<JointPmf> ExactJointPmf(std::span<const int64_t> counts,
                                       const StrataTable& table,
                                       const Calibration& calib,
                                       const EnumerationOptions& options = {});

struct NeighborPair {
  std::vector<int64_t> y;
  std::vector<int64_t> x;  // y with one event moved from moved_from to moved_to
  size_t moved_from = 0;
  size_t moved_to = 0;
};

struct AuditRow {
  std::vector<int64_t> y, x, z;
  double log_ratio = 0.0;  // log p(z|y) - log p(z|x)
};

struct AuditReport {
  double epsilon_target = 0.0;
  double max_abs_log_ratio = 0.0;
  NeighborPair argmax_pair;
  std::vector<int64_t> argmax_z;
  bool pass = false;
  size_t num_strata = 0;
  int64_t y_total = 0;
  int64_t num_datasets = 0;
  int64_t num_outputs = 0;
  std::vector<AuditRow> rows;  // worst output per neighbor pair, on request
};

struct AuditOptions {
  EnumerationOptions enumeration;
  bool collect_rows = false;
};

// Maximizes |log p(z|y) / p(z|x)| over every dataset y with the table's
// total, every unit-transfer neighbor x and every output z. Populations and
// the calibration come from the table and calib; observed counts are unused.
absl::StatusOr<AuditReport> Audit(const StrataTable& table,
                                  const Calibration& calib, double epsilon,
                                  const AuditOptions& options = {});

struct CurvePoint {
  int64_t z1 = 0;
  double log_ratio = 0.0;
  double ratio = 0.0;
  int64_t y1 = 0;  // attaining dataset (y1, y - y1); neighbor (y1 - 1, y - y1 + 1)
};

// For two strata: at each z1, the largest p(z|y) / p(z|x) over datasets y
// and the neighbor x that moves one event from stratum 1 to stratum 2.
absl::StatusOr<std::vector<CurvePoint>> RatioCurve(const StrataTable& table,
                                                   const Calibration& calib);

// Two-group truncated normalizer comparison. With
//   C(y) = sum_{z=L}^{U} Gamma(z + y_i + a_i)/z! *
//          Gamma(Y - z + y_o + A)/(Y - z)! * r^z,
// y_o = Y - y_i and x = (y_i - 1, y_o + 1), the claim is
//   C(x)/C(y) < (Y - L + A + y_o) / (L + a_i + y_i - 1).
struct TransferBoundConfig {
  int64_t y_total = 0;
  int64_t lower = 0;
  int64_t upper = 0;
  int64_t y_i = 1;
  double a_i = 1.0;
  double a_not_i = 1.0;
  double r = 1.0;
};

struct TransferBoundRow {
  TransferBoundConfig config;
  double ratio = 0.0;  // C(x)/C(y) from the two log-space sums
  double bound = 0.0;
  // bound - ratio as a weighted sum of nonnegative termwise gaps, free of
  // cancellation; zero exactly when L == U.
  double gap = 0.0;
  bool strict = false;  // gap > 0
};

absl::StatusOr<std::vector<TransferBoundRow>> TransferBoundCheck(
    std::span<const TransferBoundConfig> configs);

// Random configurations with 2 <= y_total <= max_total and L < U.
std::vector<TransferBoundConfig> RandomTransferBoundConfigs(size_t count,
                                                  int64_t max_total,
                                                  uint64_t seed);

// Prior predictive with known rates: Multinomial(y, pi), pi_i proportional
// to n_i * lambda0_i.
double PriorPredictiveLogPmf(const PriorSpec& prior, const StrataTable& table,
                             std::span<const int64_t> z);

// Dirichlet-multinomial posterior predictive with concentration alpha after
// observing counts.
double DirichletMultinomialLogPmf(std::span<const int64_t> counts,
                                  std::span<const double> alpha,
                                  std::span<const int64_t> z);

nlohmann::json AuditReportToJson(const AuditReport& report);
void WriteAuditRowsCsv(const AuditReport& report, std::ostream& out);
void WriteCurveCsv(std::span<const CurvePoint> curve, int64_t y_total,
                   std::ostream& out);

}  // namespace pgsynth

#endif  // PGSYNTH_AUDIT_H_
