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

#ifndef PGSYNTH_STRATA_H_
#define PGSYNTH_STRATA_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"

namespace pgsynth {

struct Stratum {
  std::vector<std::string> key;  // one level per dimension
  int64_t population = 0;
  int64_t count = 0;
};

// The universe of strata: populations, observed counts and their total.
// Immutable after construction.
class StrataTable {
 public:
  // Validates: at least two strata, one key level per dimension, unique
  // keys, nonnegative populations and counts.
  static absl::StatusOr<StrataTable> Create(std::vector<std::string> dims,
                                            std::vector<Stratum> strata);

  const std::vector<std::string>& dims() const { return dims_; }
  size_t size() const { return strata_.size(); }
  const Stratum& stratum(size_t i) const { return strata_[i]; }
  std::span<const Stratum> strata() const { return strata_; }
  int64_t y_total() const { return y_total_; }

  std::vector<int64_t> counts() const;
  std::vector<int64_t> populations() const;

  // Index of a named dimension.
  absl::StatusOr<size_t> DimIndex(std::string_view name) const;

  // Key levels joined with '|'.
  std::string KeyString(size_t i) const;

  // Same strata and populations with replacement counts.
  absl::StatusOr<StrataTable> WithCounts(std::span<const int64_t> counts) const;

 private:
  StrataTable() = default;

  std::vector<std::string> dims_;
  std::vector<Stratum> strata_;
  int64_t y_total_ = 0;
};

// Public per-person rates keyed by a subset of the table's dimensions
// (typically every dimension except geography).
struct RateTable {
  std::vector<std::string> dims;
  std::map<std::vector<std::string>, double> rates;
};

struct PriorSpec {
  std::vector<double> lambda0;  // per-stratum prior rate after rescaling
  double rescale_factor = 1.0;
  RateTable source_rates;

  // n_i * lambda0_i.
  std::vector<double> ExpectedCounts(const StrataTable& table) const;
};

struct TruncationBounds {
  std::vector<int64_t> lower;
  std::vector<int64_t> upper;
  double alpha = 0.0;
  double c = 1.0;
};

struct DominanceReport {
  std::vector<bool> flagged;
  bool pass = true;
};

// Clamped counts plus the number of strata that moved. The count is a
// private diagnostic and must not be written to releasable outputs.
struct ClampResult {
  std::vector<int64_t> counts;
  int64_t num_clamped = 0;
};

// Rescales raw rates so that sum_i n_i * lambda0_i equals the observed total.
absl::StatusOr<PriorSpec> BuildPrior(const StrataTable& table,
                                     const RateTable& raw_rates);

// L_i = F^-1(alpha/2 | mu_i/c), U_i = F^-1(1 - alpha/2 | c mu_i), both capped
// at the table total.
absl::StatusOr<TruncationBounds> ComputeBounds(const PriorSpec& prior,
                                               const StrataTable& table,
                                               double alpha, double c);

// Flags stratum i when its prior expected count is at least the combined
// expectation of all other strata.
DominanceReport CheckDominance(const PriorSpec& prior,
                               const StrataTable& table);

ClampResult ClampObserved(const StrataTable& table,
                          const TruncationBounds& bounds);

// Default tail probability: 1/I, capped below 1/2 for two strata.
double DefaultAlpha(const StrataTable& table);

}  // namespace pgsynth

#endif  // PGSYNTH_STRATA_H_
