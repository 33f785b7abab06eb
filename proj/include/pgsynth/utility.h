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

#ifndef PGSYNTH_UTILITY_H_
#define PGSYNTH_UTILITY_H_

#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "pgsynth/csv.h"
#include "pgsynth/strata.h"

namespace pgsynth {

// Age-group weights summing to one.
struct StandardPopulation {
  std::map<std::string, double> weights;

  static absl::StatusOr<StandardPopulation> Create(
      std::map<std::string, double> weights);
  static StandardPopulation Uniform(std::span<const std::string> levels);
};

// Standard population CSV: age_group,weight.
absl::StatusOr<StandardPopulation> StandardPopulationFromCsv(
    const CsvDocument& doc);
absl::StatusOr<StandardPopulation> ReadStandardPopulationCsv(
    const std::string& path);
void WriteStandardPopulationCsv(const StandardPopulation& std_pop,
                                std::ostream& out);

// Density CSV: geo,density (persons per square mile).
absl::StatusOr<std::map<std::string, double>> DensitiesFromCsv(
    const CsvDocument& doc);
absl::StatusOr<std::map<std::string, double>> ReadDensityCsv(
    const std::string& path);
void WriteDensityCsv(const std::map<std::string, double>& densities,
                     std::ostream& out);

// Conjunction of per-dimension level sets; the empty selector matches every
// stratum.
class Selector {
 public:
  Selector() = default;

  Selector& Require(std::string dim, std::set<std::string> levels);

  // "dim=l1+l2;dim2=l3"; "all" or "" for the empty selector.
  static absl::StatusOr<Selector> Parse(std::string_view text);
  std::string Label() const;

  absl::StatusOr<std::vector<bool>> Mask(const StrataTable& table) const;

 private:
  std::vector<std::pair<std::string, std::set<std::string>>> terms_;
};

struct RateEstimate {
  double rate = 0.0;  // per 100,000
  std::vector<std::string> dropped_age_levels;  // zero population, reweighted
};

struct RateOptions {
  std::string age_dim = "age";
  // Dimensions that split events but not people (cause of death). Strata
  // differing only in these share one population, counted once.
  std::vector<std::string> outcome_dims;
};

// Age-adjusted rate for one selector, with populations aggregated once:
// sum_a w_a * deaths_a / population_a * 1e5 over age levels inside the
// selector. Levels with zero population are dropped and the remaining
// weights renormalized.
class AgeAdjuster {
 public:
  static absl::StatusOr<AgeAdjuster> Create(const StrataTable& table,
                                            const StandardPopulation& std_pop,
                                            const Selector& selector,
                                            const RateOptions& options = {});

  absl::StatusOr<RateEstimate> Rate(std::span<const int64_t> counts) const;
  const std::string& label() const { return label_; }

 private:
  AgeAdjuster() = default;

  std::string label_;
  size_t num_strata_ = 0;
  std::vector<std::pair<size_t, size_t>> members_;  // (stratum, age slot)
  std::vector<double> weight_;      // renormalized, per age slot
  std::vector<double> population_;  // per age slot
  std::vector<std::string> dropped_;
};

absl::StatusOr<RateEstimate> AgeAdjustedRate(std::span<const int64_t> counts,
                                             const StrataTable& table,
                                             const StandardPopulation& std_pop,
                                             const Selector& selector,
                                             const RateOptions& options = {});

struct DisparityEstimate {
  std::string numerator_group;
  std::string denominator_group;
  double ratio = 0.0;
  std::vector<double> per_replicate;
  double mean_ratio = 0.0;
  double lower = 0.0;  // 2.5th percentile across replicates
  double upper = 0.0;  // 97.5th percentile
};

// Ratio of age-adjusted rates of group a over group b for one count vector.
absl::StatusOr<DisparityEstimate> DisparityRatio(
    std::span<const int64_t> counts, const StrataTable& table,
    const StandardPopulation& std_pop, const Selector& group_a,
    const Selector& group_b, const RateOptions& options = {});

// Per-replicate ratios with their mean and percentile band; ratio holds the
// mean.
absl::StatusOr<DisparityEstimate> ReplicateDisparity(
    std::span<const std::vector<int64_t>> replicates, const StrataTable& table,
    const StandardPopulation& std_pop, const Selector& group_a,
    const Selector& group_b, const RateOptions& options = {});

struct UrbanRuralPartition {
  Selector urban;
  Selector rural;
  std::vector<std::string> urban_geos;
  std::vector<std::string> rural_geos;
};

// Urban when density exceeds the threshold.
absl::StatusOr<UrbanRuralPartition> UrbanRuralClassify(
    const StrataTable& table, const std::map<std::string, double>& densities,
    double threshold, std::string_view geo_dim);

struct ObservedExpectedRow {
  std::string group;  // levels of the grouping dimensions joined with '|'
  double observed = 0.0;
  double expected = 0.0;
};

// (sum y, sum n * lambda0) per combination of group_dims, then a "total" row.
absl::StatusOr<std::vector<ObservedExpectedRow>> ObservedVsExpected(
    const StrataTable& table, const PriorSpec& prior,
    std::span<const std::string> group_dims);
void WriteObservedExpectedCsv(std::span<const ObservedExpectedRow> rows,
                              std::ostream& out);

struct Summary {
  double mean = 0.0;
  double p025 = 0.0;
  double p975 = 0.0;
};

// Mean and linearly interpolated 2.5/97.5 percentiles.
Summary Summarize(std::span<const double> values);

struct MetricRow {
  std::string metric;
  std::string selector;
  double epsilon = 0.0;
  std::string replicate;  // index, "truth", "mean", "p2.5" or "p97.5"
  double value = 0.0;
};

// metric,selector,epsilon,replicate,value
void WriteMetricsCsv(std::span<const MetricRow> rows, std::ostream& out);

}  // namespace pgsynth

#endif  // PGSYNTH_UTILITY_H_
