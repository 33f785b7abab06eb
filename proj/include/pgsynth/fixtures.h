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

#ifndef PGSYNTH_FIXTURES_H_
#define PGSYNTH_FIXTURES_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "json.hpp"
#include "pgsynth/strata.h"
#include "pgsynth/utility.h"

namespace pgsynth {

struct FixtureDimension {
  std::string name;
  std::vector<std::string> levels;
  // Population share per level; empty means uniform. Ignored when the
  // dimension does not split population (e.g. cause of death).
  std::vector<double> population_shares;
  bool splits_population = true;
  // Multiplicative rate factor per level; empty means all ones.
  std::vector<double> rate_factors;
};

enum class Allocation { kMultinomial, kExpected };

struct FixtureSpec {
  std::vector<FixtureDimension> dims;
  std::string geo_dim = "county";
  std::string age_dim = "age";
  int64_t total_deaths = 0;
  double state_population = 1.0e6;
  double geo_log_sd = 1.0;  // log-normal spread of geography sizes
  double base_rate = 1.0e-4;
  double age_rate_growth = 1.0;  // rate multiplier per age level

  // Injected disparities. Public raw rates omit both.
  int urban_count = 0;  // most populous geographies get density > threshold
  double urban_threshold = 280.0;
  double urban_multiplier = 1.0;
  std::string group_dim;
  std::string group_a_level;
  double group_a_multiplier = 1.0;

  Allocation allocation = Allocation::kMultinomial;
  uint64_t seed = 1;
};

struct Fixture {
  StrataTable table;
  RateTable raw_rates;  // every dimension except geography
  std::map<std::string, double> densities;
  StandardPopulation standard;
  std::vector<double> true_rates;  // per stratum, before allocation
  std::vector<std::string> outcome_dims;  // dims with splits_population off
};

// 67 x 13 x 9 x 3 x 2 strata with 26,116 deaths and 19 urban counties.
FixtureSpec PennsylvaniaLikeSpec(uint64_t seed = 1);

absl::StatusOr<Fixture> GenerateFixture(const FixtureSpec& spec);

// Accepts {"preset": "pa"} plus overrides of any scalar field, or a full
// "dims" list. See README for the schema.
absl::StatusOr<FixtureSpec> FixtureSpecFromJson(const nlohmann::json& j);

}  // namespace pgsynth

#endif  // PGSYNTH_FIXTURES_H_
