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

#include "pgsynth/fixtures.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "pgsynth/dist.h"
#include "pgsynth/random.h"

namespace pgsynth {
namespace {

std::vector<std::string> NumberedLevels(const std::string& prefix, int n) {
  std::vector<std::string> out;
  const int width = n >= 100 ? 3 : 2;
  for (int k = 1; k <= n; ++k) {
    out.push_back(absl::StrFormat("%s%0*d", prefix, width, k));
  }
  return out;
}

std::vector<double> Normalized(const std::vector<double>& shares, size_t n) {
  std::vector<double> out(n, 1.0 / static_cast<double>(n));
  if (shares.empty()) return out;
  const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  for (size_t k = 0; k < n; ++k) out[k] = shares[k] / sum;
  return out;
}

absl::Status ValidateSpec(const FixtureSpec& spec) {
  if (spec.dims.empty()) return absl::InvalidArgumentError("fixture: no dims");
  if (spec.total_deaths < 0) {
    return absl::InvalidArgumentError("fixture: total_deaths < 0");
  }
  if (!(spec.state_population >= 1.0) || !(spec.base_rate > 0.0) ||
      !(spec.age_rate_growth > 0.0) || !(spec.geo_log_sd >= 0.0) ||
      !(spec.urban_multiplier > 0.0) || !(spec.group_a_multiplier > 0.0)) {
    return absl::InvalidArgumentError("fixture: nonpositive scalar parameter");
  }
  for (const FixtureDimension& d : spec.dims) {
    if (d.levels.empty()) {
      return absl::InvalidArgumentError(
          absl::StrCat("fixture: dimension '", d.name, "' has no levels"));
    }
    if (!d.population_shares.empty()) {
      if (d.population_shares.size() != d.levels.size()) {
        return absl::InvalidArgumentError(absl::StrCat(
            "fixture: population_shares size mismatch for '", d.name, "'"));
      }
      double sum = 0.0;
      for (double s : d.population_shares) {
        if (!(s >= 0.0)) {
          return absl::InvalidArgumentError("fixture: negative share");
        }
        sum += s;
      }
      if (!(sum > 0.0)) return absl::InvalidArgumentError("fixture: zero shares");
    }
    if (!d.rate_factors.empty()) {
      if (d.rate_factors.size() != d.levels.size()) {
        return absl::InvalidArgumentError(absl::StrCat(
            "fixture: rate_factors size mismatch for '", d.name, "'"));
      }
      for (double f : d.rate_factors) {
        if (!(f >= 0.0) || !std::isfinite(f)) {
          return absl::InvalidArgumentError("fixture: invalid rate factor");
        }
      }
    }
  }
  if (spec.dims.front().name != spec.geo_dim) {
    return absl::InvalidArgumentError(
        absl::StrCat("fixture: first dimension must be '", spec.geo_dim, "'"));
  }
  if (spec.urban_count < 0 ||
      static_cast<size_t>(spec.urban_count) > spec.dims.front().levels.size()) {
    return absl::InvalidArgumentError("fixture: urban_count out of range");
  }
  return absl::OkStatus();
}

// Largest-remainder rounding of total * w / sum(w).
std::vector<int64_t> ExpectedAllocation(int64_t total,
                                        const std::vector<double>& w) {
  const long double sum = std::accumulate(w.begin(), w.end(), 0.0L);
  std::vector<int64_t> out(w.size(), 0);
  std::vector<std::pair<long double, size_t>> rem;
  rem.reserve(w.size());
  int64_t assigned = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    const long double share = total * (w[i] / sum);
    out[i] = static_cast<int64_t>(std::floor(share));
    assigned += out[i];
    rem.emplace_back(share - out[i], i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& x, const auto& y) {
    return x.first > y.first;
  });
  for (int64_t k = 0; k < total - assigned; ++k) ++out[rem[k].second];
  return out;
}

}  // namespace

FixtureSpec PennsylvaniaLikeSpec(uint64_t seed) {
  FixtureSpec s;
  s.dims.push_back({"county", NumberedLevels("c", 67), {}, true, {}});
  s.dims.push_back({"age",
                    NumberedLevels("a", 13),
                    {0.012, 0.048, 0.065, 0.070, 0.075, 0.070, 0.065, 0.065,
                     0.075, 0.080, 0.110, 0.150, 0.115},
                    true,
                    {}});
  s.dims.push_back({"cause",
                    NumberedLevels("k", 9),
                    {},
                    false,
                    {3.0, 1.6, 1.2, 1.0, 0.8, 0.6, 0.5, 0.4, 0.3}});
  s.dims.push_back(
      {"race", {"white", "black", "other"}, {0.86, 0.11, 0.03}, true,
       {1.0, 1.2, 0.7}});
  s.dims.push_back({"sex", {"female", "male"}, {0.51, 0.49}, true, {1.0, 1.3}});
  s.total_deaths = 26116;
  s.state_population = 12.8e6;
  s.geo_log_sd = 1.0;
  s.base_rate = 1.0e-6;
  s.age_rate_growth = 1.55;
  s.urban_count = 19;
  s.urban_threshold = 280.0;
  s.urban_multiplier = 1.15;
  s.seed = seed;
  return s;
}

absl::StatusOr<Fixture> GenerateFixture(const FixtureSpec& spec) {
  if (absl::Status s = ValidateSpec(spec); !s.ok()) return s;
  RandomStream rng(spec.seed);

  const size_t num_dims = spec.dims.size();
  const FixtureDimension& geo = spec.dims.front();
  const size_t num_geo = geo.levels.size();

  // Geography sizes: log-normal, scaled to the state total.
  std::vector<double> geo_pop(num_geo);
  for (double& g : geo_pop) g = std::exp(spec.geo_log_sd * rng.StandardNormal());
  const double geo_sum = std::accumulate(geo_pop.begin(), geo_pop.end(), 0.0);
  for (double& g : geo_pop) g *= spec.state_population / geo_sum;

  // Urban geographies are the most populous ones.
  std::vector<size_t> order(num_geo);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t x, size_t y) { return geo_pop[x] > geo_pop[y]; });
  std::vector<bool> urban(num_geo, false);
  for (int k = 0; k < spec.urban_count; ++k) urban[order[k]] = true;

  RateTable raw_rates;
  std::map<std::string, double> densities;
  std::vector<double> true_rates;
  for (size_t g = 0; g < num_geo; ++g) {
    const double u = rng.Uniform();
    densities[geo.levels[g]] = urban[g]
                                      ? spec.urban_threshold * (1.05 + 9.0 * u)
                                      : spec.urban_threshold * (0.05 + 0.9 * u);
  }

  std::vector<std::vector<double>> shares(num_dims);
  for (size_t d = 0; d < num_dims; ++d) {
    shares[d] = Normalized(spec.dims[d].population_shares,
                           spec.dims[d].levels.size());
  }
  int age_dim = -1;
  int group_dim = -1;
  for (size_t d = 0; d < num_dims; ++d) {
    if (spec.dims[d].name == spec.age_dim) age_dim = static_cast<int>(d);
    if (!spec.group_dim.empty() && spec.dims[d].name == spec.group_dim) {
      group_dim = static_cast<int>(d);
    }
  }
  if (!spec.group_dim.empty() && group_dim < 0) {
    return absl::InvalidArgumentError(
        absl::StrCat("fixture: unknown group_dim '", spec.group_dim, "'"));
  }
  if (group_dim >= 0) {
    const auto& lv = spec.dims[group_dim].levels;
    if (std::find(lv.begin(), lv.end(), spec.group_a_level) == lv.end()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "fixture: unknown group_a_level '", spec.group_a_level, "'"));
    }
  }

  // Odometer over all level combinations, geography slowest.
  std::vector<size_t> idx(num_dims, 0);
  std::vector<Stratum> strata;
  std::vector<double> weights;
  raw_rates.dims.assign(spec.dims.size() - 1, "");
  for (size_t d = 1; d < num_dims; ++d) raw_rates.dims[d - 1] = spec.dims[d].name;
  while (true) {
    Stratum st;
    st.key.resize(num_dims);
    double pop = geo_pop[idx[0]];
    double raw = spec.base_rate;
    for (size_t d = 0; d < num_dims; ++d) {
      const FixtureDimension& dim = spec.dims[d];
      st.key[d] = dim.levels[idx[d]];
      if (d > 0 && dim.splits_population) pop *= shares[d][idx[d]];
      if (!dim.rate_factors.empty()) raw *= dim.rate_factors[idx[d]];
    }
    if (age_dim >= 0) {
      raw *= std::pow(spec.age_rate_growth, static_cast<double>(idx[age_dim]));
    }
    double truth = raw;
    if (urban[idx[0]]) truth *= spec.urban_multiplier;
    if (group_dim >= 0 && st.key[group_dim] == spec.group_a_level) {
      truth *= spec.group_a_multiplier;
    }
    st.population = std::max<int64_t>(1, std::llround(pop));
    raw_rates.rates[std::vector<std::string>(st.key.begin() + 1,
                                                st.key.end())] = raw;
    true_rates.push_back(truth);
    weights.push_back(static_cast<double>(st.population) * truth);
    strata.push_back(std::move(st));

    size_t d = num_dims;
    while (d-- > 0) {
      if (++idx[d] < spec.dims[d].levels.size()) break;
      idx[d] = 0;
    }
    if (d == static_cast<size_t>(-1)) break;
  }

  std::vector<int64_t> counts;
  if (spec.allocation == Allocation::kExpected) {
    counts = ExpectedAllocation(spec.total_deaths, weights);
  } else {
    auto drawn = SampleMultinomial(spec.total_deaths, weights, rng);
    if (!drawn.ok()) return drawn.status();
    counts = *std::move(drawn);
  }
  for (size_t i = 0; i < strata.size(); ++i) strata[i].count = counts[i];

  std::vector<std::string> dim_names;
  for (const FixtureDimension& d : spec.dims) dim_names.push_back(d.name);
  auto table = StrataTable::Create(std::move(dim_names), std::move(strata));
  if (!table.ok()) return table.status();
  Fixture fx{.table = *std::move(table),
             .raw_rates = std::move(raw_rates),
             .densities = std::move(densities),
             .standard = {},
             .true_rates = std::move(true_rates),
             .outcome_dims = {}};
  if (age_dim >= 0) {
    fx.standard = StandardPopulation::Uniform(spec.dims[age_dim].levels);
  }
  for (const FixtureDimension& dim : spec.dims) {
    if (!dim.splits_population) fx.outcome_dims.push_back(dim.name);
  }
  return fx;
}

namespace {

template <typename T>
absl::Status ReadField(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return absl::OkStatus();
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("fixture spec field '", key, "': ", e.what()));
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<FixtureSpec> FixtureSpecFromJson(const nlohmann::json& j) {
  if (!j.is_object()) {
    return absl::InvalidArgumentError("fixture spec must be a JSON object");
  }
  FixtureSpec spec;
  std::string preset = "none";
  if (absl::Status s = ReadField(j, "preset", preset); !s.ok()) return s;
  uint64_t seed = 1;
  if (absl::Status s = ReadField(j, "seed", seed); !s.ok()) return s;
  if (preset == "pa") {
    spec = PennsylvaniaLikeSpec(seed);
  } else if (preset != "none") {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown fixture preset '", preset, "'"));
  }
  spec.seed = seed;

  if (j.contains("dims")) {
    if (!j["dims"].is_array()) {
      return absl::InvalidArgumentError("fixture spec 'dims' must be an array");
    }
    spec.dims.clear();
    for (const nlohmann::json& jd : j["dims"]) {
      FixtureDimension d;
      if (absl::Status s = ReadField(jd, "name", d.name); !s.ok()) return s;
      if (absl::Status s = ReadField(jd, "levels", d.levels); !s.ok()) return s;
      int num_levels = 0;
      if (absl::Status s = ReadField(jd, "num_levels", num_levels); !s.ok()) {
        return s;
      }
      if (d.levels.empty() && num_levels > 0) {
        d.levels = NumberedLevels(d.name.substr(0, 1), num_levels);
      }
      if (absl::Status s =
              ReadField(jd, "population_shares", d.population_shares);
          !s.ok()) {
        return s;
      }
      if (absl::Status s =
              ReadField(jd, "splits_population", d.splits_population);
          !s.ok()) {
        return s;
      }
      if (absl::Status s = ReadField(jd, "rate_factors", d.rate_factors);
          !s.ok()) {
        return s;
      }
      if (d.name.empty()) {
        return absl::InvalidArgumentError("fixture dimension without a name");
      }
      spec.dims.push_back(std::move(d));
    }
  }

  absl::Status s = absl::OkStatus();
  s.Update(ReadField(j, "geo_dim", spec.geo_dim));
  s.Update(ReadField(j, "age_dim", spec.age_dim));
  s.Update(ReadField(j, "total_deaths", spec.total_deaths));
  s.Update(ReadField(j, "state_population", spec.state_population));
  s.Update(ReadField(j, "geo_log_sd", spec.geo_log_sd));
  s.Update(ReadField(j, "base_rate", spec.base_rate));
  s.Update(ReadField(j, "age_rate_growth", spec.age_rate_growth));
  s.Update(ReadField(j, "urban_count", spec.urban_count));
  s.Update(ReadField(j, "urban_threshold", spec.urban_threshold));
  s.Update(ReadField(j, "urban_multiplier", spec.urban_multiplier));
  s.Update(ReadField(j, "group_dim", spec.group_dim));
  s.Update(ReadField(j, "group_a_level", spec.group_a_level));
  s.Update(ReadField(j, "group_a_multiplier", spec.group_a_multiplier));
  std::string allocation = "multinomial";
  s.Update(ReadField(j, "allocation", allocation));
  if (!s.ok()) return s;
  if (allocation == "expected") {
    spec.allocation = Allocation::kExpected;
  } else if (allocation == "multinomial") {
    spec.allocation = Allocation::kMultinomial;
  } else {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown allocation '", allocation, "'"));
  }
  if (absl::Status v = ValidateSpec(spec); !v.ok()) return v;
  return spec;
}

}  // namespace pgsynth
