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

#include "pgsynth/utility.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"

namespace pgsynth {

absl::StatusOr<StandardPopulation> StandardPopulation::Create(
    std::map<std::string, double> weights) {
  double total = 0.0;
  for (const auto& [level, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      return absl::InvalidArgumentError(
          absl::StrCat("standard population: bad weight for ", level));
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    return absl::InvalidArgumentError(
        absl::StrCat("standard population weights sum to ", total));
  }
  StandardPopulation s;
  s.weights = std::move(weights);
  return s;
}

StandardPopulation StandardPopulation::Uniform(
    std::span<const std::string> levels) {
  StandardPopulation s;
  for (const std::string& l : levels) {
    s.weights[l] = 1.0 / static_cast<double>(levels.size());
  }
  return s;
}

absl::StatusOr<StandardPopulation> StandardPopulationFromCsv(
    const CsvDocument& doc) {
  auto age = doc.Column("age_group");
  if (!age.ok()) return age.status();
  auto weight = doc.Column("weight");
  if (!weight.ok()) return weight.status();
  std::map<std::string, double> w;
  for (const CsvRow& row : doc.rows) {
    auto v = ParseFiniteDouble(doc, row, *weight);
    if (!v.ok()) return v.status();
    if (!w.emplace(row.fields[*age], *v).second) {
      return doc.Error(row.line, "duplicate age group");
    }
  }
  auto s = StandardPopulation::Create(std::move(w));
  if (!s.ok()) {
    return absl::InvalidArgumentError(
        absl::StrCat(doc.source, ": ", s.status().message()));
  }
  return s;
}

absl::StatusOr<StandardPopulation> ReadStandardPopulationCsv(
    const std::string& path) {
  auto doc = ReadCsvFile(path);
  if (!doc.ok()) return doc.status();
  return StandardPopulationFromCsv(*doc);
}

void WriteStandardPopulationCsv(const StandardPopulation& std_pop,
                                std::ostream& out) {
  WriteCsvRecord(out, {"age_group", "weight"});
  for (const auto& [level, w] : std_pop.weights) {
    WriteCsvRecord(out, {level, FormatDouble(w)});
  }
}

absl::StatusOr<std::map<std::string, double>> DensitiesFromCsv(
    const CsvDocument& doc) {
  auto geo = doc.Column("geo");
  if (!geo.ok()) return geo.status();
  auto density = doc.Column("density");
  if (!density.ok()) return density.status();
  std::map<std::string, double> out;
  for (const CsvRow& row : doc.rows) {
    auto v = ParseFiniteDouble(doc, row, *density);
    if (!v.ok()) return v.status();
    if (*v < 0.0) return doc.Error(row.line, "negative density");
    if (!out.emplace(row.fields[*geo], *v).second) {
      return doc.Error(row.line, "duplicate geography");
    }
  }
  return out;
}

absl::StatusOr<std::map<std::string, double>> ReadDensityCsv(
    const std::string& path) {
  auto doc = ReadCsvFile(path);
  if (!doc.ok()) return doc.status();
  return DensitiesFromCsv(*doc);
}

void WriteDensityCsv(const std::map<std::string, double>& densities,
                     std::ostream& out) {
  WriteCsvRecord(out, {"geo", "density"});
  for (const auto& [geo, d] : densities) {
    WriteCsvRecord(out, {geo, FormatDouble(d)});
  }
}

Selector& Selector::Require(std::string dim, std::set<std::string> levels) {
  terms_.emplace_back(std::move(dim), std::move(levels));
  return *this;
}

absl::StatusOr<Selector> Selector::Parse(std::string_view text) {
  Selector s;
  if (text.empty() || text == "all") return s;
  const std::string owned(text);
  for (absl::string_view term :
       absl::StrSplit(owned, ';', absl::SkipEmpty())) {
    std::vector<std::string> kv = absl::StrSplit(term, '=');
    if (kv.size() != 2 || kv[0].empty() || kv[1].empty()) {
      return absl::InvalidArgumentError(
          absl::StrCat("selector term '", term, "' is not dim=level[+level]"));
    }
    std::set<std::string> levels;
    for (absl::string_view l : absl::StrSplit(kv[1], '+')) {
      levels.emplace(l);
    }
    s.Require(std::string(kv[0]), std::move(levels));
  }
  return s;
}

std::string Selector::Label() const {
  if (terms_.empty()) return "all";
  std::vector<std::string> parts;
  for (const auto& [dim, levels] : terms_) {
    parts.push_back(absl::StrCat(dim, "=", absl::StrJoin(levels, "+")));
  }
  return absl::StrJoin(parts, ";");
}

absl::StatusOr<std::vector<bool>> Selector::Mask(const StrataTable& table) const {
  std::vector<bool> mask(table.size(), true);
  for (const auto& [dim, levels] : terms_) {
    auto d = table.DimIndex(dim);
    if (!d.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat("selector ", Label(), ": ", d.status().message()));
    }
    for (size_t i = 0; i < table.size(); ++i) {
      if (!levels.contains(table.stratum(i).key[*d])) mask[i] = false;
    }
  }
  return mask;
}

absl::StatusOr<AgeAdjuster> AgeAdjuster::Create(
    const StrataTable& table, const StandardPopulation& std_pop,
    const Selector& selector, const RateOptions& options) {
  auto age = table.DimIndex(options.age_dim);
  if (!age.ok()) return age.status();
  auto mask = selector.Mask(table);
  if (!mask.ok()) return mask.status();
  std::vector<bool> is_outcome(table.dims().size(), false);
  for (const std::string& d : options.outcome_dims) {
    auto idx = table.DimIndex(d);
    if (!idx.ok()) return idx.status();
    if (*idx == *age) {
      return absl::InvalidArgumentError("age cannot be an outcome dimension");
    }
    is_outcome[*idx] = true;
  }

  AgeAdjuster adj;
  adj.label_ = selector.Label();
  adj.num_strata_ = table.size();
  std::map<std::string, size_t> slot_of;
  std::vector<std::string> levels;
  for (const auto& [level, w] : std_pop.weights) {
    slot_of[level] = levels.size();
    levels.push_back(level);
  }
  adj.population_.assign(levels.size(), 0.0);
  // Population cell: the key with outcome dimensions blanked.
  std::map<std::vector<std::string>, int64_t> cells;
  std::vector<std::string> cell;
  for (size_t i = 0; i < table.size(); ++i) {
    const Stratum& st = table.stratum(i);
    auto slot = slot_of.find(st.key[*age]);
    if (slot == slot_of.end()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "standard population lacks age level '", st.key[*age], "'"));
    }
    if (!(*mask)[i]) continue;
    adj.members_.emplace_back(i, slot->second);
    cell = st.key;
    for (size_t d = 0; d < cell.size(); ++d) {
      if (is_outcome[d]) cell[d].clear();
    }
    auto [it, inserted] = cells.emplace(cell, st.population);
    if (inserted) {
      adj.population_[slot->second] += static_cast<double>(st.population);
    } else if (it->second != st.population) {
      return absl::InvalidArgumentError(absl::StrCat(
          "stratum ", table.KeyString(i),
          " disagrees with its population cell across outcome dimensions"));
    }
  }
  adj.weight_.assign(levels.size(), 0.0);
  double kept = 0.0;
  for (size_t k = 0; k < levels.size(); ++k) {
    const double w = std_pop.weights.at(levels[k]);
    if (adj.population_[k] <= 0.0) {
      if (w > 0.0) adj.dropped_.push_back(levels[k]);
      continue;
    }
    adj.weight_[k] = w;
    kept += w;
  }
  if (!(kept > 0.0)) {
    return absl::FailedPreconditionError(absl::StrCat(
        "undefined rate: selector ", selector.Label(), " has no population"));
  }
  for (double& w : adj.weight_) w /= kept;
  return adj;
}

absl::StatusOr<RateEstimate> AgeAdjuster::Rate(
    std::span<const int64_t> counts) const {
  if (counts.size() != num_strata_) {
    return absl::InvalidArgumentError("count vector does not match table");
  }
  std::vector<double> deaths(population_.size(), 0.0);
  for (const auto& [i, slot] : members_) {
    deaths[slot] += static_cast<double>(counts[i]);
  }
  RateEstimate est;
  double weighted = 0.0;
  for (size_t k = 0; k < deaths.size(); ++k) {
    if (weight_[k] > 0.0) weighted += weight_[k] * deaths[k] / population_[k];
  }
  est.rate = weighted * 1e5;
  est.dropped_age_levels = dropped_;
  return est;
}

absl::StatusOr<RateEstimate> AgeAdjustedRate(std::span<const int64_t> counts,
                                             const StrataTable& table,
                                             const StandardPopulation& std_pop,
                                             const Selector& selector,
                                             const RateOptions& options) {
  auto adj = AgeAdjuster::Create(table, std_pop, selector, options);
  if (!adj.ok()) return adj.status();
  return adj->Rate(counts);
}

namespace {

absl::StatusOr<double> RatioOf(const AgeAdjuster& a, const AgeAdjuster& b,
                               std::span<const int64_t> counts) {
  auto ra = a.Rate(counts);
  if (!ra.ok()) return ra.status();
  auto rb = b.Rate(counts);
  if (!rb.ok()) return rb.status();
  if (!(rb->rate > 0.0)) {
    return absl::FailedPreconditionError(
        absl::StrCat("undefined disparity: zero rate in ", b.label()));
  }
  return ra->rate / rb->rate;
}

}  // namespace

absl::StatusOr<DisparityEstimate> DisparityRatio(
    std::span<const int64_t> counts, const StrataTable& table,
    const StandardPopulation& std_pop, const Selector& group_a,
    const Selector& group_b, const RateOptions& options) {
  std::vector<int64_t> owned(counts.begin(), counts.end());
  return ReplicateDisparity(std::span(&owned, 1), table, std_pop, group_a,
                            group_b, options);
}

absl::StatusOr<DisparityEstimate> ReplicateDisparity(
    std::span<const std::vector<int64_t>> replicates, const StrataTable& table,
    const StandardPopulation& std_pop, const Selector& group_a,
    const Selector& group_b, const RateOptions& options) {
  if (replicates.empty()) {
    return absl::InvalidArgumentError("no replicates to summarize");
  }
  auto adj_a = AgeAdjuster::Create(table, std_pop, group_a, options);
  if (!adj_a.ok()) return adj_a.status();
  auto adj_b = AgeAdjuster::Create(table, std_pop, group_b, options);
  if (!adj_b.ok()) return adj_b.status();
  DisparityEstimate d;
  d.numerator_group = group_a.Label();
  d.denominator_group = group_b.Label();
  for (const std::vector<int64_t>& z : replicates) {
    auto r = RatioOf(*adj_a, *adj_b, z);
    if (!r.ok()) return r.status();
    d.per_replicate.push_back(*r);
  }
  const Summary s = Summarize(d.per_replicate);
  d.mean_ratio = d.ratio = s.mean;
  d.lower = s.p025;
  d.upper = s.p975;
  return d;
}

absl::StatusOr<UrbanRuralPartition> UrbanRuralClassify(
    const StrataTable& table, const std::map<std::string, double>& densities,
    double threshold, std::string_view geo_dim) {
  auto geo = table.DimIndex(geo_dim);
  if (!geo.ok()) return geo.status();
  std::set<std::string> geos;
  for (const Stratum& s : table.strata()) geos.insert(s.key[*geo]);
  UrbanRuralPartition p;
  for (const std::string& g : geos) {
    auto it = densities.find(g);
    if (it == densities.end()) {
      return absl::InvalidArgumentError(
          absl::StrCat("no density for geography '", g, "'"));
    }
    (it->second > threshold ? p.urban_geos : p.rural_geos).push_back(g);
  }
  p.urban.Require(std::string(geo_dim),
                  std::set<std::string>(p.urban_geos.begin(), p.urban_geos.end()));
  p.rural.Require(std::string(geo_dim),
                  std::set<std::string>(p.rural_geos.begin(), p.rural_geos.end()));
  return p;
}

absl::StatusOr<std::vector<ObservedExpectedRow>> ObservedVsExpected(
    const StrataTable& table, const PriorSpec& prior,
    std::span<const std::string> group_dims) {
  if (prior.lambda0.size() != table.size()) {
    return absl::InvalidArgumentError("prior does not match table");
  }
  std::vector<size_t> cols;
  for (const std::string& d : group_dims) {
    auto idx = table.DimIndex(d);
    if (!idx.ok()) return idx.status();
    cols.push_back(*idx);
  }
  std::map<std::string, std::pair<double, double>> acc;
  double obs_total = 0.0, exp_total = 0.0;
  for (size_t i = 0; i < table.size(); ++i) {
    std::vector<std::string> key;
    for (size_t c : cols) key.push_back(table.stratum(i).key[c]);
    const double obs = static_cast<double>(table.stratum(i).count);
    const double expct =
        static_cast<double>(table.stratum(i).population) * prior.lambda0[i];
    auto& [o, e] = acc[absl::StrJoin(key, "|")];
    o += obs;
    e += expct;
    obs_total += obs;
    exp_total += expct;
  }
  std::vector<ObservedExpectedRow> rows;
  for (const auto& [group, oe] : acc) {
    rows.push_back({group, oe.first, oe.second});
  }
  rows.push_back({"total", obs_total, exp_total});
  return rows;
}

void WriteObservedExpectedCsv(std::span<const ObservedExpectedRow> rows,
                              std::ostream& out) {
  WriteCsvRecord(out, {"group", "observed", "expected"});
  for (const ObservedExpectedRow& r : rows) {
    WriteCsvRecord(out, {r.group, FormatDouble(r.observed),
                         FormatDouble(r.expected)});
  }
}

Summary Summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  auto quantile = [&](double p) {
    const double h = p * static_cast<double>(v.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  s.p025 = quantile(0.025);
  s.p975 = quantile(0.975);
  return s;
}

void WriteMetricsCsv(std::span<const MetricRow> rows, std::ostream& out) {
  WriteCsvRecord(out, {"metric", "selector", "epsilon", "replicate", "value"});
  for (const MetricRow& r : rows) {
    WriteCsvRecord(out, {r.metric, r.selector, FormatDouble(r.epsilon),
                         r.replicate, FormatDouble(r.value)});
  }
}

}  // namespace pgsynth
