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

#include "pgsynth/strata.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "pgsynth/dist.h"

namespace pgsynth {

absl::StatusOr<StrataTable> StrataTable::Create(std::vector<std::string> dims,
                                                std::vector<Stratum> strata) {
  if (dims.empty()) {
    return absl::InvalidArgumentError("strata table: no dimensions");
  }
  if (std::set<std::string>(dims.begin(), dims.end()).size() != dims.size()) {
    return absl::InvalidArgumentError("strata table: duplicate dimension name");
  }
  if (strata.size() < 2) {
    return absl::InvalidArgumentError(
        absl::StrCat("strata table: need at least 2 strata, got ",
                     strata.size()));
  }
  std::set<std::vector<std::string>> seen;
  int64_t total = 0;
  for (size_t i = 0; i < strata.size(); ++i) {
    const Stratum& s = strata[i];
    if (s.key.size() != dims.size()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "strata table: stratum ", i, " has ", s.key.size(),
          " key levels, expected ", dims.size()));
    }
    if (s.population < 0 || s.count < 0) {
      return absl::InvalidArgumentError(absl::StrCat(
          "strata table: negative population or count in stratum ",
          absl::StrJoin(s.key, "|")));
    }
    if (!seen.insert(s.key).second) {
      return absl::InvalidArgumentError(absl::StrCat(
          "strata table: duplicate key ", absl::StrJoin(s.key, "|")));
    }
    total += s.count;
  }
  StrataTable t;
  t.dims_ = std::move(dims);
  t.strata_ = std::move(strata);
  t.y_total_ = total;
  return t;
}

std::vector<int64_t> StrataTable::counts() const {
  std::vector<int64_t> out;
  out.reserve(strata_.size());
  for (const Stratum& s : strata_) out.push_back(s.count);
  return out;
}

std::vector<int64_t> StrataTable::populations() const {
  std::vector<int64_t> out;
  out.reserve(strata_.size());
  for (const Stratum& s : strata_) out.push_back(s.population);
  return out;
}

absl::StatusOr<size_t> StrataTable::DimIndex(std::string_view name) const {
  for (size_t d = 0; d < dims_.size(); ++d) {
    if (dims_[d] == name) return d;
  }
  return absl::InvalidArgumentError(
      absl::StrCat("unknown dimension '", std::string(name), "'"));
}

std::string StrataTable::KeyString(size_t i) const {
  return absl::StrJoin(strata_[i].key, "|");
}

absl::StatusOr<StrataTable> StrataTable::WithCounts(
    std::span<const int64_t> counts) const {
  if (counts.size() != strata_.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "count vector has ", counts.size(), " entries, table has ",
        strata_.size()));
  }
  std::vector<Stratum> strata = strata_;
  for (size_t i = 0; i < strata.size(); ++i) strata[i].count = counts[i];
  return Create(dims_, std::move(strata));
}

std::vector<double> PriorSpec::ExpectedCounts(const StrataTable& table) const {
  std::vector<double> mu(table.size());
  for (size_t i = 0; i < table.size(); ++i) {
    mu[i] = static_cast<double>(table.stratum(i).population) * lambda0[i];
  }
  return mu;
}

absl::StatusOr<PriorSpec> BuildPrior(const StrataTable& table,
                                     const RateTable& raw_rates) {
  std::vector<size_t> cols;
  for (const std::string& d : raw_rates.dims) {
    auto idx = table.DimIndex(d);
    if (!idx.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat("rates reference dimension '", d,
                       "' absent from the strata table"));
    }
    cols.push_back(*idx);
  }
  std::vector<double> raw(table.size());
  long double denom = 0.0L;
  std::vector<std::string> cell(cols.size());
  for (size_t i = 0; i < table.size(); ++i) {
    for (size_t k = 0; k < cols.size(); ++k) {
      cell[k] = table.stratum(i).key[cols[k]];
    }
    auto it = raw_rates.rates.find(cell);
    if (it == raw_rates.rates.end()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "no rate for cell (", absl::StrJoin(cell, ","), ") of stratum ",
          table.KeyString(i)));
    }
    if (!(it->second >= 0.0) || !std::isfinite(it->second)) {
      return absl::InvalidArgumentError(absl::StrCat(
          "invalid rate ", it->second, " for cell (",
          absl::StrJoin(cell, ","), ")"));
    }
    raw[i] = it->second;
    denom += static_cast<long double>(table.stratum(i).population) * raw[i];
  }
  if (!(denom > 0.0L)) {
    return absl::FailedPreconditionError(
        "degenerate prior: sum of population times rate is zero");
  }
  PriorSpec prior;
  prior.rescale_factor = static_cast<double>(table.y_total() / denom);
  prior.lambda0.resize(table.size());
  for (size_t i = 0; i < table.size(); ++i) {
    prior.lambda0[i] = prior.rescale_factor * raw[i];
  }
  prior.source_rates = raw_rates;
  return prior;
}

absl::StatusOr<TruncationBounds> ComputeBounds(const PriorSpec& prior,
                                               const StrataTable& table,
                                               double alpha, double c) {
  if (!(alpha > 0.0 && alpha < 0.5)) {
    return absl::InvalidArgumentError(
        absl::StrCat("alpha = ", alpha, " outside (0, 1/2)"));
  }
  if (!(c >= 1.0) || !std::isfinite(c)) {
    return absl::InvalidArgumentError(absl::StrCat("c = ", c, " must be >= 1"));
  }
  if (prior.lambda0.size() != table.size()) {
    return absl::InvalidArgumentError("prior does not match strata table");
  }
  const std::vector<double> mu = prior.ExpectedCounts(table);
  TruncationBounds b;
  b.alpha = alpha;
  b.c = c;
  b.lower.resize(table.size());
  b.upper.resize(table.size());
  for (size_t i = 0; i < table.size(); ++i) {
    auto lo = PoissonQuantile(alpha / 2.0, mu[i] / c);
    if (!lo.ok()) return lo.status();
    auto hi = PoissonQuantile(1.0 - alpha / 2.0, c * mu[i]);
    if (!hi.ok()) return hi.status();
    b.lower[i] = std::min(*lo, table.y_total());
    b.upper[i] = std::min(*hi, table.y_total());
  }
  return b;
}

DominanceReport CheckDominance(const PriorSpec& prior,
                               const StrataTable& table) {
  const std::vector<double> mu = prior.ExpectedCounts(table);
  long double total = 0.0L;
  for (double m : mu) total += m;
  DominanceReport r;
  r.flagged.resize(mu.size());
  for (size_t i = 0; i < mu.size(); ++i) {
    r.flagged[i] = mu[i] >= static_cast<double>(total - mu[i]);
    if (r.flagged[i]) r.pass = false;
  }
  return r;
}

ClampResult ClampObserved(const StrataTable& table,
                          const TruncationBounds& bounds) {
  ClampResult r;
  r.counts.resize(table.size());
  for (size_t i = 0; i < table.size(); ++i) {
    const int64_t y = table.stratum(i).count;
    r.counts[i] = std::clamp(y, bounds.lower[i], bounds.upper[i]);
    if (r.counts[i] != y) ++r.num_clamped;
  }
  return r;
}

double DefaultAlpha(const StrataTable& table) {
  return std::min(1.0 / static_cast<double>(table.size()), 0.25);
}

}  // namespace pgsynth
