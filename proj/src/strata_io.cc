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

#include "pgsynth/strata_io.h"

#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace pgsynth {

absl::StatusOr<StrataTable> StrataFromCsv(const CsvDocument& doc) {
  const auto& h = doc.header;
  if (h.size() < 3 || h[h.size() - 2] != "population" || h.back() != "count") {
    return doc.Error(doc.header_line,
                     "strata header must be dim_1,...,dim_k,population,count");
  }
  const size_t k = h.size() - 2;
  std::vector<std::string> dims(h.begin(), h.begin() + k);
  std::vector<Stratum> strata;
  strata.reserve(doc.rows.size());
  for (const CsvRow& row : doc.rows) {
    Stratum s;
    s.key.assign(row.fields.begin(), row.fields.begin() + k);
    auto pop = ParseNonnegativeInt(doc, row, k);
    if (!pop.ok()) return pop.status();
    auto cnt = ParseNonnegativeInt(doc, row, k + 1);
    if (!cnt.ok()) return cnt.status();
    s.population = *pop;
    s.count = *cnt;
    strata.push_back(std::move(s));
  }
  auto table = StrataTable::Create(std::move(dims), std::move(strata));
  if (!table.ok()) {
    return absl::InvalidArgumentError(
        absl::StrCat(doc.source, ": ", table.status().message()));
  }
  return table;
}

absl::StatusOr<StrataTable> ReadStrataCsv(const std::string& path) {
  auto doc = ReadCsvFile(path);
  if (!doc.ok()) return doc.status();
  return StrataFromCsv(*doc);
}

void WriteStrataCsv(const StrataTable& table, std::ostream& out) {
  std::vector<std::string> header = table.dims();
  header.push_back("population");
  header.push_back("count");
  WriteCsvRecord(out, header);
  for (const Stratum& s : table.strata()) {
    std::vector<std::string> f = s.key;
    f.push_back(std::to_string(s.population));
    f.push_back(std::to_string(s.count));
    WriteCsvRecord(out, f);
  }
}

absl::StatusOr<RateTable> RatesFromCsv(const CsvDocument& doc) {
  const auto& h = doc.header;
  if (h.size() < 2 || h.back() != "rate") {
    return doc.Error(doc.header_line, "rates header must be dim_a,...,dim_m,rate");
  }
  RateTable rates;
  rates.dims.assign(h.begin(), h.end() - 1);
  const size_t k = rates.dims.size();
  for (const CsvRow& row : doc.rows) {
    std::vector<std::string> cell(row.fields.begin(), row.fields.begin() + k);
    auto r = ParseFiniteDouble(doc, row, k);
    if (!r.ok()) return r.status();
    if (*r < 0.0) return doc.Error(row.line, "rate must be nonnegative");
    if (!rates.rates.emplace(std::move(cell), *r).second) {
      return doc.Error(row.line, "duplicate rate cell");
    }
  }
  return rates;
}

absl::StatusOr<RateTable> ReadRatesCsv(const std::string& path) {
  auto doc = ReadCsvFile(path);
  if (!doc.ok()) return doc.status();
  return RatesFromCsv(*doc);
}

void WriteRatesCsv(const RateTable& rates, std::ostream& out) {
  std::vector<std::string> header = rates.dims;
  header.push_back("rate");
  WriteCsvRecord(out, header);
  for (const auto& [cell, rate] : rates.rates) {
    std::vector<std::string> f = cell;
    f.push_back(FormatDouble(rate));
    WriteCsvRecord(out, f);
  }
}

}  // namespace pgsynth
