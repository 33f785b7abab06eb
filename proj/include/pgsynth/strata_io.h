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

#ifndef PGSYNTH_STRATA_IO_H_
#define PGSYNTH_STRATA_IO_H_

#include <ostream>
#include <string>

#include "absl/status/statusor.h"
#include "pgsynth/csv.h"
#include "pgsynth/strata.h"

namespace pgsynth {

// Strata CSV: dim_1,...,dim_k,population,count.
absl::StatusOr<StrataTable> StrataFromCsv(const CsvDocument& doc);
absl::StatusOr<StrataTable> ReadStrataCsv(const std::string& path);
void WriteStrataCsv(const StrataTable& table, std::ostream& out);

// Rates CSV: dim_a,...,dim_m,rate.
absl::StatusOr<RateTable> RatesFromCsv(const CsvDocument& doc);
absl::StatusOr<RateTable> ReadRatesCsv(const std::string& path);
void WriteRatesCsv(const RateTable& rates, std::ostream& out);

}  // namespace pgsynth

#endif  // PGSYNTH_STRATA_IO_H_
