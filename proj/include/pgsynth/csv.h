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

#ifndef PGSYNTH_CSV_H_
#define PGSYNTH_CSV_H_

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"

namespace pgsynth {

struct CsvRow {
  int line = 0;  // 1-based line number in the source file
  std::vector<std::string> fields;
};

// Comma-separated values with double-quote quoting. Blank lines and lines
// starting with '#' are skipped.
struct CsvDocument {
  std::string source;  // file name used in diagnostics
  std::vector<std::string> header;
  int header_line = 0;
  std::vector<CsvRow> rows;

  // "file:line: message" as an InvalidArgument status.
  absl::Status Error(int line, std::string_view message) const;

  // Column index of a header name, or an error naming the file.
  absl::StatusOr<size_t> Column(std::string_view name) const;
};

absl::StatusOr<CsvDocument> ParseCsv(std::string_view text,
                                     std::string source = "<memory>");
absl::StatusOr<CsvDocument> ReadCsvFile(const std::string& path);

absl::StatusOr<int64_t> ParseNonnegativeInt(const CsvDocument& doc,
                                            const CsvRow& row, size_t col);
absl::StatusOr<double> ParseFiniteDouble(const CsvDocument& doc,
                                         const CsvRow& row, size_t col);

// Writes one CSV record, quoting fields that need it.
void WriteCsvRecord(std::ostream& out, const std::vector<std::string>& fields);

// Shortest decimal that round-trips the double.
std::string FormatDouble(double v);

}  // namespace pgsynth

#endif  // PGSYNTH_CSV_H_
