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

#include "pgsynth/csv.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/tokenizer.hpp>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace pgsynth {

absl::Status CsvDocument::Error(int line, std::string_view message) const {
  return absl::InvalidArgumentError(absl::StrCat(source, ":", line, ": ", std::string(message)));
}

absl::StatusOr<size_t> CsvDocument::Column(std::string_view name) const {
  for (size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  return Error(header_line, absl::StrCat("missing column '", std::string(name), "'"));
}

absl::StatusOr<CsvDocument> ParseCsv(std::string_view text, std::string source) {
  using Separator = boost::escaped_list_separator<char>;
  using Tokenizer = boost::tokenizer<Separator>;
  CsvDocument doc;
  doc.source = std::move(source);
  const Separator sep('\\', ',', '"');
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') {
      if (end == text.size()) break;
      continue;
    }
    std::vector<std::string> fields;
    try {
      Tokenizer tok(line, sep);
      fields.assign(tok.begin(), tok.end());
    } catch (const boost::escaped_list_error& e) {
      return doc.Error(line_no, absl::StrCat("malformed record: ", e.what()));
    }
    if (doc.header.empty()) {
      doc.header = std::move(fields);
      doc.header_line = line_no;
    } else {
      if (fields.size() != doc.header.size()) {
        return doc.Error(line_no, absl::StrCat("expected ", doc.header.size(),
                                               " fields, found ", fields.size()));
      }
      doc.rows.push_back({line_no, std::move(fields)});
    }
    if (end == text.size()) break;
  }
  if (doc.header.empty()) return doc.Error(line_no, "no header row");
  return doc;
}

absl::StatusOr<CsvDocument> ReadCsvFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseCsv(buf.str(), path);
}

absl::StatusOr<int64_t> ParseNonnegativeInt(const CsvDocument& doc,
                                            const CsvRow& row, size_t col) {
  const std::string& f = row.fields[col];
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size() || v < 0) {
    return doc.Error(row.line, absl::StrCat("column '", doc.header[col],
                                            "': expected a nonnegative integer, got '",
                                            f, "'"));
  }
  return v;
}

absl::StatusOr<double> ParseFiniteDouble(const CsvDocument& doc,
                                         const CsvRow& row, size_t col) {
  const std::string& f = row.fields[col];
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
    return doc.Error(row.line, absl::StrCat("column '", doc.header[col],
                                            "': expected a number, got '", f, "'"));
  }
  return v;
}

void WriteCsvRecord(std::ostream& out, const std::vector<std::string>& fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n\\") == std::string::npos) {
      out << f;
      continue;
    }
    out << '"';
    for (char ch : f) {
      if (ch == '"' || ch == '\\') out << '\\';
      out << ch;
    }
    out << '"';
  }
  out << '\n';
}

std::string FormatDouble(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace pgsynth
