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

// pgsynth: calibrate, synthesize, audit, evaluate and generate fixtures.
//
// Exit codes: 0 success, 1 runtime or numeric failure, 2 input or schema
// error.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "json.hpp"
#include "pgsynth/audit.h"
#include "pgsynth/calibration.h"
#include "pgsynth/csv.h"
#include "pgsynth/fixtures.h"
#include "pgsynth/provenance.h"
#include "pgsynth/simd.h"
#include "pgsynth/strata.h"
#include "pgsynth/strata_io.h"
#include "pgsynth/synthesizer.h"
#include "pgsynth/utility.h"

namespace pgsynth::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;

int ExitCode(const absl::Status& s) {
  switch (s.code()) {
    case absl::StatusCode::kOk:
      return kExitOk;
    case absl::StatusCode::kInvalidArgument:
    case absl::StatusCode::kNotFound:
      return kExitInput;
    default:
      return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// Configuration: JSON file overlaid with explicitly given flags.

absl::StatusOr<std::string> ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Hash of the settings that determine output content. Output locations and
// the thread count are left out, so relocated or re-threaded runs match.
std::string RunHash(json cfg) {
  for (const char* key : {"out", "curve", "rows", "threads"}) cfg.erase(key);
  return ConfigHash(cfg);
}

absl::StatusOr<json> LoadConfigFile(const std::string& path) {
  if (path.empty()) return json::object();
  auto text = ReadText(path);
  if (!text.ok()) return text.status();
  try {
    json j = json::parse(*text);
    if (!j.is_object()) {
      return absl::InvalidArgumentError(
          absl::StrCat(path, ": config must be a JSON object"));
    }
    return j;
  } catch (const json::parse_error& e) {
    return absl::InvalidArgumentError(absl::StrCat(path, ": ", e.what()));
  }
}

template <typename T>
absl::StatusOr<T> Get(const json& cfg, const char* key, T fallback) {
  if (!cfg.contains(key) || cfg[key].is_null()) return fallback;
  try {
    return cfg[key].get<T>();
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("config field '", key, "': ", e.what()));
  }
}

template <typename T>
absl::StatusOr<T> Require(const json& cfg, const char* key) {
  if (!cfg.contains(key) || cfg[key].is_null()) {
    return absl::InvalidArgumentError(
        absl::StrCat("missing required setting '", key, "'"));
  }
  return Get<T>(cfg, key, T{});
}

absl::StatusOr<std::vector<double>> EpsilonGrid(const json& cfg) {
  if (!cfg.contains("epsilon")) {
    return absl::InvalidArgumentError("missing required setting 'epsilon'");
  }
  std::vector<double> grid;
  const json& e = cfg["epsilon"];
  if (e.is_number()) {
    grid.push_back(e.get<double>());
  } else if (e.is_array()) {
    for (const json& v : e) {
      if (!v.is_number()) {
        return absl::InvalidArgumentError("epsilon grid must hold numbers");
      }
      grid.push_back(v.get<double>());
    }
  } else {
    return absl::InvalidArgumentError("epsilon must be a number or a list");
  }
  if (grid.empty()) return absl::InvalidArgumentError("empty epsilon grid");
  for (double eps : grid) {
    if (!(eps > 0.0) || !std::isfinite(eps)) {
      return absl::InvalidArgumentError(
          absl::StrCat("epsilon ", eps, " must be positive"));
    }
  }
  return grid;
}

int DefaultThreads() {
  if (const char* env = std::getenv("PGSYNTH_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// ---------------------------------------------------------------------------
// Output staging: nothing appears under its final name until Commit().

class StagedOutputs {
 public:
  StagedOutputs() = default;
  StagedOutputs(const StagedOutputs&) = delete;
  StagedOutputs& operator=(const StagedOutputs&) = delete;
  ~StagedOutputs() {
    for (auto& f : files_) {
      f.stream.reset();
      std::error_code ec;
      fs::remove(f.temp, ec);
    }
  }

  absl::StatusOr<std::ostream*> Open(const fs::path& final_path) {
    std::error_code ec;
    if (final_path.has_parent_path()) {
      fs::create_directories(final_path.parent_path(), ec);
      if (ec) {
        return absl::InvalidArgumentError(absl::StrCat(
            "cannot create directory ", final_path.parent_path().string(),
            ": ", ec.message()));
      }
    }
    File f;
    f.final_path = final_path;
    f.temp = final_path;
    f.temp += absl::StrCat(".partial-", ::getpid());
    f.stream = std::make_unique<std::ofstream>(f.temp, std::ios::binary);
    if (!*f.stream) {
      return absl::InvalidArgumentError(
          absl::StrCat("cannot write ", final_path.string()));
    }
    files_.push_back(std::move(f));
    return files_.back().stream.get();
  }

  absl::Status Commit() {
    for (auto& f : files_) {
      f.stream->flush();
      if (!*f.stream) {
        return absl::InternalError(
            absl::StrCat("write failed for ", f.final_path.string()));
      }
      f.stream.reset();
    }
    for (auto& f : files_) {
      std::error_code ec;
      fs::rename(f.temp, f.final_path, ec);
      if (ec) {
        return absl::InternalError(absl::StrCat(
            "cannot move output into place: ", f.final_path.string()));
      }
    }
    files_.clear();
    return absl::OkStatus();
  }

 private:
  struct File {
    fs::path final_path;
    fs::path temp;
    std::unique_ptr<std::ofstream> stream;
  };
  std::vector<File> files_;
};

void WriteHashComment(std::ostream& out, const std::string& hash,
                      const std::string& extra = "") {
  out << "# config_hash=" << hash;
  if (!extra.empty()) out << " " << extra;
  out << "\n";
}

std::string EpsilonTag(double eps) { return "eps" + FormatDouble(eps); }

// report.json + eps 0.5 -> report_eps0.5.json
fs::path WithSuffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p.parent_path() / (p.stem().string() + "_" + suffix);
  out += p.extension();
  return out;
}

// ---------------------------------------------------------------------------
// Model inputs shared by calibrate, synthesize and audit.

struct ModelInputs {
  StrataTable table;
  RateTable rates;
  PriorSpec prior;
};

absl::StatusOr<StrataTable> LoadStrata(const std::string& path, json& cfg,
                                       const char* hash_key) {
  auto text = ReadText(path);
  if (!text.ok()) return text.status();
  cfg["input_hashes"][hash_key] = ContentHash(*text);
  auto doc = ParseCsv(*text, path);
  if (!doc.ok()) return doc.status();
  return StrataFromCsv(*doc);
}

absl::StatusOr<ModelInputs> LoadModel(json& cfg) {
  auto strata_path = Require<std::string>(cfg, "strata");
  if (!strata_path.ok()) return strata_path.status();
  auto rates_path = Require<std::string>(cfg, "rates");
  if (!rates_path.ok()) return rates_path.status();
  auto table = LoadStrata(*strata_path, cfg, "strata");
  if (!table.ok()) return table.status();
  auto text = ReadText(*rates_path);
  if (!text.ok()) return text.status();
  cfg["input_hashes"]["rates"] = ContentHash(*text);
  auto doc = ParseCsv(*text, *rates_path);
  if (!doc.ok()) return doc.status();
  auto rates = RatesFromCsv(*doc);
  if (!rates.ok()) return rates.status();
  auto prior = BuildPrior(*table, *rates);
  if (!prior.ok()) {
    // A prior that does not fit the strata is an input problem.
    if (prior.status().code() == absl::StatusCode::kFailedPrecondition) {
      return absl::InvalidArgumentError(prior.status().message());
    }
    return prior.status();
  }
  return ModelInputs{*std::move(table), *std::move(rates), *std::move(prior)};
}

struct MechanismSettings {
  Mode mode = Mode::kTruncated;
  double alpha = 0.0;
  double c = 1.0;
};

absl::StatusOr<MechanismSettings> ReadMechanism(json& cfg,
                                                const StrataTable& table) {
  MechanismSettings m;
  auto mode_name = Get<std::string>(cfg, "mode", "truncated");
  if (!mode_name.ok()) return mode_name.status();
  auto mode = ParseMode(*mode_name);
  if (!mode.ok()) return mode.status();
  m.mode = *mode;
  auto alpha = Get<double>(cfg, "alpha", DefaultAlpha(table));
  if (!alpha.ok()) return alpha.status();
  auto c = Get<double>(cfg, "c", 1.0);
  if (!c.ok()) return c.status();
  m.alpha = *alpha;
  m.c = *c;
  // Record resolved defaults so the hash covers them.
  cfg["mode"] = std::string(ModeName(m.mode));
  if (m.mode == Mode::kTruncated) {
    cfg["alpha"] = m.alpha;
    cfg["c"] = m.c;
  }
  return m;
}

absl::StatusOr<Calibration> CalibrateOne(const ModelInputs& in,
                                         const MechanismSettings& m,
                                         double eps) {
  std::optional<TruncationBounds> bounds;
  if (m.mode == Mode::kTruncated) {
    auto b = ComputeBounds(in.prior, in.table, m.alpha, m.c);
    if (!b.ok()) return b.status();
    bounds = *std::move(b);
  }
  return SolveHyperparameters(in.table, in.prior, eps, m.mode,
                              bounds ? &*bounds : nullptr);
}

json CalibrationReport(const Calibration& calib, const StrataTable& table,
                       const json& cfg, const std::string& hash) {
  json j = CalibrationToJson(calib, table);
  j["config_hash"] = hash;
  j["config"] = cfg;
  return j;
}

// ---------------------------------------------------------------------------
// calibrate

absl::Status RunCalibrate(json cfg) {
  auto in = LoadModel(cfg);
  if (!in.ok()) return in.status();
  auto mech = ReadMechanism(cfg, in->table);
  if (!mech.ok()) return mech.status();
  auto grid = EpsilonGrid(cfg);
  if (!grid.ok()) return grid.status();
  auto out = Require<std::string>(cfg, "out");
  if (!out.ok()) return out.status();
  const std::string hash = RunHash(cfg);

  std::vector<double> sorted = *grid;
  std::sort(sorted.begin(), sorted.end());
  StagedOutputs staged;
  std::vector<double> prev_a;
  for (double eps : sorted) {
    auto calib = CalibrateOne(*in, *mech, eps);
    if (!calib.ok()) return calib.status();
    if (!prev_a.empty()) {
      for (size_t i = 0; i < prev_a.size(); ++i) {
        if (calib->a[i] > prev_a[i] * (1 + 1e-9)) {
          return absl::InternalError(absl::StrCat(
              "hyperparameter a increased with epsilon at stratum ",
              in->table.KeyString(i)));
        }
      }
    }
    prev_a = calib->a;
    const fs::path path =
        grid->size() == 1 ? fs::path(*out) : WithSuffix(*out, EpsilonTag(eps));
    auto stream = staged.Open(path);
    if (!stream.ok()) return stream.status();
    **stream << CalibrationReport(*calib, in->table, cfg, hash).dump(2) << "\n";
    std::cerr << "calibrated eps=" << eps << " -> " << path.string() << "\n";
  }
  return staged.Commit();
}

// ---------------------------------------------------------------------------
// synthesize

absl::Status RunSynthesize(json cfg) {
  const auto start = std::chrono::steady_clock::now();
  auto in = LoadModel(cfg);
  if (!in.ok()) return in.status();
  auto mech = ReadMechanism(cfg, in->table);
  if (!mech.ok()) return mech.status();
  auto grid = EpsilonGrid(cfg);
  if (!grid.ok()) return grid.status();
  auto out = Require<std::string>(cfg, "out");
  if (!out.ok()) return out.status();
  auto replicates = Get<int64_t>(cfg, "replicates", 100);
  if (!replicates.ok()) return replicates.status();
  if (*replicates < 1) {
    return absl::InvalidArgumentError("replicates must be positive");
  }
  auto seed = Get<uint64_t>(cfg, "seed", 1);
  if (!seed.ok()) return seed.status();
  auto route_name = Get<std::string>(cfg, "route", "exact");
  if (!route_name.ok()) return route_name.status();
  SamplingRoute route;
  if (*route_name == "exact") {
    route = SamplingRoute::kExact;
  } else if (*route_name == "rates") {
    route = SamplingRoute::kViaRates;
  } else {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown route '", *route_name, "' (exact or rates)"));
  }
  auto sparse = Get<bool>(cfg, "sparse", false);
  if (!sparse.ok()) return sparse.status();
  cfg["replicates"] = *replicates;
  cfg["seed"] = *seed;
  cfg["route"] = *route_name;
  cfg["sparse"] = *sparse;
  auto threads = Get<int>(cfg, "threads", DefaultThreads());
  if (!threads.ok()) return threads.status();
  json recorded = cfg;
  recorded.erase("threads");
  const std::string hash = RunHash(cfg);

  const fs::path dir(*out);
  StagedOutputs staged;
  json manifest;
  manifest["config"] = recorded;
  manifest["config_hash"] = hash;
  manifest["threads"] = *threads;
  manifest["simd_kernels"] = simd::ActiveKernels().name;
  manifest["runs"] = json::array();
  for (double eps : *grid) {
    const auto t0 = std::chrono::steady_clock::now();
    auto calib = CalibrateOne(*in, *mech, eps);
    if (!calib.ok()) return calib.status();
    const auto t1 = std::chrono::steady_clock::now();
    const std::string tag = EpsilonTag(eps);
    auto report = staged.Open(dir / ("calibration_" + tag + ".json"));
    if (!report.ok()) return report.status();
    **report << CalibrationReport(*calib, in->table, recorded, hash).dump(2)
             << "\n";
    auto rows = staged.Open(dir / ("replicates_" + tag + ".csv"));
    if (!rows.ok()) return rows.status();
    std::ostream& csv = **rows;
    WriteHashComment(csv, hash,
                     absl::StrCat("epsilon=", FormatDouble(eps),
                                  " mode=", std::string(ModeName(mech->mode))));
    WriteReplicateHeader(in->table, csv);
    int64_t checked = 0;
    absl::Status s = ForEachReplicate(
        in->table, *calib, *replicates, *seed,
        RunOptions{.threads = *threads, .route = route}, 64,
        [&](const SyntheticReplicate& rep) -> absl::Status {
          absl::Status inv = CheckReplicate(rep, in->table, *calib);
          if (!inv.ok()) return inv;
          ++checked;
          WriteReplicateRows(in->table, rep, csv, *sparse);
          return absl::OkStatus();
        });
    if (!s.ok()) return s;
    const auto t2 = std::chrono::steady_clock::now();
    json run;
    run["epsilon"] = eps;
    run["calibration_file"] = "calibration_" + tag + ".json";
    run["replicate_file"] = "replicates_" + tag + ".csv";
    run["replicates"] = *replicates;
    run["invariant_checks_passed"] = checked;
    run["invariant_failures"] = 0;
    run["calibration_seconds"] = std::chrono::duration<double>(t1 - t0).count();
    run["sampling_seconds"] = std::chrono::duration<double>(t2 - t1).count();
    manifest["runs"].push_back(std::move(run));
    std::cerr << "eps=" << eps << ": " << checked << " replicates -> "
              << (dir / ("replicates_" + tag + ".csv")).string() << "\n";
  }
  manifest["total_seconds"] = std::chrono::duration<double>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
  auto mf = staged.Open(dir / "manifest.json");
  if (!mf.ok()) return mf.status();
  **mf << manifest.dump(2) << "\n";
  return staged.Commit();
}

// ---------------------------------------------------------------------------
// audit

absl::Status RunAudit(json cfg) {
  auto in = LoadModel(cfg);
  if (!in.ok()) return in.status();
  auto mech = ReadMechanism(cfg, in->table);
  if (!mech.ok()) return mech.status();
  auto grid = EpsilonGrid(cfg);
  if (!grid.ok()) return grid.status();
  if (grid->size() != 1) {
    return absl::InvalidArgumentError("audit takes a single epsilon");
  }
  const double eps = grid->front();
  auto out = Require<std::string>(cfg, "out");
  if (!out.ok()) return out.status();
  auto cap = Get<int64_t>(cfg, "cap", EnumerationOptions{}.cap);
  if (!cap.ok()) return cap.status();
  auto rows_path = Get<std::string>(cfg, "rows", "");
  if (!rows_path.ok()) return rows_path.status();
  const std::string hash = RunHash(cfg);

  auto calib = CalibrateOne(*in, *mech, eps);
  if (!calib.ok()) return calib.status();
  AuditOptions opts;
  opts.enumeration.cap = *cap;
  opts.collect_rows = !rows_path->empty();
  auto report = Audit(in->table, *calib, eps, opts);
  if (!report.ok()) {
    if (report.status().code() == absl::StatusCode::kResourceExhausted) {
      return absl::ResourceExhaustedError(absl::StrCat(
          report.status().message(),
          "; exhaustive audits need few strata and a small total. Audit a "
          "reduced instance with the same calibration settings, or raise "
          "--cap"));
    }
    return report.status();
  }

  StagedOutputs staged;
  json j = AuditReportToJson(*report);
  j["config_hash"] = hash;
  j["config"] = cfg;
  j["calibration"] = CalibrationToJson(*calib, in->table);
  auto js = staged.Open(*out);
  if (!js.ok()) return js.status();
  **js << j.dump(2) << "\n";
  if (in->table.size() == 2) {
    auto curve = RatioCurve(in->table, *calib);
    if (!curve.ok()) return curve.status();
    auto curve_path = Get<std::string>(
        cfg, "curve", WithSuffix(*out, "curve").replace_extension(".csv"));
    if (!curve_path.ok()) return curve_path.status();
    auto cs = staged.Open(*curve_path);
    if (!cs.ok()) return cs.status();
    WriteHashComment(**cs, hash);
    WriteCurveCsv(*curve, in->table.y_total(), **cs);
  }
  if (!rows_path->empty()) {
    auto rs = staged.Open(*rows_path);
    if (!rs.ok()) return rs.status();
    WriteHashComment(**rs, hash);
    WriteAuditRowsCsv(*report, **rs);
  }
  if (absl::Status s = staged.Commit(); !s.ok()) return s;
  std::cerr << "max |log ratio| = " << report->max_abs_log_ratio
            << " (epsilon " << eps << "): "
            << (report->pass ? "pass" : "FAIL") << "\n";
  if (!report->pass) {
    return absl::InternalError("audit found a neighbor pair exceeding epsilon");
  }
  return absl::OkStatus();
}

// ---------------------------------------------------------------------------
// evaluate

struct ReplicateSet {
  double epsilon = 0.0;
  std::vector<std::vector<int64_t>> z;
};

absl::StatusOr<double> EpsilonFromFileName(const fs::path& p) {
  const std::string stem = p.stem().string();  // replicates_eps<value>
  const std::string prefix = "replicates_eps";
  try {
    size_t used = 0;
    const std::string num = stem.substr(prefix.size());
    const double eps = std::stod(num, &used);
    if (used == num.size()) return eps;
  } catch (const std::exception&) {
  }
  return absl::InvalidArgumentError(
      absl::StrCat("cannot read epsilon from file name ", p.string()));
}

absl::StatusOr<ReplicateSet> ReadReplicateFile(const fs::path& path,
                                               const StrataTable& truth,
                                               json& cfg) {
  auto text = ReadText(path.string());
  if (!text.ok()) return text.status();
  cfg["input_hashes"][path.filename().string()] = ContentHash(*text);
  auto doc = ParseCsv(*text, path.string());
  if (!doc.ok()) return doc.status();
  const auto& dims = truth.dims();
  if (doc->header.size() != dims.size() + 2 || doc->header.front() != "replicate" ||
      doc->header.back() != "z" ||
      !std::equal(dims.begin(), dims.end(), doc->header.begin() + 1)) {
    return doc->Error(doc->header_line,
                      "replicate header must be replicate,<strata dims>,z");
  }
  std::map<std::vector<std::string>, size_t> index;
  for (size_t i = 0; i < truth.size(); ++i) index[truth.stratum(i).key] = i;
  ReplicateSet set;
  auto eps = EpsilonFromFileName(path);
  if (!eps.ok()) return eps.status();
  set.epsilon = *eps;
  std::map<int64_t, size_t> slot;
  std::vector<std::string> key(dims.size());
  for (const CsvRow& row : doc->rows) {
    if (row.fields.size() != doc->header.size()) {
      return doc->Error(row.line, "wrong number of fields");
    }
    auto r = ParseNonnegativeInt(*doc, row, 0);
    if (!r.ok()) return r.status();
    auto z = ParseNonnegativeInt(*doc, row, doc->header.size() - 1);
    if (!z.ok()) return z.status();
    std::copy(row.fields.begin() + 1, row.fields.end() - 1, key.begin());
    auto it = index.find(key);
    if (it == index.end()) return doc->Error(row.line, "unknown stratum");
    auto [s, inserted] = slot.emplace(*r, set.z.size());
    if (inserted) set.z.emplace_back(truth.size(), 0);
    set.z[s->second][it->second] = *z;
  }
  for (size_t k = 0; k < set.z.size(); ++k) {
    int64_t sum = 0;
    for (int64_t v : set.z[k]) sum += v;
    if (sum != truth.y_total()) {
      return absl::InvalidArgumentError(absl::StrCat(
          path.string(), ": a replicate total differs from the truth total"));
    }
  }
  return set;
}

struct NamedContrast {
  std::string label;
  Selector numerator;
  Selector denominator;
};

absl::Status RunEvaluate(json cfg) {
  auto truth_path = Require<std::string>(cfg, "truth");
  if (!truth_path.ok()) return truth_path.status();
  auto rep_dir = Require<std::string>(cfg, "replicates_dir");
  if (!rep_dir.ok()) return rep_dir.status();
  auto std_path = Require<std::string>(cfg, "std");
  if (!std_path.ok()) return std_path.status();
  auto out = Require<std::string>(cfg, "out");
  if (!out.ok()) return out.status();
  auto density_path = Get<std::string>(cfg, "density", "");
  if (!density_path.ok()) return density_path.status();
  auto threshold = Get<double>(cfg, "urban_threshold", 280.0);
  if (!threshold.ok()) return threshold.status();
  auto geo_dim = Get<std::string>(cfg, "geo_dim", "county");
  if (!geo_dim.ok()) return geo_dim.status();
  auto age_dim = Get<std::string>(cfg, "age_dim", "age");
  if (!age_dim.ok()) return age_dim.status();
  auto outcome_list = Get<std::string>(cfg, "outcome_dims", "");
  if (!outcome_list.ok()) return outcome_list.status();
  auto group_a = Get<std::string>(cfg, "group_a", "");
  auto group_b = Get<std::string>(cfg, "group_b", "");
  if (!group_a.ok()) return group_a.status();
  if (!group_b.ok()) return group_b.status();
  if (group_a->empty() != group_b->empty()) {
    return absl::InvalidArgumentError("group_a and group_b go together");
  }

  auto truth = LoadStrata(*truth_path, cfg, "truth");
  if (!truth.ok()) return truth.status();
  auto std_text = ReadText(*std_path);
  if (!std_text.ok()) return std_text.status();
  cfg["input_hashes"]["std"] = ContentHash(*std_text);
  auto std_doc = ParseCsv(*std_text, *std_path);
  if (!std_doc.ok()) return std_doc.status();
  auto std_pop = StandardPopulationFromCsv(*std_doc);
  if (!std_pop.ok()) return std_pop.status();

  RateOptions rate_opts{.age_dim = *age_dim};
  if (cfg.contains("outcome_dims")) {
    for (absl::string_view d :
         absl::StrSplit(*outcome_list, ',', absl::SkipEmpty())) {
      rate_opts.outcome_dims.emplace_back(d);
    }
  } else if (truth->DimIndex("cause").ok()) {
    rate_opts.outcome_dims = {"cause"};
  }
  cfg["outcome_dims"] = absl::StrJoin(rate_opts.outcome_dims, ",");

  std::vector<std::pair<std::string, Selector>> rate_selectors = {
      {"all", Selector()}};
  std::vector<NamedContrast> contrasts;
  if (!density_path->empty()) {
    auto text = ReadText(*density_path);
    if (!text.ok()) return text.status();
    cfg["input_hashes"]["density"] = ContentHash(*text);
    auto doc = ParseCsv(*text, *density_path);
    if (!doc.ok()) return doc.status();
    auto dens = DensitiesFromCsv(*doc);
    if (!dens.ok()) return dens.status();
    auto part = UrbanRuralClassify(*truth, *dens, *threshold, *geo_dim);
    if (!part.ok()) return part.status();
    contrasts.push_back({"urban/rural", part->urban, part->rural});
    rate_selectors.emplace_back("urban", part->urban);
    rate_selectors.emplace_back("rural", part->rural);
  }
  if (!group_a->empty()) {
    auto a = Selector::Parse(*group_a);
    if (!a.ok()) return a.status();
    auto b = Selector::Parse(*group_b);
    if (!b.ok()) return b.status();
    contrasts.push_back({a->Label() + "/" + b->Label(), *a, *b});
    rate_selectors.emplace_back(a->Label(), *a);
    rate_selectors.emplace_back(b->Label(), *b);
  }

  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(*rep_dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("replicates_eps", 0) == 0 && entry.path().extension() == ".csv") {
      files.push_back(entry.path());
    }
  }
  if (ec) {
    return absl::NotFoundError(
        absl::StrCat("cannot list replicate directory ", *rep_dir));
  }
  if (files.empty()) {
    return absl::NotFoundError(
        absl::StrCat("no replicates_eps*.csv files in ", *rep_dir));
  }
  std::vector<ReplicateSet> sets;
  for (const fs::path& f : files) {
    auto set = ReadReplicateFile(f, *truth, cfg);
    if (!set.ok()) return set.status();
    sets.push_back(*std::move(set));
  }
  std::sort(sets.begin(), sets.end(),
            [](const auto& x, const auto& y) { return x.epsilon > y.epsilon; });
  const std::string hash = RunHash(cfg);

  std::vector<MetricRow> rows;
  auto emit = [&](const std::string& metric, const std::string& sel,
                  double eps, double truth_value,
                  const std::vector<double>& values) {
    for (size_t r = 0; r < values.size(); ++r) {
      rows.push_back({metric, sel, eps, std::to_string(r), values[r]});
    }
    const Summary s = Summarize(values);
    rows.push_back({metric, sel, eps, "truth", truth_value});
    rows.push_back({metric, sel, eps, "mean", s.mean});
    rows.push_back({metric, sel, eps, "p2.5", s.p025});
    rows.push_back({metric, sel, eps, "p97.5", s.p975});
    rows.push_back(
        {metric, sel, eps, "distance_to_truth", std::abs(s.mean - truth_value)});
  };
  const auto truth_counts = truth->counts();
  for (const ReplicateSet& set : sets) {
    for (const auto& [label, sel] : rate_selectors) {
      auto adj = AgeAdjuster::Create(*truth, *std_pop, sel, rate_opts);
      if (!adj.ok()) return adj.status();
      auto t = adj->Rate(truth_counts);
      if (!t.ok()) return t.status();
      std::vector<double> values;
      for (const auto& z : set.z) {
        auto v = adj->Rate(z);
        if (!v.ok()) return v.status();
        values.push_back(v->rate);
      }
      emit("age_adjusted_rate", label, set.epsilon, t->rate, values);
    }
    for (const NamedContrast& c : contrasts) {
      auto t = DisparityRatio(truth_counts, *truth, *std_pop, c.numerator,
                              c.denominator, rate_opts);
      if (!t.ok()) return t.status();
      auto est = ReplicateDisparity(set.z, *truth, *std_pop, c.numerator,
                                    c.denominator, rate_opts);
      if (!est.ok()) return est.status();
      emit("disparity", c.label, set.epsilon, t->ratio, est->per_replicate);
    }
  }
  StagedOutputs staged;
  auto os = staged.Open(*out);
  if (!os.ok()) return os.status();
  WriteHashComment(**os, hash);
  WriteMetricsCsv(rows, **os);
  return staged.Commit();
}

// ---------------------------------------------------------------------------
// fixture

absl::Status RunFixture(json cfg) {
  json spec_json = json::object();
  auto spec_path = Get<std::string>(cfg, "spec", "");
  if (!spec_path.ok()) return spec_path.status();
  if (!spec_path->empty()) {
    auto loaded = LoadConfigFile(*spec_path);
    if (!loaded.ok()) return loaded.status();
    spec_json = *std::move(loaded);
  }
  if (cfg.contains("preset")) spec_json["preset"] = cfg["preset"];
  if (cfg.contains("seed")) spec_json["seed"] = cfg["seed"];
  if (spec_json.empty()) {
    return absl::InvalidArgumentError("fixture needs --spec or --preset");
  }
  auto out = Require<std::string>(cfg, "out");
  if (!out.ok()) return out.status();
  auto spec = FixtureSpecFromJson(spec_json);
  if (!spec.ok()) return spec.status();
  auto fx = GenerateFixture(*spec);
  if (!fx.ok()) {
    if (fx.status().code() == absl::StatusCode::kFailedPrecondition) {
      return absl::InvalidArgumentError(fx.status().message());
    }
    return fx.status();
  }
  json hashed;
  hashed["spec"] = spec_json;
  const std::string hash = RunHash(cfg);

  const fs::path dir(*out);
  StagedOutputs staged;
  auto open = [&](const char* name) { return staged.Open(dir / name); };
  auto strata = open("strata.csv");
  auto rates = open("rates.csv");
  auto density = open("density.csv");
  auto std_pop = open("std_pop.csv");
  for (const auto* s : {&strata, &rates, &density, &std_pop}) {
    if (!s->ok()) return s->status();
  }
  WriteHashComment(**strata, hash);
  WriteStrataCsv(fx->table, **strata);
  WriteHashComment(**rates, hash);
  WriteRatesCsv(fx->raw_rates, **rates);
  WriteHashComment(**density, hash);
  WriteDensityCsv(fx->densities, **density);
  WriteHashComment(**std_pop, hash);
  WriteStandardPopulationCsv(fx->standard, **std_pop);

  const auto counts = fx->table.counts();
  int urban = 0;
  for (const auto& [geo, d] : fx->densities) urban += d > spec->urban_threshold;
  json manifest;
  manifest["config_hash"] = hash;
  manifest["config"] = hashed;
  manifest["strata"] = fx->table.size();
  manifest["y_total"] = fx->table.y_total();
  manifest["max_count"] =
      counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  manifest["urban_geographies"] = urban;
  auto mf = open("manifest.json");
  if (!mf.ok()) return mf.status();
  **mf << manifest.dump(2) << "\n";
  return staged.Commit();
}

// ---------------------------------------------------------------------------
// Command line

struct ModelFlags {
  std::string strata, rates, mode, out;
  std::vector<double> epsilon;
  double alpha = 0.0, c = 1.0;
  CLI::Option *strata_opt, *rates_opt, *mode_opt, *out_opt, *epsilon_opt,
      *alpha_opt, *c_opt;

  void Add(CLI::App* app) {
    strata_opt = app->add_option("--strata", strata, "strata CSV");
    rates_opt = app->add_option("--rates", rates, "public rates CSV");
    epsilon_opt = app->add_option("--epsilon", epsilon,
                                  "privacy budget; a comma list gives a grid")
                      ->delimiter(',');
    mode_opt = app->add_option("--mode", mode,
                               "untruncated, truncated or dirichlet-equivalent");
    alpha_opt = app->add_option("--alpha", alpha, "truncation tail mass");
    c_opt = app->add_option("--c", c, "truncation interval widening, >= 1");
    out_opt = app->add_option("--out", out, "output path");
  }

  void Overlay(json& cfg) const {
    if (strata_opt->count()) cfg["strata"] = strata;
    if (rates_opt->count()) cfg["rates"] = rates;
    if (epsilon_opt->count()) {
      cfg["epsilon"] = epsilon.size() == 1 ? json(epsilon[0]) : json(epsilon);
    }
    if (mode_opt->count()) cfg["mode"] = mode;
    if (alpha_opt->count()) cfg["alpha"] = alpha;
    if (c_opt->count()) cfg["c"] = c;
    if (out_opt->count()) cfg["out"] = out;
  }
};

int Main(int argc, char** argv) {
  CLI::App app{"Differentially private synthetic counts from a Poisson-gamma "
               "mechanism"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config; flags override it");

  CLI::App* calibrate = app.add_subcommand("calibrate", "solve hyperparameters");
  ModelFlags calibrate_flags;
  calibrate_flags.Add(calibrate);

  CLI::App* synthesize = app.add_subcommand("synthesize", "draw replicates");
  ModelFlags synth_flags;
  synth_flags.Add(synthesize);
  int64_t replicates = 0;
  uint64_t seed = 0;
  int threads = 0;
  std::string route;
  bool sparse = false;
  auto* replicates_opt =
      synthesize->add_option("--replicates", replicates, "replicates per epsilon");
  auto* seed_opt = synthesize->add_option("--seed", seed, "base seed");
  auto* threads_opt = synthesize->add_option(
      "--threads", threads, "worker threads (default PGSYNTH_THREADS or all)");
  auto* route_opt = synthesize->add_option("--route", route, "exact or rates");
  auto* sparse_opt =
      synthesize->add_flag("--sparse", sparse, "omit rows with z = 0");

  CLI::App* audit = app.add_subcommand("audit", "exhaustive privacy audit");
  ModelFlags audit_flags;
  audit_flags.Add(audit);
  int64_t cap = 0;
  std::string curve_path, rows_path;
  auto* cap_opt = audit->add_option("--cap", cap, "enumeration limit");
  auto* curve_opt = audit->add_option("--curve", curve_path,
                                      "ratio-curve CSV (two strata only)");
  auto* rows_opt =
      audit->add_option("--rows", rows_path, "worst output per neighbor pair");

  CLI::App* evaluate = app.add_subcommand("evaluate", "utility metrics");
  std::string truth, rep_dir, std_path, density, group_a, group_b, eval_out;
  std::string outcome_dims;
  double urban_threshold = 280.0;
  auto* truth_opt = evaluate->add_option("--truth", truth, "confidential strata CSV");
  auto* rep_opt =
      evaluate->add_option("--replicates", rep_dir, "synthesize output directory");
  auto* std_opt = evaluate->add_option("--std", std_path, "standard population CSV");
  auto* density_opt = evaluate->add_option("--density", density, "geo density CSV");
  auto* thr_opt = evaluate->add_option("--urban-threshold", urban_threshold,
                                       "urban when density exceeds this");
  auto* ga_opt = evaluate->add_option("--group-a", group_a,
                                      "numerator selector, e.g. race=black");
  auto* gb_opt = evaluate->add_option("--group-b", group_b, "denominator selector");
  auto* eval_out_opt = evaluate->add_option("--out", eval_out, "metrics CSV");
  auto* outcome_opt = evaluate->add_option(
      "--outcome-dims", outcome_dims,
      "comma list of dims that split deaths but not population "
      "(default: cause, when present)");

  CLI::App* fixture = app.add_subcommand("fixture", "generate a test dataset");
  std::string spec_path, preset, fixture_out;
  uint64_t fixture_seed = 0;
  auto* spec_opt = fixture->add_option("--spec", spec_path, "fixture spec JSON");
  auto* preset_opt = fixture->add_option("--preset", preset, "built-in spec: pa");
  auto* fseed_opt = fixture->add_option("--seed", fixture_seed, "generator seed");
  auto* fout_opt = fixture->add_option("--out", fixture_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  auto cfg = LoadConfigFile(config_path);
  if (!cfg.ok()) {
    std::cerr << "error: " << cfg.status().message() << "\n";
    return ExitCode(cfg.status());
  }
  absl::Status status;
  if (calibrate->parsed()) {
    calibrate_flags.Overlay(*cfg);
    status = RunCalibrate(*cfg);
  } else if (synthesize->parsed()) {
    synth_flags.Overlay(*cfg);
    if (replicates_opt->count()) (*cfg)["replicates"] = replicates;
    if (seed_opt->count()) (*cfg)["seed"] = seed;
    if (threads_opt->count()) (*cfg)["threads"] = threads;
    if (route_opt->count()) (*cfg)["route"] = route;
    if (sparse_opt->count()) (*cfg)["sparse"] = sparse;
    status = RunSynthesize(*cfg);
  } else if (audit->parsed()) {
    audit_flags.Overlay(*cfg);
    if (cap_opt->count()) (*cfg)["cap"] = cap;
    if (curve_opt->count()) (*cfg)["curve"] = curve_path;
    if (rows_opt->count()) (*cfg)["rows"] = rows_path;
    status = RunAudit(*cfg);
  } else if (evaluate->parsed()) {
    if (truth_opt->count()) (*cfg)["truth"] = truth;
    if (rep_opt->count()) (*cfg)["replicates_dir"] = rep_dir;
    if (std_opt->count()) (*cfg)["std"] = std_path;
    if (density_opt->count()) (*cfg)["density"] = density;
    if (thr_opt->count()) (*cfg)["urban_threshold"] = urban_threshold;
    if (ga_opt->count()) (*cfg)["group_a"] = group_a;
    if (gb_opt->count()) (*cfg)["group_b"] = group_b;
    if (eval_out_opt->count()) (*cfg)["out"] = eval_out;
    if (outcome_opt->count()) (*cfg)["outcome_dims"] = outcome_dims;
    status = RunEvaluate(*cfg);
  } else if (fixture->parsed()) {
    if (spec_opt->count()) (*cfg)["spec"] = spec_path;
    if (preset_opt->count()) (*cfg)["preset"] = preset;
    if (fseed_opt->count()) (*cfg)["seed"] = fixture_seed;
    if (fout_opt->count()) (*cfg)["out"] = fixture_out;
    status = RunFixture(*cfg);
  }
  if (!status.ok()) {
    std::cerr << "error: " << status.message() << "\n";
    return ExitCode(status);
  }
  return kExitOk;
}

}  // namespace
}  // namespace pgsynth::cli

int main(int argc, char** argv) { return pgsynth::cli::Main(argc, argv); }
