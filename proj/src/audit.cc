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

#include "pgsynth/audit.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "pgsynth/csv.h"
#include "pgsynth/dist.h"
#include "pgsynth/random.h"

namespace pgsynth {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct MechanismView {
  std::vector<int64_t> lower, upper;
  std::vector<double> log_q;  // log n_i / (b_i + 2 n_i)
};

absl::StatusOr<MechanismView> View(const StrataTable& table,
                                   const Calibration& calib) {
  const size_t n = table.size();
  if (calib.a.size() != n || calib.b.size() != n) {
    return absl::InvalidArgumentError("calibration does not match table");
  }
  MechanismView v;
  if (calib.truncated()) {
    if (!calib.bounds) {
      return absl::InvalidArgumentError("truncated calibration lacks bounds");
    }
    v.lower = calib.bounds->lower;
    v.upper = calib.bounds->upper;
  } else {
    v.lower.assign(n, 0);
    v.upper.assign(n, table.y_total());
  }
  v.log_q.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double pop = static_cast<double>(table.stratum(i).population);
    v.log_q[i] = (pop > 0.0 && std::isfinite(calib.b[i]))
                     ? std::log(pop) - std::log(calib.b[i] + 2.0 * pop)
                     : kNegInf;
  }
  return v;
}

std::vector<int64_t> MechanismCounts(std::span<const int64_t> counts,
                                     const Calibration& calib) {
  std::vector<int64_t> out(counts.begin(), counts.end());
  if (calib.truncated()) {
    for (size_t i = 0; i < out.size(); ++i) {
      out[i] = std::clamp(out[i], calib.bounds->lower[i], calib.bounds->upper[i]);
    }
  }
  return out;
}

// Number of integer vectors with the given total inside the box, saturating
// at cap + 1.
absl::StatusOr<int64_t> CountCompositions(int64_t total,
                                          std::span<const int64_t> lower,
                                          std::span<const int64_t> upper,
                                          int64_t cap) {
  const double work = static_cast<double>(lower.size()) *
                      static_cast<double>(total + 1) *
                      static_cast<double>(total + 1);
  if (work > 4e9) {
    return absl::ResourceExhaustedError("instance too large to enumerate");
  }
  std::vector<int64_t> ways(static_cast<size_t>(total + 1), 0), next;
  ways[0] = 1;
  for (size_t i = 0; i < lower.size(); ++i) {
    next.assign(ways.size(), 0);
    for (int64_t s = 0; s <= total; ++s) {
      if (ways[s] == 0) continue;
      for (int64_t k = lower[i]; k <= upper[i] && s + k <= total; ++k) {
        next[s + k] = std::min(cap + 1, next[s + k] + ways[s]);
      }
    }
    ways.swap(next);
  }
  return ways[total];
}

void EnumerateCompositions(
    int64_t total, std::span<const int64_t> lower,
    std::span<const int64_t> upper,
    const std::function<void(std::span<const int64_t>)>& visit) {
  const size_t n = lower.size();
  std::vector<int64_t> lo_suffix(n + 1, 0), hi_suffix(n + 1, 0);
  for (size_t i = n; i-- > 0;) {
    lo_suffix[i] = lo_suffix[i + 1] + lower[i];
    hi_suffix[i] = hi_suffix[i + 1] + upper[i];
  }
  std::vector<int64_t> z(n);
  std::function<void(size_t, int64_t)> rec = [&](size_t i, int64_t left) {
    if (i + 1 == n) {
      if (left >= lower[i] && left <= upper[i]) {
        z[i] = left;
        visit(z);
      }
      return;
    }
    const int64_t from = std::max(lower[i], left - hi_suffix[i + 1]);
    const int64_t to = std::min(upper[i], left - lo_suffix[i + 1]);
    for (int64_t k = from; k <= to; ++k) {
      z[i] = k;
      rec(i + 1, left - k);
    }
  };
  if (n > 0) rec(0, total);
}

absl::StatusOr<std::vector<int64_t>> OutcomeSet(int64_t total,
                                                std::span<const int64_t> lower,
                                                std::span<const int64_t> upper,
                                                int64_t cap) {
  auto count = CountCompositions(total, lower, upper, cap);
  if (!count.ok()) return count.status();
  if (*count > cap) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "too large to enumerate: more than ", cap, " outcomes"));
  }
  if (*count == 0) {
    return absl::FailedPreconditionError("infeasible: no outcome fits the box");
  }
  std::vector<int64_t> flat;
  flat.reserve(static_cast<size_t>(*count) * lower.size());
  EnumerateCompositions(total, lower, upper, [&](std::span<const int64_t> z) {
    flat.insert(flat.end(), z.begin(), z.end());
  });
  return flat;
}

// Normalized log pmf of every outcome in `flat` given mechanism counts.
std::vector<double> JointLogPmf(const std::vector<int64_t>& flat,
                                std::span<const int64_t> counts,
                                const Calibration& calib,
                                const MechanismView& v) {
  const size_t n = counts.size();
  // Per-stratum kernel values over each stratum's box.
  std::vector<std::vector<double>> kernel(n);
  for (size_t i = 0; i < n; ++i) {
    const double shape = static_cast<double>(counts[i]) + calib.a[i];
    kernel[i].resize(static_cast<size_t>(v.upper[i] - v.lower[i] + 1));
    for (int64_t z = v.lower[i]; z <= v.upper[i]; ++z) {
      kernel[i][z - v.lower[i]] = LogNegBinKernel(z, shape, v.log_q[i]);
    }
  }
  const size_t m = flat.size() / n;
  std::vector<double> lw(m);
  for (size_t k = 0; k < m; ++k) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
      s += kernel[i][flat[k * n + i] - v.lower[i]];
    }
    lw[k] = s;
  }
  const double norm = LogSumExp(lw);
  for (double& x : lw) x -= norm;
  return lw;
}

std::string JoinCounts(std::span<const int64_t> v) {
  return absl::StrJoin(v, ";");
}

long double LogGammaL(long double x) { return std::lgamma(x); }

}  // namespace

double Pmf::LogProb(int64_t z) const {
  if (z < lo || z >= lo + static_cast<int64_t>(log_p.size())) return kNegInf;
  return log_p[static_cast<size_t>(z - lo)];
}

absl::StatusOr<Pmf> ExactBivariatePmf(size_t i, std::span<const int64_t> counts,
                                      const StrataTable& table,
                                      const Calibration& calib) {
  const size_t n = table.size();
  if (i >= n || counts.size() != n) {
    return absl::InvalidArgumentError("bivariate pmf: index or size mismatch");
  }
  auto v = View(table, calib);
  if (!v.ok()) return v.status();
  const std::vector<int64_t> y = MechanismCounts(counts, calib);
  int64_t y_total = 0;
  for (int64_t c : counts) y_total += c;
  long double shape_rest = 0.0L, b_rest = 0.0L;
  int64_t n_rest = 0;
  for (size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    shape_rest += static_cast<long double>(y[j]) + calib.a[j];
    b_rest += calib.b[j];
    n_rest += table.stratum(j).population;
  }
  const double n_i = static_cast<double>(table.stratum(i).population);
  if (n_i == 0.0 || n_rest == 0) {
    return absl::FailedPreconditionError("bivariate pmf: degenerate stratum");
  }
  const double r = static_cast<double>(b_rest / n_rest + 2.0L) /
                   (calib.b[i] / n_i + 2.0);
  const double log_r = std::log(r);
  const double shape_i = static_cast<double>(y[i]) + calib.a[i];
  const double shape_o = static_cast<double>(shape_rest);
  const int64_t lo = calib.truncated() ? v->lower[i] : 0;
  const int64_t hi = std::min(calib.truncated() ? v->upper[i] : y_total, y_total);
  if (lo > hi) {
    return absl::FailedPreconditionError("bivariate pmf: empty support");
  }
  Pmf pmf;
  pmf.lo = lo;
  pmf.log_p.resize(static_cast<size_t>(hi - lo + 1));
  for (int64_t z = lo; z <= hi; ++z) {
    pmf.log_p[z - lo] = LogNegBinKernel(z, shape_i, log_r) +
                        LogNegBinKernel(y_total - z, shape_o, 0.0);
  }
  const double norm = LogSumExp(pmf.log_p);
  for (double& x : pmf.log_p) x -= norm;
  return pmf;
}

absl::StatusOr<JointPmf> ExactJointPmf(std::span<const int64_t> counts,
                                       const StrataTable& table,
                                       const Calibration& calib,
                                       const EnumerationOptions& options) {
  if (counts.size() != table.size()) {
    return absl::InvalidArgumentError("joint pmf: size mismatch");
  }
  auto v = View(table, calib);
  if (!v.ok()) return v.status();
  int64_t y_total = 0;
  for (int64_t c : counts) y_total += c;
  auto flat = OutcomeSet(y_total, v->lower, v->upper, options.cap);
  if (!flat.ok()) return flat.status();
  JointPmf pmf;
  pmf.num_strata = table.size();
  pmf.log_p = JointLogPmf(*flat, MechanismCounts(counts, calib), calib, *v);
  pmf.outcomes = *std::move(flat);
  return pmf;
}

absl::StatusOr<AuditReport> Audit(const StrataTable& table,
                                  const Calibration& calib, double epsilon,
                                  const AuditOptions& options) {
  auto v = View(table, calib);
  if (!v.ok()) return v.status();
  const size_t n = table.size();
  const int64_t y_total = table.y_total();
  const int64_t cap = options.enumeration.cap;

  std::vector<int64_t> free_lo(n, 0), free_hi(n, y_total);
  auto num_datasets = CountCompositions(y_total, free_lo, free_hi, cap);
  if (!num_datasets.ok()) return num_datasets.status();
  if (*num_datasets > cap) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "too large to enumerate: more than ", cap,
        " datasets; reduce the total or the number of strata"));
  }
  auto flat = OutcomeSet(y_total, v->lower, v->upper, cap);
  if (!flat.ok()) return flat.status();
  const size_t m = flat->size() / n;

  std::map<std::vector<int64_t>, std::vector<double>> cache;
  auto log_pmf = [&](const std::vector<int64_t>& raw) -> const std::vector<double>& {
    std::vector<int64_t> key = MechanismCounts(raw, calib);
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, JointLogPmf(*flat, key, calib, *v)).first;
    }
    return it->second;
  };

  AuditReport report;
  report.epsilon_target = epsilon;
  report.num_strata = n;
  report.y_total = y_total;
  report.num_datasets = *num_datasets;
  report.num_outputs = static_cast<int64_t>(m);
  double worst = -1.0;
  EnumerateCompositions(y_total, free_lo, free_hi, [&](std::span<const int64_t> ys) {
    const std::vector<int64_t> y(ys.begin(), ys.end());
    const std::vector<double> py = log_pmf(y);
    for (size_t from = 0; from < n; ++from) {
      if (y[from] == 0) continue;
      for (size_t to = 0; to < n; ++to) {
        if (to == from) continue;
        std::vector<int64_t> x = y;
        --x[from];
        ++x[to];
        const std::vector<double>& px = log_pmf(x);
        double pair_worst = -1.0;
        size_t pair_k = 0;
        for (size_t k = 0; k < m; ++k) {
          const double d = std::abs(py[k] - px[k]);
          if (d > pair_worst) {
            pair_worst = d;
            pair_k = k;
          }
        }
        if (pair_worst > worst) {
          worst = pair_worst;
          report.argmax_pair = {y, x, from, to};
          report.argmax_z.assign(flat->begin() + pair_k * n,
                                 flat->begin() + (pair_k + 1) * n);
        }
        if (options.collect_rows) {
          report.rows.push_back(
              {y, x,
               std::vector<int64_t>(flat->begin() + pair_k * n,
                                    flat->begin() + (pair_k + 1) * n),
               py[pair_k] - px[pair_k]});
        }
      }
    }
  });
  report.max_abs_log_ratio = std::max(worst, 0.0);
  report.pass = report.max_abs_log_ratio <= epsilon + 1e-9;
  return report;
}

absl::StatusOr<std::vector<CurvePoint>> RatioCurve(const StrataTable& table,
                                                   const Calibration& calib) {
  if (table.size() != 2) {
    return absl::InvalidArgumentError("ratio curve needs exactly two strata");
  }
  auto v = View(table, calib);
  if (!v.ok()) return v.status();
  const int64_t y_total = table.y_total();
  auto flat = OutcomeSet(y_total, v->lower, v->upper, EnumerationOptions{}.cap);
  if (!flat.ok()) return flat.status();
  const size_t m = flat->size() / 2;
  std::vector<CurvePoint> curve(m);
  for (size_t k = 0; k < m; ++k) {
    curve[k].z1 = (*flat)[2 * k];
    curve[k].log_ratio = kNegInf;
  }
  for (int64_t y1 = 1; y1 <= y_total; ++y1) {
    const std::vector<int64_t> y = {y1, y_total - y1};
    const std::vector<int64_t> x = {y1 - 1, y_total - y1 + 1};
    const std::vector<double> py =
        JointLogPmf(*flat, MechanismCounts(y, calib), calib, *v);
    const std::vector<double> px =
        JointLogPmf(*flat, MechanismCounts(x, calib), calib, *v);
    for (size_t k = 0; k < m; ++k) {
      const double d = py[k] - px[k];
      if (d > curve[k].log_ratio) {
        curve[k].log_ratio = d;
        curve[k].y1 = y1;
      }
    }
  }
  for (CurvePoint& p : curve) p.ratio = std::exp(p.log_ratio);
  return curve;
}

absl::StatusOr<std::vector<TransferBoundRow>> TransferBoundCheck(
    std::span<const TransferBoundConfig> configs) {
  std::vector<TransferBoundRow> rows;
  rows.reserve(configs.size());
  for (const TransferBoundConfig& c : configs) {
    if (!(0 <= c.lower && c.lower <= c.upper && c.upper <= c.y_total &&
          c.y_i >= 1 && c.y_i <= c.y_total && c.a_i > 0.0 && c.a_not_i > 0.0 &&
          c.r > 0.0)) {
      return absl::InvalidArgumentError("transfer bound check: invalid configuration");
    }
    const long double Y = c.y_total, ai = c.a_i, A = c.a_not_i;
    const long double yi = c.y_i, yo = c.y_total - c.y_i;
    const long double log_r = std::log(static_cast<long double>(c.r));
    // log terms of C(y) and C(x), and the termwise ratio t_z.
    std::vector<long double> ly, lx, t;
    for (int64_t z = c.lower; z <= c.upper; ++z) {
      const long double zl = z;
      const long double common =
          -LogGammaL(zl + 1) - LogGammaL(Y - zl + 1) + zl * log_r;
      ly.push_back(common + LogGammaL(zl + yi + ai) +
                   LogGammaL(Y - zl + yo + A));
      lx.push_back(common + LogGammaL(zl + yi - 1 + ai) +
                   LogGammaL(Y - zl + yo + 1 + A));
      t.push_back((Y - zl + yo + A) / (zl + yi - 1 + ai));
    }
    auto lse = [](const std::vector<long double>& v) {
      const long double mx = *std::max_element(v.begin(), v.end());
      long double s = 0.0L;
      for (long double x : v) s += std::exp(x - mx);
      return mx + std::log(s);
    };
    const long double log_cy = lse(ly);
    long double gap = 0.0L;
    for (size_t k = 0; k < t.size(); ++k) {
      gap += std::exp(ly[k] - log_cy) * (t[0] - t[k]);
    }
    TransferBoundRow row;
    row.config = c;
    row.ratio = static_cast<double>(std::exp(lse(lx) - log_cy));
    row.bound = static_cast<double>(t[0]);
    row.gap = static_cast<double>(gap);
    row.strict = gap > 0.0L;
    rows.push_back(row);
  }
  return rows;
}

std::vector<TransferBoundConfig> RandomTransferBoundConfigs(size_t count,
                                                  int64_t max_total,
                                                  uint64_t seed) {
  RandomStream rng(seed);
  auto uniform_int = [&](int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(rng.Uniform() * static_cast<double>(hi - lo + 1));
  };
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + rng.Uniform() * (std::log(hi) - std::log(lo)));
  };
  std::vector<TransferBoundConfig> out(count);
  for (TransferBoundConfig& c : out) {
    c.y_total = uniform_int(2, max_total);
    int64_t l = uniform_int(0, c.y_total);
    int64_t u = uniform_int(0, c.y_total);
    if (l == u) u = (u == c.y_total) ? u - 1 : u + 1;
    c.lower = std::min(l, u);
    c.upper = std::max(l, u);
    c.y_i = uniform_int(1, c.y_total);
    c.a_i = log_uniform(1e-3, 1e3);
    c.a_not_i = log_uniform(1e-3, 1e3);
    c.r = log_uniform(1e-2, 1e2);
  }
  return out;
}

double PriorPredictiveLogPmf(const PriorSpec& prior, const StrataTable& table,
                             std::span<const int64_t> z) {
  const std::vector<double> mu = prior.ExpectedCounts(table);
  long double total_mu = 0.0L;
  int64_t total_z = 0;
  for (size_t i = 0; i < mu.size(); ++i) {
    total_mu += mu[i];
    total_z += z[i];
  }
  double lp = LogGamma(static_cast<double>(total_z) + 1.0);
  for (size_t i = 0; i < mu.size(); ++i) {
    if (z[i] == 0) continue;
    const double log_pi = std::log(mu[i]) - std::log(static_cast<double>(total_mu));
    lp += static_cast<double>(z[i]) * log_pi - LogGamma(z[i] + 1.0);
  }
  return lp;
}

double DirichletMultinomialLogPmf(std::span<const int64_t> counts,
                                  std::span<const double> alpha,
                                  std::span<const int64_t> z) {
  double post_total = 0.0, z_total = 0.0, lp = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    const double post = static_cast<double>(counts[i]) + alpha[i];
    post_total += post;
    z_total += static_cast<double>(z[i]);
    lp += LogGamma(z[i] + post) - LogGamma(post) - LogGamma(z[i] + 1.0);
  }
  return lp + LogGamma(z_total + 1.0) + LogGamma(post_total) -
         LogGamma(z_total + post_total);
}

nlohmann::json AuditReportToJson(const AuditReport& report) {
  nlohmann::json j;
  j["epsilon_target"] = report.epsilon_target;
  j["max_abs_log_ratio"] = report.max_abs_log_ratio;
  j["pass"] = report.pass;
  j["instance_size"] = {{"I", report.num_strata}, {"y_total", report.y_total}};
  j["datasets"] = report.num_datasets;
  j["outputs"] = report.num_outputs;
  j["argmax"] = {{"y", report.argmax_pair.y},
                 {"x", report.argmax_pair.x},
                 {"moved_from", report.argmax_pair.moved_from},
                 {"moved_to", report.argmax_pair.moved_to},
                 {"z", report.argmax_z}};
  return j;
}

void WriteAuditRowsCsv(const AuditReport& report, std::ostream& out) {
  WriteCsvRecord(out, {"y", "x", "z", "log_ratio"});
  for (const AuditRow& r : report.rows) {
    WriteCsvRecord(out, {JoinCounts(r.y), JoinCounts(r.x), JoinCounts(r.z),
                         FormatDouble(r.log_ratio)});
  }
}

void WriteCurveCsv(std::span<const CurvePoint> curve, int64_t y_total,
                   std::ostream& out) {
  WriteCsvRecord(out, {"z", "ratio", "log_ratio", "y"});
  for (const CurvePoint& p : curve) {
    WriteCsvRecord(out, {std::to_string(p.z1), FormatDouble(p.ratio),
                         FormatDouble(p.log_ratio),
                         absl::StrCat(p.y1, ";", y_total - p.y1)});
  }
}

}  // namespace pgsynth
