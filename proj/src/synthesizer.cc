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

#include "pgsynth/synthesizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <utility>

#include "absl/strings/str_cat.h"
#include "pgsynth/csv.h"
#include "pgsynth/dist.h"

namespace pgsynth {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

absl::Status ValidateCalibration(const StrataTable& table,
                                 const Calibration& calib) {
  const size_t n = table.size();
  if (calib.a.size() != n || calib.b.size() != n) {
    return absl::InvalidArgumentError("calibration does not match table");
  }
  if (!calib.converged) {
    return absl::FailedPreconditionError("calibration has not converged");
  }
  if (calib.truncated() &&
      (!calib.bounds || calib.bounds->lower.size() != n ||
       calib.bounds->upper.size() != n)) {
    return absl::InvalidArgumentError("truncated calibration lacks bounds");
  }
  return absl::OkStatus();
}

// log n_i + log lambda*_i, or -infinity for strata that cannot receive events.
std::vector<double> LogIntensities(const StrataTable& table,
                                   const Calibration& calib,
                                   std::span<const int64_t> counts,
                                   RandomStream& rng) {
  std::vector<double> out(table.size());
  for (size_t i = 0; i < table.size(); ++i) {
    const double n = static_cast<double>(table.stratum(i).population);
    const double rate = n + calib.b[i];
    const double shape = static_cast<double>(counts[i]) + calib.a[i];
    const double log_lambda = std::isfinite(rate)
                                  ? SampleLogGamma(shape, rate, rng)
                                  : kNegInf;
    out[i] = n > 0.0 ? std::log(n) + log_lambda : kNegInf;
  }
  return out;
}

}  // namespace

absl::StatusOr<Synthesizer> Synthesizer::Create(const StrataTable& table,
                                                const Calibration& calib,
                                                SamplingRoute route,
                                                const TreeOptions& tree_options) {
  if (absl::Status s = ValidateCalibration(table, calib); !s.ok()) return s;
  Synthesizer syn;
  syn.table_ = &table;
  syn.calib_ = &calib;
  syn.route_ = route;
  syn.tree_options_ = tree_options;
  const size_t n = table.size();
  const int64_t y = table.y_total();
  if (calib.truncated()) {
    syn.counts_ = ClampObserved(table, *calib.bounds).counts;
    syn.lower_ = calib.bounds->lower;
    syn.upper_ = calib.bounds->upper;
    int64_t sl = 0, su = 0;
    for (size_t i = 0; i < n; ++i) {
      sl += syn.lower_[i];
      su += syn.upper_[i];
    }
    if (y < sl || y > su) {
      return absl::FailedPreconditionError(absl::StrCat(
          "infeasible bounds: total ", y, " outside [", sl, ", ", su, "]"));
    }
  } else {
    syn.counts_ = table.counts();
    syn.lower_.assign(n, 0);
    syn.upper_.assign(n, y);
  }
  if (route == SamplingRoute::kExact) {
    std::vector<LeafKernel> leaves(n);
    for (size_t i = 0; i < n; ++i) {
      const double pop = static_cast<double>(table.stratum(i).population);
      LeafKernel& k = leaves[i];
      k.family = LeafKernel::Family::kNegBin;
      k.shape = static_cast<double>(syn.counts_[i]) + calib.a[i];
      k.log_ratio = (pop > 0.0 && std::isfinite(calib.b[i]))
                        ? std::log(pop) - std::log(calib.b[i] + 2.0 * pop)
                        : kNegInf;
      k.lo = syn.lower_[i];
      k.hi = syn.upper_[i];
    }
    auto tree = ProductTreeSampler::Build(leaves, y, tree_options);
    if (!tree.ok()) return tree.status();
    syn.tree_ = *std::move(tree);
  }
  return syn;
}

absl::StatusOr<SyntheticReplicate> Synthesizer::Draw(RandomStream& rng) const {
  const size_t n = table_->size();
  SyntheticReplicate rep;
  rep.mode = calib_->mode;
  rep.z.resize(n);
  if (route_ == SamplingRoute::kExact) {
    tree_->Sample(rng, rep.z);
    return rep;
  }
  const std::vector<double> log_w =
      LogIntensities(*table_, *calib_, counts_, rng);
  if (!calib_->truncated()) {
    const double peak = *std::max_element(log_w.begin(), log_w.end());
    std::vector<double> w(n, 0.0);
    if (std::isfinite(peak)) {
      for (size_t i = 0; i < n; ++i) w[i] = std::exp(log_w[i] - peak);
    }
    auto z = SampleMultinomial(table_->y_total(), w, rng);
    if (!z.ok()) return z.status();
    rep.z = *std::move(z);
    return rep;
  }
  std::vector<LeafKernel> leaves(n);
  for (size_t i = 0; i < n; ++i) {
    leaves[i].family = LeafKernel::Family::kPoisson;
    leaves[i].log_ratio = log_w[i];
    leaves[i].lo = lower_[i];
    leaves[i].hi = upper_[i];
  }
  auto tree = ProductTreeSampler::Build(leaves, table_->y_total(), tree_options_);
  if (!tree.ok()) return tree.status();
  tree->Sample(rng, rep.z);
  return rep;
}

absl::StatusOr<SyntheticReplicate> Synthesizer::DrawReplicate(
    uint64_t base_seed, int64_t index) const {
  RandomStream rng =
      RandomStream::ForReplicate(base_seed, static_cast<uint64_t>(index));
  auto rep = Draw(rng);
  if (!rep.ok()) return rep.status();
  rep->replicate_index = index;
  rep->seed = base_seed;
  return rep;
}

absl::StatusOr<std::vector<double>> DrawPosteriorRates(
    const StrataTable& table, const Calibration& calib,
    std::span<const int64_t> counts, RandomStream& rng) {
  if (absl::Status s = ValidateCalibration(table, calib); !s.ok()) return s;
  if (counts.size() != table.size()) {
    return absl::InvalidArgumentError("count vector does not match table");
  }
  std::vector<double> lambda(table.size());
  for (size_t i = 0; i < table.size(); ++i) {
    const double rate =
        static_cast<double>(table.stratum(i).population) + calib.b[i];
    lambda[i] = std::isfinite(rate)
                    ? SampleGamma(static_cast<double>(counts[i]) + calib.a[i],
                                  rate, rng)
                    : 0.0;
  }
  return lambda;
}

absl::StatusOr<SyntheticReplicate> SampleUntruncated(const StrataTable& table,
                                                     const Calibration& calib,
                                                     RandomStream& rng) {
  if (calib.truncated()) {
    return absl::InvalidArgumentError("untruncated sampling needs an untruncated calibration");
  }
  auto syn = Synthesizer::Create(table, calib);
  if (!syn.ok()) return syn.status();
  return syn->Draw(rng);
}

absl::StatusOr<SyntheticReplicate> SampleTruncated(const StrataTable& table,
                                                   const Calibration& calib,
                                                   RandomStream& rng) {
  if (!calib.truncated()) {
    return absl::InvalidArgumentError("truncated sampling needs a truncated calibration");
  }
  auto syn = Synthesizer::Create(table, calib);
  if (!syn.ok()) return syn.status();
  return syn->Draw(rng);
}

namespace {

// Draws replicates [first, first + out.size()) into out.
absl::Status DrawRange(const Synthesizer& syn, uint64_t base_seed,
                       int64_t first, int threads,
                       std::span<SyntheticReplicate> out) {
  const int64_t count = static_cast<int64_t>(out.size());
  if (count == 0) return absl::OkStatus();
  threads = static_cast<int>(std::clamp<int64_t>(threads, 1, count));
  std::vector<absl::Status> status(static_cast<size_t>(threads));
  auto work = [&](int t) {
    for (int64_t r = t; r < count; r += threads) {
      auto rep = syn.DrawReplicate(base_seed, first + r);
      if (!rep.ok()) {
        status[t] = rep.status();
        return;
      }
      out[static_cast<size_t>(r)] = *std::move(rep);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (std::thread& th : pool) th.join();
  }
  for (const absl::Status& s : status) {
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<std::vector<SyntheticReplicate>> RunReplicates(
    const StrataTable& table, const Calibration& calib, int64_t count,
    uint64_t base_seed, const RunOptions& options) {
  if (count < 0) return absl::InvalidArgumentError("negative replicate count");
  std::vector<SyntheticReplicate> out(static_cast<size_t>(count));
  if (count == 0) return out;
  auto syn = Synthesizer::Create(table, calib, options.route);
  if (!syn.ok()) return syn.status();
  absl::Status s = DrawRange(*syn, base_seed, 0, options.threads, out);
  if (!s.ok()) return s;
  return out;
}

absl::Status ForEachReplicate(
    const StrataTable& table, const Calibration& calib, int64_t count,
    uint64_t base_seed, const RunOptions& options, int64_t batch,
    const std::function<absl::Status(const SyntheticReplicate&)>& sink) {
  if (count < 0) return absl::InvalidArgumentError("negative replicate count");
  if (batch < 1) return absl::InvalidArgumentError("batch must be positive");
  if (count == 0) return absl::OkStatus();
  auto syn = Synthesizer::Create(table, calib, options.route);
  if (!syn.ok()) return syn.status();
  std::vector<SyntheticReplicate> buf;
  for (int64_t first = 0; first < count; first += batch) {
    buf.assign(static_cast<size_t>(std::min(batch, count - first)), {});
    absl::Status s = DrawRange(*syn, base_seed, first, options.threads, buf);
    if (!s.ok()) return s;
    for (const SyntheticReplicate& rep : buf) {
      s = sink(rep);
      if (!s.ok()) return s;
    }
  }
  return absl::OkStatus();
}

absl::Status CheckReplicate(const SyntheticReplicate& rep,
                            const StrataTable& table,
                            const Calibration& calib) {
  if (rep.z.size() != table.size()) {
    return absl::InternalError("replicate size mismatch");
  }
  int64_t sum = 0;
  for (size_t i = 0; i < rep.z.size(); ++i) {
    if (rep.z[i] < 0) {
      return absl::InternalError(absl::StrCat("negative count in replicate ",
                                              rep.replicate_index));
    }
    if (calib.truncated() && (rep.z[i] < calib.bounds->lower[i] ||
                              rep.z[i] > calib.bounds->upper[i])) {
      return absl::InternalError(
          absl::StrCat("replicate ", rep.replicate_index,
                       " leaves the box at stratum ", table.KeyString(i)));
    }
    sum += rep.z[i];
  }
  if (sum != table.y_total()) {
    return absl::InternalError(absl::StrCat("replicate ", rep.replicate_index,
                                            " sums to ", sum, ", expected ",
                                            table.y_total()));
  }
  return absl::OkStatus();
}

void WriteReplicateHeader(const StrataTable& table, std::ostream& out) {
  std::vector<std::string> header = {"replicate"};
  header.insert(header.end(), table.dims().begin(), table.dims().end());
  header.push_back("z");
  WriteCsvRecord(out, header);
}

void WriteReplicateRows(const StrataTable& table, const SyntheticReplicate& rep,
                        std::ostream& out, bool skip_zeros) {
  std::vector<std::string> row;
  for (size_t i = 0; i < table.size(); ++i) {
    if (skip_zeros && rep.z[i] == 0) continue;
    row.clear();
    row.push_back(std::to_string(rep.replicate_index));
    const auto& key = table.stratum(i).key;
    row.insert(row.end(), key.begin(), key.end());
    row.push_back(std::to_string(rep.z[i]));
    WriteCsvRecord(out, row);
  }
}

}  // namespace pgsynth
