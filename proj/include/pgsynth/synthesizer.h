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

#ifndef PGSYNTH_SYNTHESIZER_H_
#define PGSYNTH_SYNTHESIZER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "pgsynth/calibration.h"
#include "pgsynth/product_tree.h"
#include "pgsynth/random.h"
#include "pgsynth/strata.h"

namespace pgsynth {

struct SyntheticReplicate {
  std::vector<int64_t> z;
  int64_t replicate_index = 0;
  uint64_t seed = 0;
  Mode mode = Mode::kUntruncated;
};

// How a replicate is drawn.
//   kExact: the mechanism law itself. With q_i = n_i / (b_i + 2 n_i) and
//     clamped counts y~, z has probability proportional to
//       prod_i Gamma(z_i + y~_i + a_i) / z_i! * q_i^z_i
//     on {sum z = y, L <= z <= U}, which is the law the privacy audit checks.
//   kViaRates: draw lambda*_i ~ Gamma(y~_i + a_i, n_i + b_i), then
//     z ~ Multinomial(y, pi*), pi*_i proportional to n_i lambda*_i,
//     restricted to the box. This agrees with kExact only when b_i / n_i is
//     the same for every stratum.
enum class SamplingRoute { kExact, kViaRates };

// Draws replicates for a fixed (table, calibration). The exact route builds
// its sampling tree once; every draw reuses it. Holds references to the table
// and calibration, which must outlive it.
class Synthesizer {
 public:
  static absl::StatusOr<Synthesizer> Create(
      const StrataTable& table, const Calibration& calib,
      SamplingRoute route = SamplingRoute::kExact,
      const TreeOptions& tree_options = {});

  absl::StatusOr<SyntheticReplicate> Draw(RandomStream& rng) const;

  // Replicate `index` of a run seeded with base_seed.
  absl::StatusOr<SyntheticReplicate> DrawReplicate(uint64_t base_seed,
                                                   int64_t index) const;

  // Counts entering the posterior: clamped in truncated mode.
  const std::vector<int64_t>& posterior_counts() const { return counts_; }
  const ProductTreeSampler* tree() const {
    return tree_ ? &*tree_ : nullptr;
  }

 private:
  Synthesizer() = default;

  const StrataTable* table_ = nullptr;
  const Calibration* calib_ = nullptr;
  SamplingRoute route_ = SamplingRoute::kExact;
  TreeOptions tree_options_;
  std::vector<int64_t> counts_;
  std::vector<int64_t> lower_, upper_;
  std::optional<ProductTreeSampler> tree_;
};

// Independent lambda*_i ~ Gamma(counts_i + a_i, n_i + b_i).
absl::StatusOr<std::vector<double>> DrawPosteriorRates(
    const StrataTable& table, const Calibration& calib,
    std::span<const int64_t> counts, RandomStream& rng);

// One exact draw of the untruncated (or Dirichlet-equivalent) mechanism.
absl::StatusOr<SyntheticReplicate> SampleUntruncated(const StrataTable& table,
                                                     const Calibration& calib,
                                                     RandomStream& rng);

// One exact draw of the truncated mechanism, with the box from calib.bounds.
absl::StatusOr<SyntheticReplicate> SampleTruncated(const StrataTable& table,
                                                   const Calibration& calib,
                                                   RandomStream& rng);

struct RunOptions {
  int threads = 1;
  SamplingRoute route = SamplingRoute::kExact;
};

// Replicates 0..count-1 with per-replicate streams derived from base_seed.
// Replicate r does not depend on count or the thread layout.
absl::StatusOr<std::vector<SyntheticReplicate>> RunReplicates(
    const StrataTable& table, const Calibration& calib, int64_t count,
    uint64_t base_seed, const RunOptions& options = {});

// Streams replicates 0..count-1 to sink in index order, drawing `batch`
// at a time in parallel. Draws are identical to RunReplicates. Stops at the
// first error from a draw or from the sink.
absl::Status ForEachReplicate(
    const StrataTable& table, const Calibration& calib, int64_t count,
    uint64_t base_seed, const RunOptions& options, int64_t batch,
    const std::function<absl::Status(const SyntheticReplicate&)>& sink);

// Sum and (truncated mode) box invariants.
absl::Status CheckReplicate(const SyntheticReplicate& rep,
                            const StrataTable& table, const Calibration& calib);

// Rows of replicate,dim_1,...,dim_k,z. WriteReplicateHeader emits the header.
// With skip_zeros, strata with z = 0 are omitted.
void WriteReplicateHeader(const StrataTable& table, std::ostream& out);
void WriteReplicateRows(const StrataTable& table, const SyntheticReplicate& rep,
                        std::ostream& out, bool skip_zeros = false);

}  // namespace pgsynth

#endif  // PGSYNTH_SYNTHESIZER_H_
