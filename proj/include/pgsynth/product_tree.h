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

#ifndef PGSYNTH_PRODUCT_TREE_H_
#define PGSYNTH_PRODUCT_TREE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "pgsynth/random.h"
#include "pgsynth/simd.h"

namespace pgsynth {

// Unnormalized weight of one coordinate on the integer box [lo, hi]:
//   negative binomial: log w(z) = log Gamma(z + shape) - log z! + z*log_ratio
//   Poisson:           log w(z) = -log z! + z*log_ratio
// log_ratio = -infinity puts all mass at zero.
struct LeafKernel {
  enum class Family { kNegBin, kPoisson };

  Family family = Family::kNegBin;
  double shape = 1.0;
  double log_ratio = 0.0;
  int64_t lo = 0;
  int64_t hi = 0;

  double LogWeight(int64_t z) const;
};

struct TreeOptions {
  // Node entries further than this (natural log) below the node's peak are
  // dropped. Set to -infinity to keep everything representable.
  double trim_log = -69.0;
  // Null selects simd::ActiveKernels().
  const simd::KernelTable* kernels = nullptr;
};

// Exact sampler for a vector of independent coordinates z_i ~ w_i
// conditioned on sum_i z_i = total.
//
// Coordinates are combined pairwise in a balanced tree: every internal node
// stores the convolution of its children's weights, restricted to the sums
// that can still reach the total. A draw descends from the root, splitting
// each node's sum between its children in proportion to
// left[j] * right[s - j]. All weights are first tilted by exp(theta * z),
// which leaves the conditional law unchanged but centers every node near
// the sums that matter, so linear-scale doubles suffice.
class ProductTreeSampler {
 public:
  static absl::StatusOr<ProductTreeSampler> Build(
      std::span<const LeafKernel> leaves, int64_t total,
      const TreeOptions& options = {});

  // Writes one draw into out (size = number of leaves). Thread-safe.
  void Sample(RandomStream& rng, std::span<int64_t> out) const;

  size_t num_leaves() const { return num_leaves_; }
  int64_t total() const { return total_; }
  double tilt() const { return tilt_; }
  // True when the build had to be repeated without trimming.
  bool untrimmed_fallback() const { return untrimmed_fallback_; }
  // Sum of node widths, a proxy for build and sampling cost.
  size_t stored_entries() const;

 private:
  struct Node {
    int64_t lo = 0;
    std::vector<double> w;  // w[k] is the weight of sum lo + k; peak = 1
    int32_t left = -1;
    int32_t right = -1;
    int32_t leaf = -1;  // coordinate index for leaves
    int64_t hi() const { return lo + static_cast<int64_t>(w.size()) - 1; }
  };

  ProductTreeSampler() = default;

  absl::Status BuildTree(std::span<const LeafKernel> leaves, double trim_log);
  int32_t BuildNode(size_t begin, size_t end, double trim_log,
                    std::vector<double>& scratch, absl::Status& status);
  void SampleNode(int32_t node, int64_t sum, RandomStream& rng,
                  std::span<int64_t> out) const;

  size_t num_leaves_ = 0;
  int64_t total_ = 0;
  double tilt_ = 0.0;
  bool untrimmed_fallback_ = false;
  const simd::KernelTable* kernels_ = nullptr;
  std::vector<int64_t> fixed_;  // nonempty when the draw is deterministic
  std::vector<Node> nodes_;
  int32_t root_ = -1;
  // Prefix sums of leaf support bounds, for feasibility windows.
  std::vector<int64_t> lo_prefix_, hi_prefix_;
};

}  // namespace pgsynth

#endif  // PGSYNTH_PRODUCT_TREE_H_
