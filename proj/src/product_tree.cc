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

#include "pgsynth/product_tree.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "pgsynth/dist.h"

namespace pgsynth {
namespace {

// Below this, exp() underflows to zero in double precision.
constexpr double kUnderflowLog = -745.0;
// Leaves up to this width keep their exact base weights for the tilt search.
constexpr int64_t kExactMeanWidth = 512;
constexpr int64_t kMaxLeafWidth = int64_t{1} << 27;
constexpr int kTiltIterations = 200;

struct TiltModel {
  std::vector<size_t> offset;  // into base; SIZE_MAX for closed-form leaves
  std::vector<double> base;    // untilted log weights of narrow leaves
};

double ClosedFormMean(const LeafKernel& k, double theta) {
  const double kappa = k.log_ratio + theta;
  double m;
  if (k.family == LeafKernel::Family::kPoisson) {
    m = std::exp(kappa);
  } else {
    m = kappa < 0.0 ? k.shape / std::expm1(-kappa)
                    : std::numeric_limits<double>::infinity();
  }
  return std::clamp(m, static_cast<double>(k.lo), static_cast<double>(k.hi));
}

double ExactMean(const LeafKernel& k, const double* base, double theta) {
  const int64_t width = k.hi - k.lo + 1;
  double peak = -std::numeric_limits<double>::infinity();
  for (int64_t j = 0; j < width; ++j) {
    peak = std::max(peak, base[j] + theta * static_cast<double>(j));
  }
  double s0 = 0.0, s1 = 0.0;
  for (int64_t j = 0; j < width; ++j) {
    const double w = std::exp(base[j] + theta * static_cast<double>(j) - peak);
    s0 += w;
    s1 += w * static_cast<double>(j);
  }
  return static_cast<double>(k.lo) + s1 / s0;
}

double TotalMean(std::span<const LeafKernel> leaves, const TiltModel& model,
                 double theta) {
  double total = 0.0;
  for (size_t i = 0; i < leaves.size(); ++i) {
    const LeafKernel& k = leaves[i];
    if (k.lo == k.hi) {
      total += static_cast<double>(k.lo);
    } else if (model.offset[i] != SIZE_MAX) {
      total += ExactMean(k, &model.base[model.offset[i]], theta);
    } else {
      total += ClosedFormMean(k, theta);
    }
  }
  return total;
}

// Exponential tilt that puts the unconditioned mean of the sum at the
// target. Any value gives an exact sampler; this one keeps the tree compact.
double SolveTilt(std::span<const LeafKernel> leaves, int64_t total) {
  TiltModel model;
  model.offset.assign(leaves.size(), SIZE_MAX);
  for (size_t i = 0; i < leaves.size(); ++i) {
    const LeafKernel& k = leaves[i];
    if (k.lo == k.hi || k.hi - k.lo + 1 > kExactMeanWidth) continue;
    model.offset[i] = model.base.size();
    for (int64_t z = k.lo; z <= k.hi; ++z) {
      model.base.push_back(k.LogWeight(z));
    }
  }
  const double target = static_cast<double>(total);
  auto f = [&](double theta) {
    return TotalMean(leaves, model, theta) - target;
  };
  double lo = 0.0, hi = 0.0;
  if (f(0.0) < 0.0) {
    hi = 1.0;
    for (int i = 0; i < 64 && f(hi) < 0.0; ++i) {
      lo = hi;
      hi *= 2.0;
    }
  } else {
    lo = -1.0;
    for (int i = 0; i < 64 && f(lo) > 0.0; ++i) {
      hi = lo;
      lo *= 2.0;
    }
  }
  for (int i = 0; i < kTiltIterations && hi - lo > 1e-9; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Largest-weight point of a leaf whose tilted log weight is unimodal.
int64_t UnimodalPeak(const LeafKernel& k, double theta) {
  const double kappa = k.log_ratio + theta;
  double guess;
  if (k.family == LeafKernel::Family::kPoisson) {
    guess = std::floor(std::exp(kappa));
  } else if (kappa >= 0.0) {
    guess = static_cast<double>(k.hi);
  } else if (k.shape < 1.0) {
    guess = static_cast<double>(k.lo);
  } else {
    const double zstar = (k.shape * std::exp(kappa) - 1.0) / -std::expm1(kappa);
    guess = zstar < 0.0 ? 0.0 : std::floor(zstar) + 1.0;
  }
  int64_t mode = static_cast<int64_t>(std::clamp(
      guess, static_cast<double>(k.lo), static_cast<double>(k.hi)));
  auto lw = [&](int64_t z) {
    return k.LogWeight(z) + theta * static_cast<double>(z);
  };
  while (mode < k.hi && lw(mode + 1) > lw(mode)) ++mode;
  while (mode > k.lo && lw(mode - 1) > lw(mode)) --mode;
  return mode;
}

absl::Status MaterializeLeaf(const LeafKernel& k, double theta,
                             double trim_log, int64_t& lo_out,
                             std::vector<double>& w) {
  auto lw = [&](int64_t z) {
    return k.LogWeight(z) + theta * static_cast<double>(z);
  };
  const int64_t width = k.hi - k.lo + 1;
  const bool log_convex = k.family == LeafKernel::Family::kNegBin &&
                          k.shape < 1.0 && k.log_ratio + theta >= 0.0;
  std::vector<double> logs;
  int64_t first;
  if (width <= kExactMeanWidth || log_convex) {
    if (width > kMaxLeafWidth) {
      return absl::ResourceExhaustedError(
          absl::StrCat("leaf support of width ", width, " is too wide"));
    }
    logs.resize(static_cast<size_t>(width));
    for (int64_t z = k.lo; z <= k.hi; ++z) logs[z - k.lo] = lw(z);
    const double peak = *std::max_element(logs.begin(), logs.end());
    size_t a = 0, b = logs.size() - 1;
    while (a < b && logs[a] - peak < trim_log) ++a;
    while (b > a && logs[b] - peak < trim_log) --b;
    first = k.lo + static_cast<int64_t>(a);
    logs = std::vector<double>(logs.begin() + a, logs.begin() + b + 1);
  } else {
    const int64_t mode = UnimodalPeak(k, theta);
    const double peak = lw(mode);
    std::vector<double> left, right;
    for (int64_t z = mode - 1; z >= k.lo; --z) {
      const double v = lw(z);
      if (v - peak < trim_log) break;
      left.push_back(v);
    }
    for (int64_t z = mode + 1; z <= k.hi; ++z) {
      const double v = lw(z);
      if (v - peak < trim_log) break;
      right.push_back(v);
    }
    first = mode - static_cast<int64_t>(left.size());
    logs.assign(left.rbegin(), left.rend());
    logs.push_back(peak);
    logs.insert(logs.end(), right.begin(), right.end());
  }
  const double peak = *std::max_element(logs.begin(), logs.end());
  if (!std::isfinite(peak)) {
    return absl::FailedPreconditionError("leaf carries no mass on its box");
  }
  w.resize(logs.size());
  for (size_t j = 0; j < logs.size(); ++j) w[j] = std::exp(logs[j] - peak);
  lo_out = first;
  return absl::OkStatus();
}

}  // namespace

double LeafKernel::LogWeight(int64_t z) const {
  if (z == 0) return family == Family::kNegBin ? LogGamma(shape) : 0.0;
  const double zd = static_cast<double>(z);
  double lw = zd * log_ratio - LogGamma(zd + 1.0);
  if (family == Family::kNegBin) lw += LogGamma(zd + shape);
  return lw;
}

absl::StatusOr<ProductTreeSampler> ProductTreeSampler::Build(
    std::span<const LeafKernel> leaves_in, int64_t total,
    const TreeOptions& options) {
  if (leaves_in.empty()) {
    return absl::InvalidArgumentError("product tree: no coordinates");
  }
  if (total < 0) {
    return absl::InvalidArgumentError("product tree: negative total");
  }
  std::vector<LeafKernel> leaves(leaves_in.begin(), leaves_in.end());
  int64_t sum_lo = 0, sum_hi = 0;
  for (size_t i = 0; i < leaves.size(); ++i) {
    LeafKernel& k = leaves[i];
    if (k.lo < 0 || k.lo > k.hi) {
      return absl::InvalidArgumentError(
          absl::StrCat("product tree: invalid box at coordinate ", i));
    }
    if (k.family == LeafKernel::Family::kNegBin && !(k.shape > 0.0)) {
      return absl::InvalidArgumentError(
          absl::StrCat("product tree: nonpositive shape at coordinate ", i));
    }
    k.hi = std::min(k.hi, total);
    if (k.log_ratio == -std::numeric_limits<double>::infinity()) {
      k.hi = std::min<int64_t>(k.hi, 0);
    }
    if (k.lo > k.hi) {
      return absl::FailedPreconditionError(absl::StrCat(
          "infeasible: coordinate ", i, " has no mass on its box"));
    }
    sum_lo += k.lo;
    sum_hi += k.hi;
  }
  if (total < sum_lo || total > sum_hi) {
    return absl::FailedPreconditionError(absl::StrCat(
        "infeasible: total ", total, " outside [", sum_lo, ", ", sum_hi, "]"));
  }

  ProductTreeSampler s;
  s.num_leaves_ = leaves.size();
  s.total_ = total;
  s.kernels_ = options.kernels ? options.kernels : &simd::ActiveKernels();
  if (total == sum_lo || total == sum_hi) {
    s.fixed_.resize(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) {
      s.fixed_[i] = total == sum_lo ? leaves[i].lo : leaves[i].hi;
    }
    return s;
  }
  s.tilt_ = SolveTilt(leaves, total);
  const double trim = std::max(options.trim_log, kUnderflowLog);
  absl::Status st = s.BuildTree(leaves, trim);
  if (!st.ok() && trim > kUnderflowLog &&
      st.code() != absl::StatusCode::kResourceExhausted) {
    s.untrimmed_fallback_ = true;
    st = s.BuildTree(leaves, kUnderflowLog);
  }
  if (!st.ok()) return st;
  return s;
}

absl::Status ProductTreeSampler::BuildTree(std::span<const LeafKernel> leaves,
                                           double trim_log) {
  nodes_.clear();
  nodes_.reserve(2 * leaves.size());
  lo_prefix_.assign(leaves.size() + 1, 0);
  hi_prefix_.assign(leaves.size() + 1, 0);
  for (size_t i = 0; i < leaves.size(); ++i) {
    Node leaf;
    leaf.leaf = static_cast<int32_t>(i);
    absl::Status st =
        MaterializeLeaf(leaves[i], tilt_, trim_log, leaf.lo, leaf.w);
    if (!st.ok()) return st;
    lo_prefix_[i + 1] = lo_prefix_[i] + leaf.lo;
    hi_prefix_[i + 1] = hi_prefix_[i] + leaf.hi();
    nodes_.push_back(std::move(leaf));
  }
  if (total_ < lo_prefix_.back() || total_ > hi_prefix_.back()) {
    return absl::InternalError("trimmed leaf supports exclude the total");
  }
  std::vector<double> scratch;
  absl::Status status;
  root_ = BuildNode(0, leaves.size(), trim_log, scratch, status);
  if (!status.ok()) return status;
  const Node& root = nodes_[root_];
  if (total_ < root.lo || total_ > root.hi() || root.w[total_ - root.lo] <= 0.0) {
    return absl::InternalError("root weight at the total underflowed");
  }
  return absl::OkStatus();
}

int32_t ProductTreeSampler::BuildNode(size_t begin, size_t end,
                                      double trim_log,
                                      std::vector<double>& scratch,
                                      absl::Status& status) {
  if (end - begin == 1) return static_cast<int32_t>(begin);
  const size_t mid = begin + (end - begin) / 2;
  const int32_t l = BuildNode(begin, mid, trim_log, scratch, status);
  if (!status.ok()) return -1;
  const int32_t r = BuildNode(mid, end, trim_log, scratch, status);
  if (!status.ok()) return -1;

  const Node& a = nodes_[l];
  const Node& b = nodes_[r];
  scratch.resize(a.w.size() + b.w.size() - 1);
  kernels_->convolve(a.w.data(), a.w.size(), b.w.data(), b.w.size(),
                     scratch.data());
  const int64_t conv_lo = a.lo + b.lo;

  // Sums this subtree can take while the rest still reaches the total.
  const int64_t others_lo =
      lo_prefix_.back() - (lo_prefix_[end] - lo_prefix_[begin]);
  const int64_t others_hi =
      hi_prefix_.back() - (hi_prefix_[end] - hi_prefix_[begin]);
  int64_t first = std::max(conv_lo, total_ - others_hi);
  int64_t last = std::min(conv_lo + static_cast<int64_t>(scratch.size()) - 1,
                          total_ - others_lo);
  if (first > last) {
    status = absl::InternalError("empty feasibility window");
    return -1;
  }
  const double* base = scratch.data() + (first - conv_lo);
  const size_t n = static_cast<size_t>(last - first + 1);
  const double peak = kernels_->max_value(base, n);
  if (!(peak > 0.0)) {
    status = absl::InternalError("node weights underflowed");
    return -1;
  }
  const double keep = std::exp(trim_log) * peak;
  size_t s = 0, e = n - 1;
  while (s < e && base[s] < keep) ++s;
  while (e > s && base[e] < keep) --e;

  Node node;
  node.lo = first + static_cast<int64_t>(s);
  node.w.assign(base + s, base + e + 1);
  kernels_->scale(node.w.data(), node.w.size(), 1.0 / peak);
  node.left = l;
  node.right = r;
  nodes_.push_back(std::move(node));
  return static_cast<int32_t>(nodes_.size() - 1);
}

void ProductTreeSampler::Sample(RandomStream& rng,
                                std::span<int64_t> out) const {
  if (!fixed_.empty()) {
    std::copy(fixed_.begin(), fixed_.end(), out.begin());
    return;
  }
  SampleNode(root_, total_, rng, out);
}

void ProductTreeSampler::SampleNode(int32_t index, int64_t sum,
                                    RandomStream& rng,
                                    std::span<int64_t> out) const {
  const Node& node = nodes_[index];
  if (node.leaf >= 0) {
    out[node.leaf] = sum;
    return;
  }
  const Node& a = nodes_[node.left];
  const Node& b = nodes_[node.right];
  const int64_t jlo = std::max(a.lo, sum - b.hi());
  const int64_t jhi = std::min(a.hi(), sum - b.lo);
  const size_t n = static_cast<size_t>(jhi - jlo + 1);
  const double* pa = a.w.data() + (jlo - a.lo);
  const double* pb = b.w.data() + (sum - jlo - b.lo);
  const double mass = kernels_->dot_reversed(pa, pb, n);
  size_t k = kernels_->search_reversed(pa, pb, n, rng.Uniform() * mass);
  // Rounding can leave the search on a zero-weight tail entry.
  while (k > 0 && pa[k] * *(pb - k) == 0.0) --k;
  const int64_t left_sum = jlo + static_cast<int64_t>(k);
  SampleNode(node.left, left_sum, rng, out);
  SampleNode(node.right, sum - left_sum, rng, out);
}

size_t ProductTreeSampler::stored_entries() const {
  size_t total = 0;
  for (const Node& n : nodes_) total += n.w.size();
  return total;
}

}  // namespace pgsynth
