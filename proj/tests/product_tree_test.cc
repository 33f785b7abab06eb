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

#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "gtest/gtest.h"
#include "pgsynth/dist.h"
#include "pgsynth/random.h"
#include "pgsynth/simd.h"
#include "test_support.h"

namespace pgsynth {
namespace {

using testing::Compositions;
using testing::TvTolerance;

// Conditional law by enumerating every composition of the total.
std::map<std::vector<int64_t>, double> BruteForce(
    const std::vector<LeafKernel>& leaves, int64_t total) {
  std::map<std::vector<int64_t>, double> out;
  std::vector<double> logw;
  std::vector<std::vector<int64_t>> zs;
  for (const auto& z : Compositions(total, leaves.size())) {
    bool inside = true;
    double lw = 0;
    for (size_t i = 0; i < z.size(); ++i) {
      inside &= z[i] >= leaves[i].lo && z[i] <= leaves[i].hi;
      if (inside) lw += leaves[i].LogWeight(z[i]);
    }
    if (!inside || lw == -INFINITY) continue;
    zs.push_back(z);
    logw.push_back(lw);
  }
  const double norm = LogSumExp(logw);
  for (size_t k = 0; k < zs.size(); ++k) out[zs[k]] = std::exp(logw[k] - norm);
  return out;
}

std::vector<double> Probabilities(
    const std::map<std::vector<int64_t>, double>& exact) {
  std::vector<double> p;
  for (const auto& [z, pz] : exact) p.push_back(pz);
  return p;
}

double SampledTv(const ProductTreeSampler& s,
                 const std::map<std::vector<int64_t>, double>& exact,
                 int draws, uint64_t seed) {
  RandomStream rng(seed);
  std::map<std::vector<int64_t>, int> hits;
  std::vector<int64_t> z(s.num_leaves());
  for (int d = 0; d < draws; ++d) {
    s.Sample(rng, z);
    ++hits[z];
  }
  double tv = 0;
  for (const auto& [z, p] : exact) {
    auto it = hits.find(z);
    const double f = it == hits.end() ? 0.0 : it->second / double(draws);
    tv += 0.5 * std::abs(f - p);
  }
  for (const auto& [z, n] : hits) {
    if (!exact.contains(z)) tv += 0.5 * n / double(draws);
  }
  return tv;
}

std::vector<const simd::KernelTable*> AllKernels() {
  std::vector<const simd::KernelTable*> out = {&simd::ScalarKernels()};
  if (simd::Avx2Kernels() != nullptr) out.push_back(simd::Avx2Kernels());
  return out;
}

TEST(ProductTreeTest, MatchesBruteForceWithBoxes) {
  using F = LeafKernel::Family;
  const std::vector<LeafKernel> leaves = {
      {F::kNegBin, 2.5, std::log(0.3), 0, 9},
      {F::kNegBin, 0.01, std::log(0.45), 1, 4},
      {F::kPoisson, 1.0, std::log(2.0), 0, 12},
      {F::kNegBin, 30.0, std::log(0.05), 2, 12},
  };
  const auto exact = BruteForce(leaves, 12);
  for (const simd::KernelTable* k : AllKernels()) {
    auto s = ProductTreeSampler::Build(leaves, 12, {.trim_log = -69.0, .kernels = k});
    ASSERT_TRUE(s.ok()) << s.status();
    EXPECT_LT(SampledTv(*s, exact, 400000, 3),
              TvTolerance(Probabilities(exact), 400000))
        << k->name;
  }
}

TEST(ProductTreeTest, PoissonLeavesGiveMultinomialMeans) {
  // Independent Poissons conditioned on their sum are multinomial.
  std::vector<LeafKernel> leaves;
  std::vector<double> mu;
  for (int i = 0; i < 37; ++i) {
    mu.push_back(0.5 + (i * 7 % 11));
    leaves.push_back({LeafKernel::Family::kPoisson, 1.0, std::log(mu.back()), 0,
                      1 << 20});
  }
  const int64_t total = 5000;
  const double mu_sum = std::accumulate(mu.begin(), mu.end(), 0.0);
  for (const simd::KernelTable* k : AllKernels()) {
    auto s = ProductTreeSampler::Build(leaves, total, {.trim_log = -69.0, .kernels = k});
    ASSERT_TRUE(s.ok()) << s.status();
    RandomStream rng(8);
    const int draws = 4000;
    std::vector<double> mean(leaves.size(), 0.0);
    std::vector<int64_t> z(leaves.size());
    for (int d = 0; d < draws; ++d) {
      s->Sample(rng, z);
      ASSERT_EQ(std::accumulate(z.begin(), z.end(), int64_t{0}), total);
      for (size_t i = 0; i < z.size(); ++i) mean[i] += z[i] / double(draws);
    }
    for (size_t i = 0; i < mu.size(); ++i) {
      const double p = mu[i] / mu_sum;
      const double se = std::sqrt(total * p * (1 - p) / draws);
      EXPECT_NEAR(mean[i], total * p, 5 * se) << k->name << " leaf " << i;
    }
  }
}

TEST(ProductTreeTest, CommonRatioNegBinGivesDirichletMultinomialMeans) {
  std::vector<LeafKernel> leaves;
  std::vector<double> shape;
  for (int i = 0; i < 300; ++i) {
    shape.push_back(0.2 + (i % 13) * 0.9);
    leaves.push_back({LeafKernel::Family::kNegBin, shape.back(), std::log(0.4),
                      0, 1 << 20});
  }
  const int64_t total = 2000;
  const double shape_sum = std::accumulate(shape.begin(), shape.end(), 0.0);
  auto s = ProductTreeSampler::Build(leaves, total);
  ASSERT_TRUE(s.ok()) << s.status();
  RandomStream rng(21);
  const int draws = 3000;
  std::vector<double> group_mean(13, 0.0);
  std::vector<double> group_shape(13, 0.0);
  std::vector<int64_t> z(leaves.size());
  for (int d = 0; d < draws; ++d) {
    s->Sample(rng, z);
    for (size_t i = 0; i < z.size(); ++i) group_mean[i % 13] += z[i] / double(draws);
  }
  for (size_t i = 0; i < shape.size(); ++i) group_shape[i % 13] += shape[i];
  for (int g = 0; g < 13; ++g) {
    const double want = total * group_shape[g] / shape_sum;
    EXPECT_NEAR(group_mean[g], want, 0.03 * want + 1.0) << g;
  }
}

TEST(ProductTreeTest, DeterministicAtBoxExtremes) {
  using F = LeafKernel::Family;
  std::vector<LeafKernel> leaves = {{F::kNegBin, 1, -1, 2, 5}, {F::kNegBin, 1, -1, 3, 4}};
  auto lo = ProductTreeSampler::Build(leaves, 5);
  auto hi = ProductTreeSampler::Build(leaves, 9);
  ASSERT_TRUE(lo.ok());
  ASSERT_TRUE(hi.ok());
  RandomStream rng(1);
  std::vector<int64_t> z(2);
  lo->Sample(rng, z);
  EXPECT_EQ(z, (std::vector<int64_t>{2, 3}));
  hi->Sample(rng, z);
  EXPECT_EQ(z, (std::vector<int64_t>{5, 4}));
  EXPECT_FALSE(ProductTreeSampler::Build(leaves, 4).ok());
  EXPECT_FALSE(ProductTreeSampler::Build(leaves, 10).ok());
}

TEST(ProductTreeTest, ZeroRateLeafStaysAtZero) {
  using F = LeafKernel::Family;
  std::vector<LeafKernel> leaves = {{F::kNegBin, 1, -INFINITY, 0, 10},
                                    {F::kNegBin, 2, std::log(0.5), 0, 10},
                                    {F::kNegBin, 3, std::log(0.5), 0, 10}};
  auto s = ProductTreeSampler::Build(leaves, 7);
  ASSERT_TRUE(s.ok());
  RandomStream rng(4);
  std::vector<int64_t> z(3);
  for (int d = 0; d < 1000; ++d) {
    s->Sample(rng, z);
    EXPECT_EQ(z[0], 0);
    EXPECT_EQ(z[1] + z[2], 7);
  }
}

TEST(ProductTreeTest, TrimmingDoesNotChangeLaw) {
  using F = LeafKernel::Family;
  std::vector<LeafKernel> leaves = {{F::kNegBin, 0.5, std::log(0.2), 0, 40},
                                    {F::kNegBin, 50.0, std::log(0.6), 0, 40},
                                    {F::kPoisson, 1.0, std::log(0.1), 0, 40}};
  const auto exact = BruteForce(leaves, 40);
  auto untrimmed = ProductTreeSampler::Build(leaves, 40, {.trim_log = -INFINITY});
  auto trimmed = ProductTreeSampler::Build(leaves, 40, {.trim_log = -10.0});
  ASSERT_TRUE(untrimmed.ok());
  ASSERT_TRUE(trimmed.ok());
  EXPECT_LE(trimmed->stored_entries(), untrimmed->stored_entries());
  EXPECT_LT(SampledTv(*untrimmed, exact, 200000, 5),
            TvTolerance(Probabilities(exact), 200000));
  EXPECT_LT(SampledTv(*trimmed, exact, 200000, 6),
            TvTolerance(Probabilities(exact), 200000));
}

}  // namespace
}  // namespace pgsynth
