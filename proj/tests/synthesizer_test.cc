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

#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include "gtest/gtest.h"
#include "pgsynth/audit.h"
#include "pgsynth/calibration.h"
#include "test_support.h"

namespace pgsynth {
namespace {

using testing::DemoInstance;
using testing::MakeInstance;

struct Setup {
  testing::SmallInstance inst;
  Calibration calib;
};

Setup Calibrated(testing::SmallInstance inst, Mode mode, double eps,
                 double alpha = 0.1) {
  auto prior = BuildPrior(inst.table, inst.rates);
  EXPECT_TRUE(prior.ok()) << prior.status();
  auto bounds = ComputeBounds(*prior, inst.table, alpha, 1.0);
  auto calib = SolveHyperparameters(inst.table, *prior, eps, mode, &*bounds);
  EXPECT_TRUE(calib.ok()) << calib.status();
  return {std::move(inst), *std::move(calib)};
}

// Sampled TV against the enumerated law, minus the tolerance expected from
// sampling noise alone; negative means consistent.
double TvExcess(const StrataTable& table, const Calibration& calib,
                SamplingRoute route, int draws, uint64_t seed) {
  auto pmf = ExactJointPmf(table.counts(), table, calib);
  EXPECT_TRUE(pmf.ok());
  std::map<std::vector<int64_t>, double> exact;
  std::vector<double> probs;
  for (size_t k = 0; k < pmf->size(); ++k) {
    auto o = pmf->outcome(k);
    exact[{o.begin(), o.end()}] = std::exp(pmf->log_p[k]);
    probs.push_back(std::exp(pmf->log_p[k]));
  }
  auto syn = Synthesizer::Create(table, calib, route);
  EXPECT_TRUE(syn.ok()) << syn.status();
  std::map<std::vector<int64_t>, int> hits;
  RandomStream rng(seed);
  for (int d = 0; d < draws; ++d) ++hits[syn->Draw(rng)->z];
  double tv = 0;
  for (const auto& [z, p] : exact) {
    tv += 0.5 * std::abs((hits.contains(z) ? hits[z] : 0) / double(draws) - p);
  }
  for (const auto& [z, n] : hits) {
    if (!exact.contains(z)) tv += 0.5 * n / double(draws);
  }
  return tv - testing::TvTolerance(probs, draws);
}

TEST(SynthesizerTest, ExactRouteMatchesMechanismLaw) {
  for (Mode mode : {Mode::kUntruncated, Mode::kTruncated}) {
    auto s = Calibrated(MakeInstance({1000, 3000, 2000}, {0.01, 0.004, 0.0075},
                                     {6, 1, 3}),
                        mode, 1.0, 0.3);
    EXPECT_LT(TvExcess(s.inst.table, s.calib, SamplingRoute::kExact, 300000, 1),
              0.0)
        << ModeName(mode);
  }
}

TEST(SynthesizerTest, RatesRouteAgreesWhenRatioIsCommon) {
  // Equal populations and rates give equal b_i / n_i.
  auto s = Calibrated(MakeInstance({100, 100, 100}, {0.02, 0.02, 0.02}, {3, 1, 2}),
                      Mode::kUntruncated, 1.0);
  EXPECT_LT(TvExcess(s.inst.table, s.calib, SamplingRoute::kViaRates, 300000, 2),
            0.0);
}

TEST(SynthesizerTest, RatesRouteDeviatesWhenRatiosDiffer) {
  // Truncated calibration of this instance leaves b_i / n_i spread from
  // about 2.5e-4 to 0.5 with small shapes, so the two routes separate.
  auto s = Calibrated(
      MakeInstance({1000, 3000, 2000}, {0.01, 0.004, 0.0075}, {6, 1, 3}),
      Mode::kTruncated, 1.0, 0.3);
  EXPECT_GT(
      TvExcess(s.inst.table, s.calib, SamplingRoute::kViaRates, 100000, 3),
      0.03);
}

TEST(SynthesizerTest, InvariantsHold) {
  for (Mode mode : {Mode::kUntruncated, Mode::kTruncated}) {
    auto s = Calibrated(MakeInstance({1000, 3000, 2000, 500},
                                     {0.01, 0.004, 0.0075, 0.02}, {30, 10, 25, 5}),
                        mode, 0.5, 0.05);
    for (SamplingRoute route : {SamplingRoute::kExact, SamplingRoute::kViaRates}) {
      auto reps = RunReplicates(s.inst.table, s.calib, 500, 3,
                                RunOptions{.threads = 1, .route = route});
      ASSERT_TRUE(reps.ok()) << reps.status();
      for (const auto& r : *reps) {
        ASSERT_TRUE(CheckReplicate(r, s.inst.table, s.calib).ok());
        EXPECT_EQ(std::accumulate(r.z.begin(), r.z.end(), int64_t{0}), 70);
      }
    }
  }
}

TEST(SynthesizerTest, ReproducibleAcrossThreadLayouts) {
  auto s = Calibrated(MakeInstance({1000, 3000, 2000}, {0.01, 0.004, 0.0075},
                                   {30, 10, 25}),
                      Mode::kTruncated, 1.0);
  auto one = RunReplicates(s.inst.table, s.calib, 50, 77, {.threads = 1});
  auto four = RunReplicates(s.inst.table, s.calib, 50, 77, {.threads = 4});
  auto again = RunReplicates(s.inst.table, s.calib, 20, 77, {.threads = 2});
  ASSERT_TRUE(one.ok() && four.ok() && again.ok());
  for (size_t r = 0; r < 50; ++r) {
    EXPECT_EQ((*one)[r].z, (*four)[r].z);
    EXPECT_EQ((*one)[r].replicate_index, static_cast<int64_t>(r));
  }
  for (size_t r = 0; r < 20; ++r) EXPECT_EQ((*one)[r].z, (*again)[r].z);
  std::vector<std::vector<int64_t>> streamed;
  ASSERT_TRUE(ForEachReplicate(s.inst.table, s.calib, 50, 77, {.threads = 3}, 7,
                               [&](const SyntheticReplicate& rep) {
                                 streamed.push_back(rep.z);
                                 return absl::OkStatus();
                               })
                  .ok());
  ASSERT_EQ(streamed.size(), 50u);
  for (size_t r = 0; r < 50; ++r) EXPECT_EQ(streamed[r], (*one)[r].z);
}

TEST(SynthesizerTest, TruncationClampsPosteriorCounts) {
  auto demo = MakeInstance({1000, 1000}, {0.015, 0.085}, {45, 55});
  auto s = Calibrated(demo, Mode::kTruncated, 1.0, 1e-4);
  auto syn = Synthesizer::Create(s.inst.table, s.calib);
  ASSERT_TRUE(syn.ok());
  // Box is [3, 32] x [52, 100].
  EXPECT_EQ(syn->posterior_counts(), (std::vector<int64_t>{32, 55}));
}

TEST(SynthesizerTest, TruncatedModeFollowsDataMoreClosely) {
  // Data (40, 60) against prior expectations (15, 85).
  auto demo = MakeInstance({1000, 1000}, {0.015, 0.085}, {40, 60});
  double means[2];
  int k = 0;
  for (Mode mode : {Mode::kUntruncated, Mode::kTruncated}) {
    auto s = Calibrated(demo, mode, 1.0, 1e-4);
    auto reps = RunReplicates(s.inst.table, s.calib, 4000, 5);
    ASSERT_TRUE(reps.ok());
    double m = 0;
    for (const auto& r : *reps) m += r.z[0] / 4000.0;
    means[k++] = m;
  }
  EXPECT_LT(std::abs(means[1] - 40), std::abs(means[0] - 40));
  EXPECT_GT(means[1], means[0]);
}

TEST(SynthesizerTest, CsvRows) {
  auto demo = DemoInstance();
  SyntheticReplicate rep{{0, 100}, 3, 0, Mode::kUntruncated};
  std::ostringstream out;
  WriteReplicateHeader(demo.table, out);
  WriteReplicateRows(demo.table, rep, out);
  EXPECT_EQ(out.str(), "replicate,group,z\n3,g1,0\n3,g2,100\n");
  std::ostringstream sparse;
  WriteReplicateRows(demo.table, rep, sparse, /*skip_zeros=*/true);
  EXPECT_EQ(sparse.str(), "3,g2,100\n");
}

TEST(SynthesizerTest, CheckReplicateDetectsViolations) {
  auto s = Calibrated(DemoInstance(), Mode::kTruncated, 1.0, 1e-4);
  SyntheticReplicate bad_sum{{10, 80}, 0, 0, Mode::kTruncated};
  SyntheticReplicate bad_box{{40, 60}, 0, 0, Mode::kTruncated};
  SyntheticReplicate good{{20, 80}, 0, 0, Mode::kTruncated};
  EXPECT_FALSE(CheckReplicate(bad_sum, s.inst.table, s.calib).ok());
  EXPECT_FALSE(CheckReplicate(bad_box, s.inst.table, s.calib).ok());
  EXPECT_TRUE(CheckReplicate(good, s.inst.table, s.calib).ok());
}

}  // namespace
}  // namespace pgsynth
