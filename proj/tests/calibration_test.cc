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

#include "pgsynth/calibration.h"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "pgsynth/strata.h"
#include "test_support.h"

namespace pgsynth {
namespace {

using testing::DemoInstance;
using testing::MakeInstance;

// Values from an independent fixed-point iteration written against the
// same requirement formulas (damped Jacobi, double precision).
constexpr double kDemoUntruncatedA1 = 116.18635100632156;
constexpr double kDemoUntruncatedA2 = 58.197670686932646;
constexpr double kDemoTruncatedA1 = 16.140151777642608;

TEST(CalibrationTest, HomogeneousClosedForm) {
  for (double eps : {0.5, 1.0, 3.0}) {
    auto inst = MakeInstance({500, 500, 500, 500}, {0.01, 0.01, 0.01, 0.01},
                             {7, 3, 0, 10});
    auto prior = BuildPrior(inst.table, inst.rates);
    auto c = SolveHyperparameters(inst.table, *prior, eps, Mode::kUntruncated,
                                  nullptr);
    ASSERT_TRUE(c.ok()) << c.status();
    for (double a : c->a) EXPECT_NEAR(a, 20.0 / std::expm1(eps), 1e-9);
    for (size_t i = 0; i < c->b.size(); ++i) {
      EXPECT_NEAR(c->b[i], c->a[i] / c->lambda0[i], 1e-9 * c->b[i]);
    }
  }
}

TEST(CalibrationTest, DemoUntruncated) {
  auto demo = DemoInstance();
  auto prior = BuildPrior(demo.table, demo.rates);
  auto c = SolveHyperparameters(demo.table, *prior, 1.0, Mode::kUntruncated,
                                nullptr);
  ASSERT_TRUE(c.ok()) << c.status();
  EXPECT_TRUE(c->converged);
  EXPECT_NEAR(c->a[0], kDemoUntruncatedA1, 1e-6);
  EXPECT_NEAR(c->a[1], kDemoUntruncatedA2, 1e-6);
  EXPECT_GT(c->a[0], 116.0);
  EXPECT_GT(c->a[1], 58.0);
}

TEST(CalibrationTest, DemoTruncatedUsesBoxAndExchange) {
  auto demo = DemoInstance();
  auto prior = BuildPrior(demo.table, demo.rates);
  auto bounds = ComputeBounds(*prior, demo.table, 1e-4, 1.0);
  auto c = SolveHyperparameters(demo.table, *prior, 1.0, Mode::kTruncated,
                                &*bounds);
  ASSERT_TRUE(c.ok()) << c.status();
  EXPECT_TRUE(c->dominance_exchange);
  EXPECT_NEAR(c->a[0], kDemoTruncatedA1, 1e-6);
  EXPECT_NEAR(c->a[1], 1e-3, 1e-12);  // at the floor
  ASSERT_TRUE(c->bounds.has_value());
}

TEST(CalibrationTest, TruncatedRequirementByHand) {
  // One binding stratum: with a_(i) at its floor the factor is
  // (2y - 2L + A - 1) / (2y - U - L + A - 1).
  TruncationBounds b{{3, 52}, {30, 100}, 1e-4, 1.0};
  auto nu = NuTruncated(0, 1e-3, b, 100);
  ASSERT_TRUE(nu.ok());
  const double want_nu = (200 - 6 + 1e-3 - 1) / (200 - 33 + 1e-3 - 1);
  EXPECT_NEAR(*nu, want_nu, 1e-15);
  auto demo = DemoInstance();
  auto prior = BuildPrior(demo.table, demo.rates);
  auto c = SolveHyperparameters(demo.table, *prior, 1.0, Mode::kTruncated, &b);
  ASSERT_TRUE(c.ok());
  const double want = 27.0 / (std::exp(1.0) / want_nu - 1.0) - 6.0;
  EXPECT_NEAR(c->a[0], want, 1e-8);
  EXPECT_NEAR(c->a[0], 14.18, 0.01);
  // Infinite remainder: no inflation.
  EXPECT_DOUBLE_EQ(*NuTruncated(0, INFINITY, b, 100), 1.0);
}

TEST(CalibrationTest, NuUntruncatedPositivePart) {
  auto demo = DemoInstance();
  // Equal b/n: pooled ratio 1, no inflation.
  std::vector<double> a = {1.0, 1.0}, b = {100.0, 100.0};
  EXPECT_DOUBLE_EQ(*NuUntruncated(0, a, b, demo.table), 1.0);
  // Stratum 0 with the larger b/n has r < 1 and is inflated.
  std::vector<double> b2 = {300.0, 100.0};
  const double r = (100.0 / 1000 + 2) / (300.0 / 1000 + 2);
  const double want = (100 * (1 - r) + 1.0 + 99) / (1.0 + 99);
  EXPECT_NEAR(*NuUntruncated(0, a, b2, demo.table), want, 1e-14);
  EXPECT_DOUBLE_EQ(*NuUntruncated(1, a, b2, demo.table), 1.0);
}

TEST(CalibrationTest, SlackNonnegativeAndTightSomewhere) {
  auto inst = MakeInstance({1000, 3000, 2000}, {0.01, 0.004, 0.0075}, {4, 3, 3});
  auto prior = BuildPrior(inst.table, inst.rates);
  for (Mode mode : {Mode::kUntruncated, Mode::kTruncated}) {
    auto bounds = ComputeBounds(*prior, inst.table, 0.1, 1.0);
    auto c = SolveHyperparameters(inst.table, *prior, 1.0, mode, &*bounds);
    ASSERT_TRUE(c.ok()) << c.status();
    auto slack = ComputeSlack(inst.table, *c);
    ASSERT_TRUE(slack.ok());
    double min_slack = INFINITY;
    for (double s : *slack) {
      EXPECT_GE(s, -1e-9);
      min_slack = std::min(min_slack, s);
    }
    EXPECT_LT(min_slack, 1e-6);
    EXPECT_EQ(c->slack.size(), 3u);
  }
}

TEST(CalibrationTest, MonotoneInEpsilon) {
  auto inst = MakeInstance({1000, 3000, 2000}, {0.01, 0.004, 0.0075},
                           {40, 30, 30});
  auto prior = BuildPrior(inst.table, inst.rates);
  auto bounds = ComputeBounds(*prior, inst.table, 0.01, 1.0);
  for (Mode mode : {Mode::kUntruncated, Mode::kTruncated}) {
    std::vector<double> prev;
    for (double eps : {0.01, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0}) {
      auto c = SolveHyperparameters(inst.table, *prior, eps, mode, &*bounds);
      ASSERT_TRUE(c.ok()) << c.status();
      if (!prev.empty()) {
        for (size_t i = 0; i < prev.size(); ++i) {
          EXPECT_LE(c->a[i], prev[i] * (1 + 1e-9)) << eps;
        }
      }
      prev = c->a;
    }
  }
}

TEST(CalibrationTest, ZeroTotalGivesFloor) {
  auto table = StrataTable::Create({"g"}, {{{"a"}, 10, 0}, {{"b"}, 20, 0}});
  PriorSpec prior;
  prior.lambda0 = {0.1, 0.2};
  auto c = SolveHyperparameters(*table, prior, 1.0, Mode::kUntruncated, nullptr);
  ASSERT_TRUE(c.ok()) << c.status();
  EXPECT_EQ(c->a, (std::vector<double>{1e-3, 1e-3}));
}

TEST(CalibrationTest, RejectsDominanceViolationWithThreeStrata) {
  auto inst = MakeInstance({1000, 1000, 1000}, {0.08, 0.01, 0.01}, {5, 3, 2});
  auto prior = BuildPrior(inst.table, inst.rates);
  auto bounds = ComputeBounds(*prior, inst.table, 0.1, 1.0);
  auto c = SolveHyperparameters(inst.table, *prior, 1.0, Mode::kTruncated,
                                &*bounds);
  ASSERT_FALSE(c.ok());
  EXPECT_EQ(c.status().code(), absl::StatusCode::kFailedPrecondition);
}

TEST(CalibrationTest, ArgumentErrors) {
  auto demo = DemoInstance();
  auto prior = BuildPrior(demo.table, demo.rates);
  EXPECT_FALSE(SolveHyperparameters(demo.table, *prior, 0.0,
                                    Mode::kUntruncated, nullptr).ok());
  EXPECT_FALSE(SolveHyperparameters(demo.table, *prior, 1.0, Mode::kTruncated,
                                    nullptr).ok());
  EXPECT_FALSE(SolveHyperparameters(demo.table, *prior, 1.0,
                                    Mode::kDirichletEquivalent, nullptr).ok());
  EXPECT_EQ(*ParseMode("truncated"), Mode::kTruncated);
  EXPECT_FALSE(ParseMode("both").ok());
}

TEST(CalibrationTest, DirichletReductionHomogeneousOnly) {
  auto inst = MakeInstance({500, 500}, {0.006, 0.006}, {4, 2});
  auto prior = BuildPrior(inst.table, inst.rates);
  auto c = SolveHyperparameters(inst.table, *prior, 1.0,
                                Mode::kDirichletEquivalent, nullptr);
  ASSERT_TRUE(c.ok()) << c.status();
  auto alpha = DirichletReduction(*c, inst.table);
  ASSERT_TRUE(alpha.ok());
  EXPECT_NEAR((*alpha)[0], 6.0 / std::expm1(1.0), 1e-9);
  auto demo = DemoInstance();
  auto dp = BuildPrior(demo.table, demo.rates);
  auto u = SolveHyperparameters(demo.table, *dp, 1.0, Mode::kUntruncated, nullptr);
  EXPECT_FALSE(DirichletReduction(*u, demo.table).ok());
}

TEST(CalibrationTest, ReportJson) {
  auto demo = DemoInstance();
  auto prior = BuildPrior(demo.table, demo.rates);
  auto bounds = ComputeBounds(*prior, demo.table, 1e-4, 1.0);
  auto c = SolveHyperparameters(demo.table, *prior, 1.0, Mode::kTruncated,
                                &*bounds);
  const nlohmann::json j = CalibrationToJson(*c, demo.table);
  EXPECT_EQ(j["mode"], "truncated");
  EXPECT_EQ(j["strata"].size(), 2u);
  EXPECT_EQ(j["strata"][0]["U"], 32);
  EXPECT_EQ(j["strata"][0]["key"], "g1");
  EXPECT_DOUBLE_EQ(j["alpha"].get<double>(), 1e-4);
}

}  // namespace
}  // namespace pgsynth
