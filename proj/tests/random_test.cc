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

#include "pgsynth/random.h"

#include <set>

#include "gtest/gtest.h"

namespace pgsynth {
namespace {

TEST(RandomStreamTest, SameSeedSameSequence) {
  RandomStream a(42), b(42);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(a.NextBits(), b.NextBits());
}

TEST(RandomStreamTest, ReplicateStreamsDiffer) {
  std::set<uint64_t> first;
  for (uint64_t r = 0; r < 1000; ++r) {
    first.insert(RandomStream::ForReplicate(7, r).NextBits());
  }
  EXPECT_EQ(first.size(), 1000u);
  EXPECT_NE(RandomStream::ForReplicate(7, 0).NextBits(),
            RandomStream::ForReplicate(8, 0).NextBits());
  EXPECT_NE(RandomStream::ForReplicate(7, 0).NextBits(),
            RandomStream(7).NextBits());
}

TEST(RandomStreamTest, UniformIsOpenInterval) {
  RandomStream rng(1);
  double sum = 0;
  for (int k = 0; k < 100000; ++k) {
    const double u = rng.Uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(RandomStreamTest, NormalMoments) {
  RandomStream rng(2);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double x = rng.StandardNormal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

}  // namespace
}  // namespace pgsynth
