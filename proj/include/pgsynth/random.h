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

#ifndef PGSYNTH_RANDOM_H_
#define PGSYNTH_RANDOM_H_

#include <cstdint>
#include <random>

namespace pgsynth {

// Seeded 64-bit random stream. The engine and the derivations below are
// fully specified, so a given seed yields the same sequence on every
// conforming platform.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed);

  // Independent stream for replicate `index` of a run seeded with
  // `base_seed`. Replicate streams do not depend on how many other
  // replicates are drawn.
  static RandomStream ForReplicate(uint64_t base_seed, uint64_t index);

  uint64_t NextBits() { return engine_(); }

  // Uniform on the open interval (0, 1) with 53 random bits.
  double Uniform();

  // Standard normal deviate (Marsaglia polar method).
  double StandardNormal();

 private:
  RandomStream(uint64_t a, uint64_t b, uint64_t tag);

  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace pgsynth

#endif  // PGSYNTH_RANDOM_H_
