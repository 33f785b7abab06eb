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

#include <cmath>

namespace pgsynth {
namespace {

constexpr uint64_t kPlainTag = 0x5eed0001;
constexpr uint64_t kReplicateTag = 0x5eed0002;

std::seed_seq MakeSeedSeq(uint64_t a, uint64_t b, uint64_t tag) {
  return std::seed_seq{static_cast<uint32_t>(a), static_cast<uint32_t>(a >> 32),
                       static_cast<uint32_t>(b), static_cast<uint32_t>(b >> 32),
                       static_cast<uint32_t>(tag)};
}

}  // namespace

RandomStream::RandomStream(uint64_t a, uint64_t b, uint64_t tag) {
  std::seed_seq seq = MakeSeedSeq(a, b, tag);
  engine_.seed(seq);
}

RandomStream::RandomStream(uint64_t seed) : RandomStream(seed, 0, kPlainTag) {}

RandomStream RandomStream::ForReplicate(uint64_t base_seed, uint64_t index) {
  return RandomStream(base_seed, index, kReplicateTag);
}

double RandomStream::Uniform() {
  for (;;) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

double RandomStream::StandardNormal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * Uniform() - 1.0;
    v = 2.0 * Uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * m;
  has_spare_normal_ = true;
  return u * m;
}

}  // namespace pgsynth
