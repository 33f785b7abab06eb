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

#include <cstdlib>
#include <cstring>

#include "pgsynth/simd.h"

namespace pgsynth::simd {

#if defined(PGSYNTH_HAVE_AVX2)
const KernelTable& Avx2KernelTableUnchecked();
#endif

const KernelTable* Avx2Kernels() {
#if defined(PGSYNTH_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &Avx2KernelTableUnchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& ActiveKernels() {
  static const KernelTable* active = [] {
    const char* pref = std::getenv("PGSYNTH_SIMD");
    if (pref != nullptr && std::strcmp(pref, "scalar") == 0) {
      return &ScalarKernels();
    }
    const KernelTable* avx2 = Avx2Kernels();
    return avx2 != nullptr ? avx2 : &ScalarKernels();
  }();
  return *active;
}

}  // namespace pgsynth::simd
