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

#ifndef PGSYNTH_PROVENANCE_H_
#define PGSYNTH_PROVENANCE_H_

#include <string>
#include <string_view>

#include "json.hpp"

namespace pgsynth {

// First 16 hex digits of SHA-256 over the canonical JSON dump. Object keys
// are sorted by nlohmann::json, so equal configs hash equally.
std::string ConfigHash(const nlohmann::json& config);

// First 16 hex digits of SHA-256 over raw bytes.
std::string ContentHash(std::string_view bytes);

}  // namespace pgsynth

#endif  // PGSYNTH_PROVENANCE_H_
