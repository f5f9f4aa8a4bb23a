// Copyright 2026 The trajmae Authors
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

// Binary checkpoint container (all integers little-endian):
//
//   "FMAE"                      4 bytes magic
//   version                     u32 (currently 1)
//   entry_count                 u64
//   entry_count times, sorted by name:
//     name_len u64, name bytes
//     rank u64, dims u64 x rank
//     value, m, v               f64 x numel each
//   step_count                  u64
//   metadata_len u64, metadata  UTF-8 bytes (resolved config JSON)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajmae/param_store.hpp"

namespace trajmae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  std::string metadata;
};

std::vector<std::uint8_t> serialize_checkpoint(const ParamStore& params,
                                               const std::string& metadata);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& metadata);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace trajmae
