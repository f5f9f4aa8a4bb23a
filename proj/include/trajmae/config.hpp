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

// Experiment configuration: defaults, JSON schema and hashing.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trajmae/autoencoder.hpp"
#include "trajmae/scenario_io.hpp"
#include "trajmae/synthetic.hpp"

namespace trajmae {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t batch = 128;
  std::size_t epochs = 60;
  std::size_t warmup_epochs = 10;
};

struct DataConfig {
  std::uint64_t seed = 2026;
  std::size_t train_scenes = 2000;
  std::size_t val_scenes = 400;
  std::size_t shift_scenes = 400;
  GenConfig generator;                       // train and val splits
  std::vector<std::string> shift_city_tags;  // shift_val split
  std::string dir;  // generated corpus on disk; empty means generate in memory
};

struct ExperimentConfig {
  std::string profile = "paper";
  ModelConfig model;
  double alpha = 0.4;
  double beta = 0.5;
  MaeLossWeights loss_weights;
  TrainConfig pretrain;
  TrainConfig finetune;
  DataConfig data;
};

/// Architecture and training settings of the published setup.
ExperimentConfig paper_profile();
/// Reduced corpus, epochs and model width for single-core CPU runs.
ExperimentConfig desk_profile();
/// Profile by name ("desk" or "paper").
ExperimentConfig profile(std::string_view name);

/// Throws Error on inconsistent values.
void validate(const ExperimentConfig& config);

/// Canonical JSON (sorted keys, compact).
std::string config_to_json(const ExperimentConfig& config);

/// Reads a JSON document. The "profile" key picks the base profile (desk when
/// absent); every other key overrides it. Unknown keys and wrong types throw
/// SchemaError with a JSON pointer.
ExperimentConfig config_from_json(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// 64-bit FNV-1a of `bytes` as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
/// fnv1a_hex of the canonical JSON.
std::string config_hash(const ExperimentConfig& config);

}  // namespace trajmae
