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

// Experiment orchestration: corpus generation and IO, training loops, logs,
// checkpoint metadata and parameter sweeps.

#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "trajmae/config.hpp"
#include "trajmae/forecasting.hpp"
#include "trajmae/metrics.hpp"

namespace trajmae {

enum class Split { kTrain = 0, kVal = 1, kShiftVal = 2 };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// Scene `index` of `split`, drawn from its own stream so that any subset
/// can be regenerated independently.
RawScenario generate_scene(const DataConfig& data, Split split, std::size_t index);
std::vector<RawScenario> generate_split(const DataConfig& data, Split split);

std::vector<ProcessedScene> preprocess_all(const std::vector<RawScenario>& raw);

/// Writes <dir>/<split>/<scenario_id>.json for every split and
/// <dir>/manifest.json. Returns the manifest text.
std::string write_corpus(const ExperimentConfig& config, const std::string& dir);

/// Scenarios of `split` listed in <dir>/manifest.json.
std::vector<RawScenario> read_split(const std::string& dir, Split split);

/// Reads the split from config.data.dir when set, else generates it.
std::vector<ProcessedScene> load_scenes(const ExperimentConfig& config, Split split);

using Progress = std::function<void(const std::string&)>;

struct PretrainEpoch {
  std::size_t epoch = 0;
  double history = 0.0;  // epoch means of the batch losses
  double future = 0.0;
  double lane = 0.0;
  double total = 0.0;
  double lr = 0.0;  // learning rate of the epoch's last step
};

struct PretrainRun {
  ParamStore params;
  std::vector<PretrainEpoch> log;
};

/// Pretrains a MaeModel from `seed` on `train` with config.pretrain.
PretrainRun run_pretrain(const ExperimentConfig& config, const std::vector<ProcessedScene>& train,
                         std::uint64_t seed, const Progress& progress = {});

struct FinetuneEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double regression = 0.0;
  double classification = 0.0;
  double lr = 0.0;
  SceneMetrics val;  // mean over the validation split, if one was given
};

struct FinetuneRun {
  ParamStore params;
  std::vector<FinetuneEpoch> log;
};

/// Trains a ForecastModel from `seed` with config.finetune. Shared weights
/// come from `pretrained` when non-null. `val` may be empty.
FinetuneRun run_finetune(const ExperimentConfig& config, const std::vector<ProcessedScene>& train,
                         const std::vector<ProcessedScene>& val, std::uint64_t seed,
                         const ParamStore* pretrained, const Progress& progress = {});

/// Focal forecasts of `model`; keeps references to both arguments.
Forecaster model_forecaster(const ForecastModel& model, ParamStore& params);
/// Returns the ground truth as a single mode (invalid steps are zero).
Forecaster ground_truth_forecaster();

/// Columns: epoch,L_H,L_F,L_L,L_MAE,lr
void write_pretrain_log(const std::vector<PretrainEpoch>& log, std::ostream& out);
/// Columns: epoch,loss,lr, then the seven metric columns of the val split.
void write_finetune_log(const std::vector<FinetuneEpoch>& log, std::ostream& out);

/// Metadata stored in checkpoints: kind, seed, resolved config and its hash.
std::string checkpoint_metadata(const ExperimentConfig& config, std::string_view kind,
                                std::uint64_t seed);

struct CheckpointInfo {
  std::string kind;  // "pretrain" or "finetune"
  std::uint64_t seed = 0;
  std::string config_hash;
  ExperimentConfig config;
};

CheckpointInfo parse_checkpoint_metadata(const std::string& metadata);

/// Throws if the checkpoint was written under a different config, unless
/// `force`; returns true when the configs differ.
bool check_config_match(const CheckpointInfo& info, const ExperimentConfig& config, bool force);

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  SceneMetrics val;
};

/// Applies `value` on `axis` ("alpha", "beta" or "encoder_depth").
ExperimentConfig with_axis_value(const ExperimentConfig& config, std::string_view axis,
                                 double value);

/// Pretrain then fine-tune for every (value, seed) pair, in that order.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, std::string_view axis,
                                const std::vector<double>& values,
                                const std::vector<std::uint64_t>& seeds,
                                const std::vector<ProcessedScene>& train,
                                const std::vector<ProcessedScene>& val,
                                const Progress& progress = {});

/// Columns: axis,value,seed,config_hash, then the seven metric columns.
void write_sweep_table(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace trajmae
