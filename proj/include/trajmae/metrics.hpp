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

// Displacement metrics for multi-modal forecasts, a constant-velocity
// baseline and dataset-level evaluation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "trajmae/scene.hpp"

namespace trajmae {

inline constexpr double kMissThreshold = 2.0;

// Shapes: preds [K x T x 2], gt [T x 2], valid has T entries. Every function
// throws if no step is valid.

double min_ade(const Tensor& preds, const Tensor& gt, std::span<const std::uint8_t> valid);

/// Endpoint error at the last valid step.
double min_fde(const Tensor& preds, const Tensor& gt, std::span<const std::uint8_t> valid);

/// 1 if min_fde exceeds `threshold`, else 0.
double miss_rate(const Tensor& preds, const Tensor& gt, std::span<const std::uint8_t> valid,
                 double threshold = kMissThreshold);

/// min_fde + (1 - p)^2 with p the score of the endpoint-best mode (lowest
/// index on ties). `scores` has K entries.
double brier_min_fde(const Tensor& preds, std::span<const double> scores, const Tensor& gt,
                     std::span<const std::uint8_t> valid);

/// Index of the highest score, lowest index on ties.
std::size_t top_mode(std::span<const double> scores);

/// Forecast for the focal agent in its anchor frame.
struct FocalForecast {
  Tensor trajectories;         // [K x kFutureSteps x 2]
  std::vector<double> scores;  // K entries summing to 1
};

using Forecaster = std::function<FocalForecast(const ProcessedScene&)>;

/// Extrapolates the focal agent's most recent observed per-step displacement;
/// holds position when no displacement is available.
FocalForecast constant_velocity_baseline(const ProcessedScene& scene);

/// Focal ground truth [kFutureSteps x 2] and per-step validity.
void focal_ground_truth(const ProcessedScene& scene, Tensor& gt, std::vector<std::uint8_t>& valid);

struct SceneMetrics {
  std::string scene_id;
  double min_ade_1 = 0.0;
  double min_fde_1 = 0.0;
  double mr_1 = 0.0;
  double min_ade_6 = 0.0;
  double min_fde_6 = 0.0;
  double mr_6 = 0.0;
  double brier_min_fde_6 = 0.0;
};

/// K=1 columns use the top-scored mode; the *_6 columns use every mode.
SceneMetrics score_forecast(const FocalForecast& forecast, const Tensor& gt,
                            std::span<const std::uint8_t> valid, const std::string& scene_id);

struct MetricReport {
  std::vector<SceneMetrics> scenes;
  SceneMetrics mean;  // unweighted mean over scenes, scene_id "mean"
  std::size_t n_scenes() const { return scenes.size(); }
};

/// Mean row of `scenes`. Throws if empty.
SceneMetrics mean_metrics(const std::vector<SceneMetrics>& scenes);

/// Scores `forecaster` on every scene in order. Throws on an empty split.
MetricReport evaluate(const Forecaster& forecaster, const std::vector<ProcessedScene>& scenes);

/// CSV columns: scene_id,minADE_1,minFDE_1,MR_1,minADE_6,minFDE_6,MR_6,
/// brier_minFDE_6; one row per scene followed by the mean row.
void write_metrics_csv(const MetricReport& report, std::ostream& out);

}  // namespace trajmae
