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

// Multi-modal forecasting head on top of the scene encoder, winner-take-all
// training loss and weight transfer from a pretrained autoencoder.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trajmae/autoencoder.hpp"

namespace trajmae {

struct ForecastOutput {
  Var trajectories;  // [N*K x 2*kFutureSteps], agent-major, (x, y) interleaved
  Var logits;        // [N x K]
};

/// Numeric forecast for every agent of a scene, relative to each agent's
/// anchor.
struct Prediction {
  Tensor trajectories;  // [N x K x kFutureSteps x 2]
  Tensor probabilities;  // [N x K], rows sum to 1
};

/// Parameters: hist_fpn, lane_net, pos_embed, semantic, encoder (same names
/// as MaeModel), traj_head, score_head.
class ForecastModel {
 public:
  explicit ForecastModel(const ModelConfig& config);

  void init(ParamStore& store, RngStream& rng) const;

  const ModelConfig& config() const { return config_; }

  /// Encodes every agent history and every lane and decodes K modes per agent.
  ForecastOutput forward(const Context& ctx, const ProcessedScene& scene) const;

  /// Evaluation-mode forward pass.
  Prediction predict(ParamStore& params, const ProcessedScene& scene) const;

 private:
  ModelConfig config_;
  SceneEmbedding embed_;
  TransformerStack encoder_;
  Mlp traj_head_, score_head_;
};

/// Parameter prefixes shared between MaeModel and ForecastModel.
const std::vector<std::string>& shared_prefixes();

/// Copies every shared parameter of `target` from `pretrained`. Throws an
/// Error listing names missing from `pretrained` or with a different shape.
/// Returns the number of tensors copied.
std::size_t init_from_pretrained(const ParamStore& pretrained, ParamStore& target);

struct WtaLoss {
  Var total;
  double regression = 0.0;
  double classification = 0.0;
  std::vector<std::size_t> winner;  // per agent; kNoWinner without a valid future
  std::size_t agents = 0;           // agents with a valid future in this scene
};

inline constexpr std::size_t kNoWinner = static_cast<std::size_t>(-1);

/// Number of agents with at least one valid future step.
std::size_t count_forecast_targets(const ProcessedScene& scene);

/// Winner-take-all loss. For each agent with a valid future, the winning
/// mode has the lowest mean displacement over valid steps (ties to the lower
/// index); Huber loss on the winner plus cross-entropy towards it, each
/// averaged over `agent_count` agents (the batch total). Returns an invalid
/// `total` if the scene has no target.
WtaLoss wta_loss(const ForecastOutput& out, const ProcessedScene& scene, std::size_t modes,
                 std::size_t agent_count);

struct FinetuneOptions {
  double lr = 1e-3;
  double weight_decay = 1e-4;
};

struct FinetuneRecord {
  double total = 0.0;
  double regression = 0.0;
  double classification = 0.0;
};

/// One AdamW step over `batch` with gradients accumulated scene by scene.
FinetuneRecord finetune_step(const ForecastModel& model, ParamStore& params,
                             const std::vector<const ProcessedScene*>& batch,
                             const FinetuneOptions& options, RngStream& dropout_rng);

}  // namespace trajmae
