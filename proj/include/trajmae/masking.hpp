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

// Complementary agent masking and uniform lane masking.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "trajmae/rng.hpp"
#include "trajmae/scene.hpp"
#include "trajmae/tensor.hpp"

namespace trajmae {

enum class AgentMask : std::uint8_t { kHistoryMasked, kFutureMasked };

struct MaskPlan {
  std::vector<AgentMask> agent_assignment;
  std::vector<std::uint8_t> lane_masked;
  double alpha = 0.0;
  double beta = 0.0;
};

/// Number of masked items for ratio `r` over `n`, rounding half away from
/// zero.
std::size_t mask_count(double r, std::size_t n);

/// round(alpha * num_agents) uniformly chosen agents get their history
/// masked, the rest their future; round(beta * num_lanes) uniformly chosen
/// lanes are masked.
MaskPlan plan_masks(std::size_t num_agents, std::size_t num_lanes, double alpha, double beta,
                    RngStream& rng);

/// Visible/target split. Index lists are ascending indices into the scene.
/// Target tensors hold two values per step or point: history (dx, dy)
/// displacements, future (x, y) relative to the agent anchor, lane (x, y)
/// relative to the segment centroid. The matching `_valid` tensors repeat
/// the step flag in both coordinates.
struct MaskedScene {
  std::vector<std::size_t> visible_history;  // agents with future masked
  std::vector<std::size_t> visible_future;   // agents with history masked
  std::vector<std::size_t> visible_lanes;
  std::vector<std::size_t> masked_history;   // same agents as visible_future
  std::vector<std::size_t> masked_future;    // same agents as visible_history
  std::vector<std::size_t> masked_lanes;

  Tensor history_target;        // [|masked_history| x kHistorySteps x 2]
  Tensor history_target_valid;
  Tensor future_target;         // [|masked_future| x kFutureSteps x 2]
  Tensor future_target_valid;
  Tensor lane_target;           // [|masked_lanes| x kLanePoints x 2]
  Tensor lane_target_valid;
};

MaskedScene apply_mask(const ProcessedScene& scene, const MaskPlan& plan);

}  // namespace trajmae
