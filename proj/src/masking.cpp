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

#include "trajmae/masking.hpp"

#include <cmath>

namespace trajmae {

namespace {

void check_ratio(double r, const char* name) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw Error(std::string(name) + " must be in [0, 1], got " + std::to_string(r));
  }
}

/// Copies the (x, y) channels and flag of rows `idx` from a
/// [n x steps x channels] tensor whose flag is the last channel.
void gather_xy(const Tensor& src, std::size_t steps, const std::vector<std::size_t>& idx,
               Tensor& xy, Tensor& valid) {
  const std::size_t ch = src.cols();
  xy = Tensor({idx.size(), steps, 2});
  valid = Tensor({idx.size(), steps, 2});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    for (std::size_t t = 0; t < steps; ++t) {
      const double* row = src.data() + (idx[k] * steps + t) * ch;
      const std::size_t o = (k * steps + t) * 2;
      xy[o] = row[0];
      xy[o + 1] = row[1];
      valid[o] = valid[o + 1] = row[ch - 1];
    }
  }
}

}  // namespace

std::size_t mask_count(double r, std::size_t n) {
  return static_cast<std::size_t>(std::round(r * static_cast<double>(n)));
}

MaskPlan plan_masks(std::size_t num_agents, std::size_t num_lanes, double alpha, double beta,
                    RngStream& rng) {
  if (num_agents < 1) throw Error("plan_masks: need at least one agent");
  check_ratio(alpha, "alpha");
  check_ratio(beta, "beta");
  MaskPlan plan;
  plan.alpha = alpha;
  plan.beta = beta;
  plan.agent_assignment.assign(num_agents, AgentMask::kFutureMasked);
  const auto agents = rng.permutation(num_agents);
  for (std::size_t k = 0; k < mask_count(alpha, num_agents); ++k) {
    plan.agent_assignment[agents[k]] = AgentMask::kHistoryMasked;
  }
  plan.lane_masked.assign(num_lanes, 0);
  const auto lanes = rng.permutation(num_lanes);
  for (std::size_t k = 0; k < mask_count(beta, num_lanes); ++k) plan.lane_masked[lanes[k]] = 1;
  return plan;
}

MaskedScene apply_mask(const ProcessedScene& scene, const MaskPlan& plan) {
  if (plan.agent_assignment.size() != scene.num_agents() ||
      plan.lane_masked.size() != scene.num_lanes()) {
    throw Error("mask plan is " + std::to_string(plan.agent_assignment.size()) + " agents x " +
                std::to_string(plan.lane_masked.size()) + " lanes, scene is " +
                std::to_string(scene.num_agents()) + " x " + std::to_string(scene.num_lanes()));
  }
  MaskedScene m;
  for (std::size_t i = 0; i < scene.num_agents(); ++i) {
    if (plan.agent_assignment[i] == AgentMask::kHistoryMasked) {
      m.visible_future.push_back(i);
      m.masked_history.push_back(i);
    } else {
      m.visible_history.push_back(i);
      m.masked_future.push_back(i);
    }
  }
  for (std::size_t j = 0; j < scene.num_lanes(); ++j) {
    (plan.lane_masked[j] ? m.masked_lanes : m.visible_lanes).push_back(j);
  }
  gather_xy(scene.agent_history, kHistorySteps, m.masked_history, m.history_target,
            m.history_target_valid);
  gather_xy(scene.agent_future, kFutureSteps, m.masked_future, m.future_target,
            m.future_target_valid);
  gather_xy(scene.lanes, kLanePoints, m.masked_lanes, m.lane_target, m.lane_target_valid);
  return m;
}

}  // namespace trajmae
