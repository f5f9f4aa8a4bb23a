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

// Small hand-built scenes and model configs shared by tests.

#pragma once

#include <cmath>

#include "trajmae/embedding.hpp"
#include "trajmae/scene.hpp"
#include "trajmae/synthetic.hpp"

namespace trajmae::testing {

/// Tiny model so finite-difference checks stay fast.
inline ModelConfig tiny_model() {
  ModelConfig c;
  c.dim = 8;
  c.heads = 2;
  c.encoder_depth = 1;
  c.decoder_depth = 1;
  c.mlp_ratio = 2;
  c.modes = 2;
  return c;
}

/// Two vehicles and three 20 m lanes (one segment each). The focal agent
/// drives along +x and curves gently; the second agent crosses in front.
inline RawScenario two_agent_three_lane() {
  RawScenario r;
  r.scenario_id = "two-agent-three-lane";
  r.city_tag = "alpha";
  r.focal_index = 0;
  AgentTrack focal;
  AgentTrack other;
  other.category = AgentCategory::kCyclist;
  for (std::size_t t = 0; t < kTotalSteps; ++t) {
    const double s = 0.1 * static_cast<double>(t) - 4.9;
    focal.poses.push_back({8.0 * s, 0.3 * s * s, std::atan2(0.6 * s, 8.0)});
    focal.observed.push_back(true);
    other.poses.push_back({12.0 - 0.5 * s, -6.0 + 4.0 * s, std::atan2(4.0, -0.5)});
    // A gap in the history and an unobserved tail of the future.
    other.observed.push_back(t != 20 && t != 21 && t < 100);
  }
  r.agents = {focal, other};
  r.lanes = {{LaneType::kStraight, {{-20.0, 0.0}, {0.0, 0.0}}},
             {LaneType::kIntersection, {{0.0, 0.0}, {12.0, 6.0}, {14.0, 10.0}}},
             {LaneType::kOther, {{14.0, -10.0}, {10.0, 9.0}}}};
  return r;
}

/// Rotates `raw` by `rot` about the world origin, then translates by `shift`.
inline RawScenario rigid_transform(const RawScenario& raw, double rot, Point2 shift) {
  RawScenario out = raw;
  const double c = std::cos(rot), s = std::sin(rot);
  for (auto& a : out.agents) {
    for (auto& p : a.poses) {
      p = {c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y, wrap_angle(p.theta + rot)};
    }
  }
  for (auto& l : out.lanes) {
    for (auto& p : l.points) p = {c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y};
  }
  return out;
}

inline ProcessedScene synthetic_scene(std::uint64_t seed, const GenConfig& config = {}) {
  RngStream rng(seed);
  return normalize_to_focal(generate_synthetic_scenario(config, rng));
}

}  // namespace trajmae::testing
