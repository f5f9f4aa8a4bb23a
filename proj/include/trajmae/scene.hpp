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

// Scenario data model and agent-centric preprocessing.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajmae/tensor.hpp"

namespace trajmae {

inline constexpr std::size_t kHistorySteps = 50;
inline constexpr std::size_t kFutureSteps = 60;
inline constexpr std::size_t kTotalSteps = kHistorySteps + kFutureSteps;
/// Index of the current (latest history) timestep.
inline constexpr std::size_t kCurrentStep = kHistorySteps - 1;
inline constexpr int kTimestepHz = 10;
inline constexpr std::size_t kLanePoints = 20;
inline constexpr double kSceneRadius = 150.0;
inline constexpr double kSegmentLength = 20.0;

inline constexpr std::size_t kHistoryChannels = 4;  // dx, dy, dspeed, flag
inline constexpr std::size_t kFutureChannels = 3;   // x, y, flag
inline constexpr std::size_t kLaneChannels = 3;     // x, y, flag

enum class AgentCategory : std::uint8_t { kVehicle = 0, kPedestrian = 1, kCyclist = 2 };
inline constexpr std::size_t kNumAgentCategories = 3;

enum class LaneType : std::uint8_t { kStraight = 0, kIntersection = 1, kOther = 2 };
inline constexpr std::size_t kNumLaneTypes = 3;

std::string_view to_string(AgentCategory c);
std::string_view to_string(LaneType t);
AgentCategory parse_agent_category(std::string_view s);
LaneType parse_lane_type(std::string_view s);

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // radians, (-pi, pi]
  bool operator==(const Pose&) const = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct AgentTrack {
  AgentCategory category = AgentCategory::kVehicle;
  std::vector<Pose> poses;    // kTotalSteps entries, world frame
  std::vector<bool> observed; // kTotalSteps entries
  bool operator==(const AgentTrack&) const = default;
};

struct LanePolyline {
  LaneType lane_type = LaneType::kStraight;
  std::vector<Point2> points;  // world frame, metres
  bool operator==(const LanePolyline&) const = default;
};

struct RawScenario {
  std::string scenario_id;
  int timestep_hz = kTimestepHz;
  std::vector<AgentTrack> agents;
  std::vector<LanePolyline> lanes;
  std::size_t focal_index = 0;
  std::string city_tag;
  bool operator==(const RawScenario&) const = default;
};

/// Model input in the focal-agent frame (focal current pose at the origin,
/// heading along +x). Agent 0 is always the focal agent.
struct ProcessedScene {
  std::string scenario_id;
  std::string city_tag;
  Pose focal_world_pose;  // focal current pose in the world frame

  Tensor agent_history;  // [N x kHistorySteps x kHistoryChannels]
  Tensor agent_future;   // [N x kFutureSteps x kFutureChannels]
  Tensor lanes;          // [M x kLanePoints x kLaneChannels]
  Tensor agent_anchor;   // [N x 3] latest observed (x, y, theta)
  Tensor lane_anchor;    // [M x 3] centroid (x, y) and chord heading
  std::vector<AgentCategory> agent_category;
  std::vector<LaneType> lane_type;
  std::vector<std::uint8_t> agent_hist_valid;  // any flagged history step
  std::vector<std::uint8_t> agent_fut_valid;   // any flagged future step
  std::vector<std::uint8_t> lane_valid;        // any flagged point
  std::vector<std::size_t> source_agent;       // index into RawScenario::agents

  std::size_t num_agents() const { return agent_category.size(); }
  std::size_t num_lanes() const { return lane_type.size(); }
};

/// A lane chunk resampled to kLanePoints points.
struct LaneSegment {
  LaneType lane_type = LaneType::kStraight;
  std::array<Point2, kLanePoints> points{};  // centroid-relative
  Point2 centroid;
  double heading = 0.0;
  double arc_begin = 0.0;  // arc-length span within the source polyline
  double arc_end = 0.0;
  std::size_t source_lane = 0;
};

double wrap_angle(double theta);

/// Rigid transform taking world coordinates into the frame of `origin`.
struct FrameTransform {
  explicit FrameTransform(const Pose& origin);
  Point2 apply(Point2 p) const;
  Pose apply(const Pose& p) const;
  Pose origin;
  double c, s;
};

/// Per-step (dx, dy, dspeed, flag) features for one track's history.
/// `positions`/`observed` hold kHistorySteps entries already in the focal frame.
Tensor build_history_features(std::span<const Point2> positions,
                              const std::vector<bool>& observed);

/// Per-step (x, y, flag) future features relative to `current` (translation
/// only). `positions`/`observed` hold kFutureSteps entries.
Tensor build_future_features(std::span<const Point2> positions,
                             const std::vector<bool>& observed, Point2 current);

/// Splits each polyline by arc length into consecutive chunks of at most
/// `segment_length` metres and resamples each to kLanePoints points.
/// Zero-length polylines are skipped (reported through `skipped`).
std::vector<LaneSegment> segment_lanes(const std::vector<LanePolyline>& lanes,
                                       double segment_length = kSegmentLength,
                                       std::vector<std::size_t>* skipped = nullptr);

/// Full agent-centric preprocessing. Throws if the focal agent is not
/// observed at the current step.
ProcessedScene normalize_to_focal(const RawScenario& raw);

/// Focal-frame ground-truth future positions of agent `agent` (absolute,
/// not relative to the agent) with per-step validity.
void future_positions_focal_frame(const ProcessedScene& scene, std::size_t agent,
                                  std::vector<Point2>& positions, std::vector<bool>& valid);

}  // namespace trajmae
