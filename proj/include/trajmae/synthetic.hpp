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

// Synthetic intersection scenarios.
//
// Each scene is a 3- or 4-arm intersection. Every arm carries one incoming
// and one outgoing lane; connectors are straight lines or quarter arcs.
// Agents follow lane routes with speed given as a function of route arc
// length, so positions stay on the centerline up to the added noise.

#pragma once

#include <string>
#include <vector>

#include "trajmae/rng.hpp"
#include "trajmae/scene.hpp"

namespace trajmae {

enum class Maneuver { kStraight, kLeft, kRight };
enum class SpeedProfile { kStraight, kTurn, kStop };

/// Geometry and speed parameters attached to a city tag.
struct CityStyle {
  std::string tag;
  double speed_min;      // m/s
  double speed_max;      // m/s
  double box_half;       // distance from centre to stop line, m
  double lane_width;     // lane offset from arm axis, m
  double three_arm_prob;
  double lateral_accel;  // caps turning speed, m/s^2
  double decel;          // m/s^2
};

/// Known tags: alpha, bravo, charlie (training styles) and delta, echo,
/// foxtrot (shifted styles).
const CityStyle& city_style(const std::string& tag);
const std::vector<std::string>& train_city_tags();
const std::vector<std::string>& shift_city_tags();

struct GenConfig {
  std::size_t min_agents = 4;
  std::size_t max_agents = 10;
  std::size_t min_lanes = 12;  // lane polylines, before segmentation
  std::size_t max_lanes = 24;
  double arm_length = 50.0;
  // Focal speed-profile mix; normalized internally.
  double straight_weight = 0.35;
  double turn_weight = 0.5;
  double stop_weight = 0.15;
  double noise_sigma = 0.05;  // m, per-step position noise on all agents
  std::vector<std::string> city_tags = train_city_tags();
  bool random_global_transform = true;
};

/// Throws Error on infeasible settings.
void validate(const GenConfig& config);

/// One piece of a route: a segment or a circular arc.
struct RoutePiece {
  bool is_arc = false;
  Point2 start;
  double heading = 0.0;   // at start
  double length = 0.0;
  double curvature = 0.0; // signed, 1/m; positive turns left
};

/// Piecewise line/arc path parameterized by arc length. Queries outside
/// [0, length()] extrapolate along the end tangents.
class Route {
 public:
  void append_line(Point2 start, double heading, double length);
  void append_arc(Point2 start, double heading, double length, double curvature);
  double length() const { return total_; }
  Pose at(double s) const;
  const std::vector<RoutePiece>& pieces() const { return pieces_; }

 private:
  std::vector<RoutePiece> pieces_;
  double total_ = 0.0;
};

struct GeneratedScenario {
  RawScenario scenario;
  Route focal_route;            // world frame
  Maneuver focal_maneuver = Maneuver::kStraight;
  SpeedProfile focal_profile = SpeedProfile::kStraight;
};

GeneratedScenario generate_synthetic_detailed(const GenConfig& config, RngStream& rng,
                                              const std::string& scenario_id);
RawScenario generate_synthetic_scenario(const GenConfig& config, RngStream& rng,
                                        const std::string& scenario_id = "synthetic");

/// True if the focal heading changes by more than pi/6 between the current
/// step and its last observed future step.
bool is_turn_scene(const RawScenario& scenario);

}  // namespace trajmae
