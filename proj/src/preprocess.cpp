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

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "trajmae/scene.hpp"

namespace trajmae {

namespace {

constexpr double kEps = 1e-9;

double hypot2(Point2 a, Point2 b) { return std::hypot(b.x - a.x, b.y - a.y); }

Point2 lerp(Point2 a, Point2 b, double t) {
  return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
}

}  // namespace

std::string_view to_string(AgentCategory c) {
  switch (c) {
    case AgentCategory::kVehicle: return "vehicle";
    case AgentCategory::kPedestrian: return "pedestrian";
    case AgentCategory::kCyclist: return "cyclist";
  }
  throw Error("invalid agent category");
}

std::string_view to_string(LaneType t) {
  switch (t) {
    case LaneType::kStraight: return "straight";
    case LaneType::kIntersection: return "intersection";
    case LaneType::kOther: return "other";
  }
  throw Error("invalid lane type");
}

AgentCategory parse_agent_category(std::string_view s) {
  if (s == "vehicle") return AgentCategory::kVehicle;
  if (s == "pedestrian") return AgentCategory::kPedestrian;
  if (s == "cyclist") return AgentCategory::kCyclist;
  throw Error("unknown agent category '" + std::string(s) + "'");
}

LaneType parse_lane_type(std::string_view s) {
  if (s == "straight") return LaneType::kStraight;
  if (s == "intersection") return LaneType::kIntersection;
  if (s == "other") return LaneType::kOther;
  throw Error("unknown lane type '" + std::string(s) + "'");
}

double wrap_angle(double theta) {
  constexpr double kPi = std::numbers::pi;
  double r = std::remainder(theta, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

FrameTransform::FrameTransform(const Pose& o)
    : origin(o), c(std::cos(o.theta)), s(std::sin(o.theta)) {}

Point2 FrameTransform::apply(Point2 p) const {
  const double dx = p.x - origin.x;
  const double dy = p.y - origin.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Pose FrameTransform::apply(const Pose& p) const {
  const Point2 q = apply(Point2{p.x, p.y});
  return {q.x, q.y, wrap_angle(p.theta - origin.theta)};
}

Tensor build_history_features(std::span<const Point2> positions,
                              const std::vector<bool>& observed) {
  if (positions.size() != kHistorySteps || observed.size() != kHistorySteps) {
    throw Error("history features need " + std::to_string(kHistorySteps) + " steps");
  }
  Tensor out({kHistorySteps, kHistoryChannels});
  double prev_speed = 0.0;
  bool prev_speed_ok = false;
  for (std::size_t t = 1; t < kHistorySteps; ++t) {
    if (!(observed[t] && observed[t - 1])) {
      prev_speed_ok = false;
      continue;
    }
    const double dx = positions[t].x - positions[t - 1].x;
    const double dy = positions[t].y - positions[t - 1].y;
    const double speed = std::hypot(dx, dy) * kTimestepHz;
    out(t, 0) = dx;
    out(t, 1) = dy;
    out(t, 2) = prev_speed_ok ? speed - prev_speed : 0.0;
    out(t, 3) = 1.0;
    prev_speed = speed;
    prev_speed_ok = true;
  }
  return out;
}

Tensor build_future_features(std::span<const Point2> positions,
                             const std::vector<bool>& observed, Point2 current) {
  if (positions.size() != kFutureSteps || observed.size() != kFutureSteps) {
    throw Error("future features need " + std::to_string(kFutureSteps) + " steps");
  }
  Tensor out({kFutureSteps, kFutureChannels});
  for (std::size_t t = 0; t < kFutureSteps; ++t) {
    if (!observed[t]) continue;
    out(t, 0) = positions[t].x - current.x;
    out(t, 1) = positions[t].y - current.y;
    out(t, 2) = 1.0;
  }
  return out;
}

std::vector<LaneSegment> segment_lanes(const std::vector<LanePolyline>& lanes,
                                       double segment_length,
                                       std::vector<std::size_t>* skipped) {
  if (!(segment_length > 0.0)) throw Error("segment_length must be positive");
  std::vector<LaneSegment> out;
  for (std::size_t li = 0; li < lanes.size(); ++li) {
    const auto& pts = lanes[li].points;
    if (pts.size() < 2) throw Error("lane " + std::to_string(li) + " has fewer than 2 points");
    std::vector<double> cum(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + hypot2(pts[i - 1], pts[i]);
    const double total = cum.back();
    if (total <= kEps) {
      if (skipped) skipped->push_back(li);
      continue;
    }

    // Point at arc length s; `edge` is a monotone cursor.
    std::size_t edge = 0;
    auto at = [&](double s) {
      while (edge + 2 < pts.size() && cum[edge + 1] < s) ++edge;
      const double len = cum[edge + 1] - cum[edge];
      const double t = len > 0.0 ? std::clamp((s - cum[edge]) / len, 0.0, 1.0) : 0.0;
      return lerp(pts[edge], pts[edge + 1], t);
    };

    const auto chunks = static_cast<std::size_t>(
        std::max(1.0, std::ceil(total / segment_length - kEps)));
    for (std::size_t k = 0; k < chunks; ++k) {
      LaneSegment seg;
      seg.lane_type = lanes[li].lane_type;
      seg.source_lane = li;
      seg.arc_begin = static_cast<double>(k) * segment_length;
      seg.arc_end = k + 1 == chunks ? total : static_cast<double>(k + 1) * segment_length;
      std::array<Point2, kLanePoints> abs{};
      double cx = 0.0, cy = 0.0;
      for (std::size_t p = 0; p < kLanePoints; ++p) {
        const double s = seg.arc_begin + (seg.arc_end - seg.arc_begin) *
                                             static_cast<double>(p) / (kLanePoints - 1);
        abs[p] = at(s);
        cx += abs[p].x;
        cy += abs[p].y;
      }
      seg.centroid = {cx / kLanePoints, cy / kLanePoints};
      for (std::size_t p = 0; p < kLanePoints; ++p) {
        seg.points[p] = {abs[p].x - seg.centroid.x, abs[p].y - seg.centroid.y};
      }
      Point2 chord{abs.back().x - abs.front().x, abs.back().y - abs.front().y};
      if (std::hypot(chord.x, chord.y) <= kEps) {
        chord = {abs[1].x - abs[0].x, abs[1].y - abs[0].y};
      }
      seg.heading = std::atan2(chord.y, chord.x);
      out.push_back(seg);
    }
  }
  return out;
}

ProcessedScene normalize_to_focal(const RawScenario& raw) {
  if (raw.focal_index >= raw.agents.size()) {
    throw Error("focal_index " + std::to_string(raw.focal_index) + " out of range");
  }
  for (std::size_t i = 0; i < raw.agents.size(); ++i) {
    const auto& a = raw.agents[i];
    if (a.poses.size() != kTotalSteps || a.observed.size() != kTotalSteps) {
      throw Error("agent " + std::to_string(i) + " must have " + std::to_string(kTotalSteps) +
                  " poses and observed flags");
    }
  }
  const AgentTrack& focal = raw.agents[raw.focal_index];
  if (!focal.observed[kCurrentStep]) {
    throw Error("focal agent is not observed at the current timestep");
  }

  ProcessedScene scene;
  scene.scenario_id = raw.scenario_id;
  scene.city_tag = raw.city_tag;
  scene.focal_world_pose = focal.poses[kCurrentStep];
  const FrameTransform frame(scene.focal_world_pose);

  // Focal first, then the rest in file order.
  std::vector<std::size_t> order{raw.focal_index};
  for (std::size_t i = 0; i < raw.agents.size(); ++i) {
    if (i != raw.focal_index) order.push_back(i);
  }

  struct Kept {
    std::size_t source;
    Pose anchor;
    std::vector<Point2> local;
  };
  std::vector<Kept> kept;
  for (std::size_t src : order) {
    const AgentTrack& a = raw.agents[src];
    std::size_t latest = kHistorySteps;
    for (std::size_t t = kHistorySteps; t-- > 0;) {
      if (a.observed[t]) {
        latest = t;
        break;
      }
    }
    if (latest == kHistorySteps) continue;  // never observed in history
    Kept k{src, frame.apply(a.poses[latest]), std::vector<Point2>(kTotalSteps)};
    if (src != raw.focal_index && std::hypot(k.anchor.x, k.anchor.y) > kSceneRadius) continue;
    for (std::size_t t = 0; t < kTotalSteps; ++t) {
      k.local[t] = frame.apply(Point2{a.poses[t].x, a.poses[t].y});
    }
    kept.push_back(std::move(k));
  }
  // The focal anchor is the origin by construction; pin it exactly.
  kept.front().anchor = Pose{0.0, 0.0, 0.0};

  const std::size_t n = kept.size();
  scene.agent_history = Tensor({n, kHistorySteps, kHistoryChannels});
  scene.agent_future = Tensor({n, kFutureSteps, kFutureChannels});
  scene.agent_anchor = Tensor({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    const Kept& k = kept[i];
    const AgentTrack& a = raw.agents[k.source];
    const std::vector<bool> hist_obs(a.observed.begin(), a.observed.begin() + kHistorySteps);
    const std::vector<bool> fut_obs(a.observed.begin() + kHistorySteps, a.observed.end());
    const Tensor h = build_history_features(
        std::span<const Point2>(k.local.data(), kHistorySteps), hist_obs);
    const Tensor f = build_future_features(
        std::span<const Point2>(k.local.data() + kHistorySteps, kFutureSteps), fut_obs,
        Point2{k.anchor.x, k.anchor.y});
    std::copy(h.values().begin(), h.values().end(),
              scene.agent_history.data() + i * h.size());
    std::copy(f.values().begin(), f.values().end(), scene.agent_future.data() + i * f.size());
    scene.agent_anchor(i, 0) = k.anchor.x;
    scene.agent_anchor(i, 1) = k.anchor.y;
    scene.agent_anchor(i, 2) = k.anchor.theta;
    scene.agent_category.push_back(a.category);
    bool hv = false, fv = false;
    for (std::size_t t = 0; t < kHistorySteps; ++t) hv |= h(t, 3) != 0.0;
    for (std::size_t t = 0; t < kFutureSteps; ++t) fv |= f(t, 2) != 0.0;
    scene.agent_hist_valid.push_back(hv);
    scene.agent_fut_valid.push_back(fv);
    scene.source_agent.push_back(k.source);
  }

  std::vector<LanePolyline> local_lanes = raw.lanes;
  for (auto& lane : local_lanes) {
    for (auto& p : lane.points) p = frame.apply(p);
  }
  std::vector<std::size_t> skipped;
  std::vector<LaneSegment> segs = segment_lanes(local_lanes, kSegmentLength, &skipped);
  for (std::size_t li : skipped) {
    std::cerr << "warning: scenario " << raw.scenario_id << ": lane " << li
              << " has zero length and was skipped\n";
  }
  std::erase_if(segs, [](const LaneSegment& s) {
    return std::hypot(s.centroid.x, s.centroid.y) > kSceneRadius;
  });
  const std::size_t m = segs.size();
  scene.lanes = Tensor({m, kLanePoints, kLaneChannels});
  scene.lane_anchor = Tensor({m, 3});
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t p = 0; p < kLanePoints; ++p) {
      double* row = scene.lanes.data() + (j * kLanePoints + p) * kLaneChannels;
      row[0] = segs[j].points[p].x;
      row[1] = segs[j].points[p].y;
      row[2] = 1.0;
    }
    scene.lane_anchor(j, 0) = segs[j].centroid.x;
    scene.lane_anchor(j, 1) = segs[j].centroid.y;
    scene.lane_anchor(j, 2) = segs[j].heading;
    scene.lane_type.push_back(segs[j].lane_type);
    scene.lane_valid.push_back(1);
  }
  return scene;
}

void future_positions_focal_frame(const ProcessedScene& scene, std::size_t agent,
                                  std::vector<Point2>& positions, std::vector<bool>& valid) {
  if (agent >= scene.num_agents()) throw Error("agent index out of range");
  positions.assign(kFutureSteps, Point2{});
  valid.assign(kFutureSteps, false);
  const double ax = scene.agent_anchor(agent, 0);
  const double ay = scene.agent_anchor(agent, 1);
  for (std::size_t t = 0; t < kFutureSteps; ++t) {
    const double* row = scene.agent_future.data() + (agent * kFutureSteps + t) * kFutureChannels;
    if (row[2] == 0.0) continue;
    positions[t] = {ax + row[0], ay + row[1]};
    valid[t] = true;
  }
}

}  // namespace trajmae
