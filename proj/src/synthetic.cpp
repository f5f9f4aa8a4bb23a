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

#include "trajmae/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace trajmae {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDt = 1.0 / kTimestepHz;
constexpr int kSubsteps = 10;

const std::vector<CityStyle>& styles() {
  static const std::vector<CityStyle> kStyles = {
      {"alpha", 6.0, 12.0, 12.0, 1.75, 0.2, 2.5, 2.5},
      {"bravo", 5.0, 10.0, 11.0, 1.75, 0.4, 2.0, 2.0},
      {"charlie", 7.0, 13.0, 13.0, 1.75, 0.1, 3.0, 3.0},
      {"delta", 9.0, 16.0, 15.0, 1.9, 0.5, 3.5, 3.5},
      {"echo", 4.0, 8.0, 10.0, 1.6, 0.6, 1.8, 1.5},
      {"foxtrot", 8.0, 14.0, 14.0, 1.85, 0.3, 3.0, 4.0},
  };
  return kStyles;
}

struct Arm {
  double phi;  // outward direction
  Point2 u;    // outward unit vector
  Point2 n;    // u rotated by +90 degrees
};

Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
Point2 operator*(double k, Point2 a) { return {k * a.x, k * a.y}; }

/// Speed as a function of route arc length.
using SpeedFn = std::function<double(double)>;

/// Integrates ds/dt = sign * v(s) over one timestep with RK4 substeps.
double advance(const SpeedFn& v, double s, double sign, double cap) {
  const double h = kDt / kSubsteps;
  for (int i = 0; i < kSubsteps; ++i) {
    const double k1 = v(s);
    const double k2 = v(std::min(s + sign * 0.5 * h * k1, cap));
    const double k3 = v(std::min(s + sign * 0.5 * h * k2, cap));
    const double k4 = v(std::min(s + sign * h * k3, cap));
    s = std::min(s + sign * h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0, cap);
  }
  return s;
}

struct Track {
  Route route;
  Maneuver maneuver = Maneuver::kStraight;
  SpeedProfile profile = SpeedProfile::kStraight;
  std::vector<double> s;  // kTotalSteps arc positions
};

class Intersection {
 public:
  Intersection(const CityStyle& style, double arm_length, std::size_t num_arms,
               std::size_t skipped_arm)
      : style_(style), arm_length_(arm_length) {
    for (std::size_t k = 0; k < 4; ++k) {
      if (num_arms == 3 && k == skipped_arm) continue;
      const double phi = static_cast<double>(k) * kPi / 2.0;
      arms_.push_back({phi, {std::cos(phi), std::sin(phi)}, {-std::sin(phi), std::cos(phi)}});
    }
  }

  const std::vector<Arm>& arms() const { return arms_; }

  /// Index of the arm reached from `from` with `m`, or -1.
  int exit_arm(std::size_t from, Maneuver m) const {
    double target = arms_[from].phi;
    if (m == Maneuver::kStraight) target += kPi;
    if (m == Maneuver::kRight) target += kPi / 2.0;
    if (m == Maneuver::kLeft) target -= kPi / 2.0;
    for (std::size_t j = 0; j < arms_.size(); ++j) {
      if (std::abs(wrap_angle(arms_[j].phi - target)) < 1e-6) return static_cast<int>(j);
    }
    return -1;
  }

  std::vector<Maneuver> maneuvers(std::size_t from) const {
    std::vector<Maneuver> out;
    for (Maneuver m : {Maneuver::kStraight, Maneuver::kLeft, Maneuver::kRight}) {
      if (exit_arm(from, m) >= 0) out.push_back(m);
    }
    return out;
  }

  /// Incoming lane, connector, outgoing lane. Requires a valid maneuver.
  Route route(std::size_t from, Maneuver m) const {
    const Arm& a = arms_[from];
    const Arm& b = arms_[static_cast<std::size_t>(exit_arm(from, m))];
    const double s = style_.box_half;
    const double w = style_.lane_width;
    Route r;
    const double h_in = std::atan2(-a.u.y, -a.u.x);
    r.append_line((s + arm_length_) * a.u + w * a.n, h_in, arm_length_);
    const Point2 p0 = s * a.u + w * a.n;
    switch (m) {
      case Maneuver::kStraight: r.append_line(p0, h_in, 2.0 * s); break;
      case Maneuver::kRight: {
        const double radius = s - w;
        r.append_arc(p0, h_in, kPi / 2.0 * radius, -1.0 / radius);
        break;
      }
      case Maneuver::kLeft: {
        const double radius = s + w;
        r.append_arc(p0, h_in, kPi / 2.0 * radius, 1.0 / radius);
        break;
      }
    }
    r.append_line(s * b.u + (-w) * b.n, b.phi, arm_length_);
    return r;
  }

  double connector_radius(Maneuver m) const {
    return m == Maneuver::kLeft ? style_.box_half + style_.lane_width
                                : style_.box_half - style_.lane_width;
  }

  std::vector<LanePolyline> lanes() const {
    std::vector<LanePolyline> out;
    const double s = style_.box_half;
    const double w = style_.lane_width;
    for (const Arm& a : arms_) {
      out.push_back({LaneType::kStraight, {(s + arm_length_) * a.u + w * a.n, s * a.u + w * a.n}});
      out.push_back({LaneType::kStraight, {s * a.u + (-w) * a.n, (s + arm_length_) * a.u + (-w) * a.n}});
    }
    for (std::size_t i = 0; i < arms_.size(); ++i) {
      for (Maneuver m : maneuvers(i)) {
        const RoutePiece& c = route(i, m).pieces()[1];
        const auto n = static_cast<std::size_t>(std::ceil(c.length)) + 1;
        LanePolyline lane{LaneType::kIntersection, {}};
        Route piece;
        if (c.is_arc) {
          piece.append_arc(c.start, c.heading, c.length, c.curvature);
        } else {
          piece.append_line(c.start, c.heading, c.length);
        }
        const std::size_t count = c.is_arc ? std::max<std::size_t>(n, 2) : 2;
        for (std::size_t k = 0; k < count; ++k) {
          const Pose p = piece.at(c.length * static_cast<double>(k) / (count - 1));
          lane.points.push_back({p.x, p.y});
        }
        out.push_back(std::move(lane));
      }
    }
    return out;
  }

  /// Parallel kOther lane beside arm `k`, outside its travel lanes.
  LanePolyline side_lane(std::size_t k, bool incoming_side) const {
    const Arm& a = arms_[k];
    const double s = style_.box_half;
    const double off = (incoming_side ? 3.0 : -3.0) * style_.lane_width;
    return {LaneType::kOther, {(s + arm_length_) * a.u + off * a.n, s * a.u + off * a.n}};
  }

  double stop_line() const { return arm_length_ - 1.0; }

 private:
  const CityStyle& style_;
  double arm_length_;
  std::vector<Arm> arms_;
};

SpeedFn speed_profile(SpeedProfile profile, double v0, double s_enter, double s_exit,
                      double v_turn, double decel) {
  switch (profile) {
    case SpeedProfile::kStraight:
      return [v0](double) { return v0; };
    case SpeedProfile::kTurn:
      return [=](double s) {
        if (s < s_enter) return std::min(v0, std::sqrt(v_turn * v_turn + 2.0 * decel * (s_enter - s)));
        if (s <= s_exit) return v_turn;
        return std::min(v0, std::sqrt(v_turn * v_turn + 2.0 * decel * (s - s_exit)));
      };
    case SpeedProfile::kStop:
      return [=](double s) {
        return std::min(v0, std::sqrt(2.0 * decel * std::max(0.0, s_enter - s)));
      };
  }
  throw Error("invalid speed profile");
}

/// Arc positions for all kTotalSteps given the current-step position.
std::vector<double> integrate(const SpeedFn& v, double s_cur, double cap) {
  std::vector<double> s(kTotalSteps);
  s[kCurrentStep] = s_cur;
  for (std::size_t t = kCurrentStep; t-- > 0;) {
    s[t] = advance(v, s[t + 1], -1.0, std::numeric_limits<double>::infinity());
  }
  for (std::size_t t = kCurrentStep + 1; t < kTotalSteps; ++t) {
    s[t] = advance(v, s[t - 1], 1.0, cap);
  }
  return s;
}

Track make_vehicle_track(const Intersection& x, const CityStyle& style, double arm_length,
                         std::size_t arm, Maneuver m, SpeedProfile profile, double v0,
                         double s_cur) {
  Track tr;
  tr.route = x.route(arm, m);
  tr.maneuver = m;
  tr.profile = profile;
  const double s_enter = arm_length;
  const double s_exit = arm_length + tr.route.pieces()[1].length;
  const double v_turn = std::min(v0, std::sqrt(style.lateral_accel * x.connector_radius(m)));
  const double stop_at = x.stop_line();
  const double cap = profile == SpeedProfile::kStop ? stop_at
                                                    : std::numeric_limits<double>::infinity();
  const SpeedFn v = speed_profile(profile, v0, profile == SpeedProfile::kStop ? stop_at : s_enter,
                                  s_exit, v_turn, style.decel);
  tr.s = integrate(v, s_cur, cap);
  return tr;
}

Pose transform_pose(const Pose& p, double rot, Point2 shift) {
  const double c = std::cos(rot), s = std::sin(rot);
  return {c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y, wrap_angle(p.theta + rot)};
}

}  // namespace

const CityStyle& city_style(const std::string& tag) {
  for (const auto& s : styles()) {
    if (s.tag == tag) return s;
  }
  throw Error("unknown city tag '" + tag + "'");
}

const std::vector<std::string>& train_city_tags() {
  static const std::vector<std::string> kTags = {"alpha", "bravo", "charlie"};
  return kTags;
}

const std::vector<std::string>& shift_city_tags() {
  static const std::vector<std::string> kTags = {"delta", "echo", "foxtrot"};
  return kTags;
}

void validate(const GenConfig& c) {
  if (c.min_agents < 2 || c.max_agents > 16 || c.min_agents > c.max_agents) {
    throw Error("agent counts must satisfy 2 <= min_agents <= max_agents <= 16");
  }
  if (c.min_lanes < 4 || c.max_lanes > 48 || c.min_lanes > c.max_lanes) {
    throw Error("lane counts must satisfy 4 <= min_lanes <= max_lanes <= 48");
  }
  // A 3-arm intersection has 12 base polylines and at most 6 side lanes; a
  // 4-arm one has 20 and at most 8.
  if (c.max_lanes < 12) throw Error("max_lanes < 12 cannot hold a 3-arm intersection");
  if (c.min_lanes > 28) throw Error("min_lanes > 28 exceeds a 4-arm intersection");
  if (!(c.arm_length >= 10.0 && c.arm_length <= 140.0)) {
    throw Error("arm_length must be in [10, 140] m");
  }
  if (c.straight_weight < 0 || c.turn_weight < 0 || c.stop_weight < 0 ||
      c.straight_weight + c.turn_weight + c.stop_weight <= 0) {
    throw Error("motion mix weights must be non-negative with a positive sum");
  }
  if (!(c.noise_sigma >= 0.0)) throw Error("noise_sigma must be >= 0");
  if (c.city_tags.empty()) throw Error("city_tags must not be empty");
  for (const auto& t : c.city_tags) city_style(t);
}

void Route::append_line(Point2 start, double heading, double length) {
  pieces_.push_back({false, start, heading, length, 0.0});
  total_ += length;
}

void Route::append_arc(Point2 start, double heading, double length, double curvature) {
  pieces_.push_back({true, start, heading, length, curvature});
  total_ += length;
}

Pose Route::at(double s) const {
  if (pieces_.empty()) throw Error("empty route");
  std::size_t i = 0;
  double base = 0.0;
  if (s >= 0.0) {
    while (i + 1 < pieces_.size() && s > base + pieces_[i].length) base += pieces_[i++].length;
  }
  const RoutePiece& p = pieces_[i];
  double t = s - base;
  const bool beyond = i + 1 == pieces_.size() && t > p.length;
  if (p.is_arc && (t < 0.0 || beyond)) {
    // Extrapolate along the tangent at the nearer end.
    const double t_end = t < 0.0 ? 0.0 : p.length;
    Route tmp;
    tmp.append_arc(p.start, p.heading, p.length, p.curvature);
    const Pose e = tmp.at(t_end);
    const double d = t - t_end;
    return {e.x + d * std::cos(e.theta), e.y + d * std::sin(e.theta), e.theta};
  }
  if (!p.is_arc) {
    return {p.start.x + t * std::cos(p.heading), p.start.y + t * std::sin(p.heading),
            wrap_angle(p.heading)};
  }
  const double h = p.heading + p.curvature * t;
  return {p.start.x + (std::sin(h) - std::sin(p.heading)) / p.curvature,
          p.start.y - (std::cos(h) - std::cos(p.heading)) / p.curvature, wrap_angle(h)};
}

GeneratedScenario generate_synthetic_detailed(const GenConfig& config, RngStream& rng,
                                              const std::string& scenario_id) {
  validate(config);
  const std::string& tag = config.city_tags[rng.uniform_index(config.city_tags.size())];
  const CityStyle& style = city_style(tag);
  const double L = config.arm_length;

  // Arm count must leave room for the requested lane budget.
  std::size_t arms = rng.bernoulli(style.three_arm_prob) ? 3 : 4;
  if (config.max_lanes < 20) arms = 3;
  if (config.min_lanes > 18) arms = 4;
  const std::size_t skipped = rng.uniform_index(4);
  const Intersection x(style, L, arms, skipped);

  GeneratedScenario out;
  RawScenario& raw = out.scenario;
  raw.scenario_id = scenario_id;
  raw.city_tag = tag;
  raw.lanes = x.lanes();
  const std::size_t base = raw.lanes.size();
  const std::size_t lo = std::max(config.min_lanes, base);
  const std::size_t hi = std::min(config.max_lanes, base + 2 * arms);
  if (lo > hi) throw Error("lane budget infeasible for the generated intersection");
  const std::size_t target = lo + rng.uniform_index(hi - lo + 1);
  for (std::size_t k = 0; raw.lanes.size() < target; ++k) {
    raw.lanes.push_back(x.side_lane(k / 2 % arms, k % 2 == 0));
  }

  std::vector<Track> tracks;
  std::vector<AgentCategory> categories;
  std::vector<std::vector<bool>> observed;

  // Focal agent.
  {
    const double w_sum = config.straight_weight + config.turn_weight + config.stop_weight;
    const double u = rng.uniform() * w_sum;
    SpeedProfile profile = u < config.straight_weight ? SpeedProfile::kStraight
                           : u < config.straight_weight + config.turn_weight
                               ? SpeedProfile::kTurn
                               : SpeedProfile::kStop;
    const std::size_t arm = rng.uniform_index(arms);
    std::vector<Maneuver> options;
    for (Maneuver m : x.maneuvers(arm)) {
      const bool turn = m != Maneuver::kStraight;
      if (profile == SpeedProfile::kStop || turn == (profile == SpeedProfile::kTurn)) {
        options.push_back(m);
      }
    }
    if (options.empty()) {  // straight missing on a 3-arm stem
      profile = SpeedProfile::kTurn;
      options = x.maneuvers(arm);
    }
    const Maneuver m = options[rng.uniform_index(options.size())];
    const double v0 = rng.uniform(style.speed_min, style.speed_max);
    double s_cur = 0.0;
    switch (profile) {
      case SpeedProfile::kStraight: s_cur = L - rng.uniform(-10.0, 4.0 * v0); break;
      case SpeedProfile::kTurn: s_cur = L - rng.uniform(-6.0, 3.0 * v0); break;
      case SpeedProfile::kStop: s_cur = x.stop_line() - rng.uniform(2.0, 35.0); break;
    }
    tracks.push_back(make_vehicle_track(x, style, L, arm, m, profile, v0, s_cur));
    categories.push_back(AgentCategory::kVehicle);
    observed.emplace_back(kTotalSteps, true);
  }

  const std::size_t num_agents =
      config.min_agents + rng.uniform_index(config.max_agents - config.min_agents + 1);
  while (tracks.size() < num_agents) {
    const double kind = rng.uniform();
    const std::size_t arm = rng.uniform_index(arms);
    if (kind < 0.1) {
      // Pedestrian on the outer walkway, along the arm.
      const Arm& a = x.arms()[arm];
      const bool inward = rng.bernoulli(0.5);
      const double off = 4.0 * style.lane_width;
      Track tr;
      const Point2 far = (style.box_half + L) * a.u + off * a.n;
      const Point2 near = style.box_half * a.u + off * a.n;
      const double h = inward ? std::atan2(-a.u.y, -a.u.x) : a.phi;
      tr.route.append_line(inward ? far : near, h, L);
      const double v0 = rng.uniform(1.0, 1.8);
      tr.s = integrate([v0](double) { return v0; }, rng.uniform(5.0, L - 5.0),
                       std::numeric_limits<double>::infinity());
      tracks.push_back(std::move(tr));
      categories.push_back(AgentCategory::kPedestrian);
    } else {
      const bool cyclist = kind < 0.2;
      const auto options = x.maneuvers(arm);
      const Maneuver m = options[rng.uniform_index(options.size())];
      SpeedProfile profile = m == Maneuver::kStraight ? SpeedProfile::kStraight : SpeedProfile::kTurn;
      if (rng.bernoulli(0.2)) profile = SpeedProfile::kStop;
      const double v0 = cyclist ? rng.uniform(3.0, 6.0) : rng.uniform(style.speed_min, style.speed_max);
      const double s_cur = profile == SpeedProfile::kStop
                               ? x.stop_line() - rng.uniform(0.5, 30.0)
                               : rng.uniform(0.15 * L, 1.8 * L + 20.0);
      tracks.push_back(make_vehicle_track(x, style, L, arm, m, profile, v0, s_cur));
      categories.push_back(cyclist ? AgentCategory::kCyclist : AgentCategory::kVehicle);
    }
    std::vector<bool> obs(kTotalSteps, true);
    if (rng.bernoulli(0.4)) {
      const std::size_t t_in = rng.uniform_index(45);
      const std::size_t t_out =
          kTotalSteps - 1 - (rng.bernoulli(0.3) ? rng.uniform_index(50) : 0);
      for (std::size_t t = 0; t < kTotalSteps; ++t) obs[t] = t >= t_in && t <= t_out;
    }
    observed.push_back(std::move(obs));
  }

  const double rot = config.random_global_transform ? rng.uniform(-kPi, kPi) : 0.0;
  const Point2 shift = config.random_global_transform
                           ? Point2{rng.uniform(-500.0, 500.0), rng.uniform(-500.0, 500.0)}
                           : Point2{};
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    AgentTrack a;
    a.category = categories[i];
    a.observed = observed[i];
    for (std::size_t t = 0; t < kTotalSteps; ++t) {
      Pose p = tracks[i].route.at(tracks[i].s[t]);
      if (config.noise_sigma > 0.0) {
        p.x += rng.normal(0.0, config.noise_sigma);
        p.y += rng.normal(0.0, config.noise_sigma);
      }
      a.poses.push_back(transform_pose(p, rot, shift));
    }
    raw.agents.push_back(std::move(a));
  }
  for (auto& lane : raw.lanes) {
    for (auto& p : lane.points) {
      const Pose q = transform_pose({p.x, p.y, 0.0}, rot, shift);
      p = {q.x, q.y};
    }
  }
  raw.focal_index = 0;

  for (const RoutePiece& piece : tracks[0].route.pieces()) {
    const Pose start = transform_pose({piece.start.x, piece.start.y, piece.heading}, rot, shift);
    if (piece.is_arc) {
      out.focal_route.append_arc({start.x, start.y}, start.theta, piece.length, piece.curvature);
    } else {
      out.focal_route.append_line({start.x, start.y}, start.theta, piece.length);
    }
  }
  out.focal_maneuver = tracks[0].maneuver;
  out.focal_profile = tracks[0].profile;
  return out;
}

RawScenario generate_synthetic_scenario(const GenConfig& config, RngStream& rng,
                                        const std::string& scenario_id) {
  return generate_synthetic_detailed(config, rng, scenario_id).scenario;
}

bool is_turn_scene(const RawScenario& scenario) {
  const AgentTrack& f = scenario.agents.at(scenario.focal_index);
  for (std::size_t t = kTotalSteps; t-- > kHistorySteps;) {
    if (f.observed[t]) {
      return std::abs(wrap_angle(f.poses[t].theta - f.poses[kCurrentStep].theta)) > kPi / 6.0;
    }
  }
  return false;
}

}  // namespace trajmae
