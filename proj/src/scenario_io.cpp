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

#include "trajmae/scenario_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace trajmae {

namespace {

using json = nlohmann::json;

const json& field(const json& obj, const std::string& ptr, const char* key) {
  if (!obj.is_object()) throw SchemaError(ptr, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(ptr + "/" + key, "missing required field");
  return *it;
}

const json& array_field(const json& obj, const std::string& ptr, const char* key) {
  const json& v = field(obj, ptr, key);
  if (!v.is_array()) throw SchemaError(ptr + "/" + key, "expected an array");
  return v;
}

std::string string_field(const json& obj, const std::string& ptr, const char* key) {
  const json& v = field(obj, ptr, key);
  if (!v.is_string()) throw SchemaError(ptr + "/" + key, "expected a string");
  return v.get<std::string>();
}

double number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw SchemaError(ptr, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw SchemaError(ptr, "expected a finite number");
  return d;
}

std::size_t index_field(const json& obj, const std::string& ptr, const char* key) {
  const json& v = field(obj, ptr, key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw SchemaError(ptr + "/" + key, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

AgentTrack parse_agent(const json& a, const std::string& ptr) {
  AgentTrack track;
  try {
    track.category = parse_agent_category(string_field(a, ptr, "category"));
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(ptr + "/category", e.what());
  }
  const json& poses = array_field(a, ptr, "poses");
  const json& observed = array_field(a, ptr, "observed");
  if (poses.size() != kTotalSteps) {
    throw SchemaError(ptr + "/poses", "expected " + std::to_string(kTotalSteps) + " poses, got " +
                                          std::to_string(poses.size()));
  }
  if (observed.size() != kTotalSteps) {
    throw SchemaError(ptr + "/observed", "expected " + std::to_string(kTotalSteps) +
                                             " flags, got " + std::to_string(observed.size()));
  }
  for (std::size_t t = 0; t < kTotalSteps; ++t) {
    const std::string pp = ptr + "/poses/" + std::to_string(t);
    const json& p = poses[t];
    if (!p.is_array() || p.size() != 3) throw SchemaError(pp, "expected [x, y, theta]");
    track.poses.push_back({number(p[0], pp + "/0"), number(p[1], pp + "/1"),
                           number(p[2], pp + "/2")});
    const json& o = observed[t];
    if (!o.is_boolean()) {
      throw SchemaError(ptr + "/observed/" + std::to_string(t), "expected a boolean");
    }
    track.observed.push_back(o.get<bool>());
  }
  return track;
}

LanePolyline parse_lane(const json& l, const std::string& ptr) {
  LanePolyline lane;
  try {
    lane.lane_type = parse_lane_type(string_field(l, ptr, "lane_type"));
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(ptr + "/lane_type", e.what());
  }
  const json& pts = array_field(l, ptr, "points");
  if (pts.size() < 2) throw SchemaError(ptr + "/points", "expected at least 2 points");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::string pp = ptr + "/points/" + std::to_string(i);
    if (!pts[i].is_array() || pts[i].size() != 2) throw SchemaError(pp, "expected [x, y]");
    lane.points.push_back({number(pts[i][0], pp + "/0"), number(pts[i][1], pp + "/1")});
  }
  return lane;
}

}  // namespace

std::string scenario_to_json(const RawScenario& s) {
  json j;
  j["scenario_id"] = s.scenario_id;
  j["hz"] = s.timestep_hz;
  j["focal_index"] = s.focal_index;
  j["city_tag"] = s.city_tag;
  json agents = json::array();
  for (const auto& a : s.agents) {
    json poses = json::array();
    for (const auto& p : a.poses) poses.push_back({p.x, p.y, p.theta});
    json observed = json::array();
    for (bool o : a.observed) observed.push_back(o);
    agents.push_back({{"category", to_string(a.category)},
                      {"poses", std::move(poses)},
                      {"observed", std::move(observed)}});
  }
  j["agents"] = std::move(agents);
  json lanes = json::array();
  for (const auto& l : s.lanes) {
    json pts = json::array();
    for (const auto& p : l.points) pts.push_back({p.x, p.y});
    lanes.push_back({{"lane_type", to_string(l.lane_type)}, {"points", std::move(pts)}});
  }
  j["lanes"] = std::move(lanes);
  return j.dump() + "\n";
}

RawScenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
  RawScenario s;
  s.scenario_id = string_field(j, "", "scenario_id");
  {
    const json& hz = field(j, "", "hz");
    if (!hz.is_number_integer() || hz.get<long long>() != kTimestepHz) {
      throw SchemaError("/hz", "expected " + std::to_string(kTimestepHz));
    }
    s.timestep_hz = kTimestepHz;
  }
  s.focal_index = index_field(j, "", "focal_index");
  s.city_tag = string_field(j, "", "city_tag");
  const json& agents = array_field(j, "", "agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    s.agents.push_back(parse_agent(agents[i], "/agents/" + std::to_string(i)));
  }
  const json& lanes = array_field(j, "", "lanes");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    s.lanes.push_back(parse_lane(lanes[i], "/lanes/" + std::to_string(i)));
  }
  if (s.focal_index >= s.agents.size()) {
    throw SchemaError("/focal_index", "index " + std::to_string(s.focal_index) +
                                          " out of range for " +
                                          std::to_string(s.agents.size()) + " agents");
  }
  if (!s.agents[s.focal_index].observed[kCurrentStep]) {
    throw SchemaError("/agents/" + std::to_string(s.focal_index) + "/observed/" +
                          std::to_string(kCurrentStep),
                      "focal agent must be observed at the current timestep");
  }
  return s;
}

void save_scenario(const std::string& path, const RawScenario& scenario) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << scenario_to_json(scenario);
  if (!out) throw Error("failed writing " + path);
}

RawScenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open scenario " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return scenario_from_json(ss.str());
  } catch (const SchemaError& e) {
    throw SchemaError(e.pointer(), path + ": " + std::string(e.what()).substr(e.pointer().size() + 2));
  }
}

}  // namespace trajmae
