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

#include "trajmae/render.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"

namespace trajmae {

namespace {

// Row `row` of a [n x steps x channels] tensor as [steps x 2] coordinates
// plus a [steps] flag vector taken from channel `flag_channel`.
void split_rows(const Tensor& t, std::size_t row, std::size_t steps, std::size_t channels,
                std::size_t flag_channel, Tensor& xy, Tensor& flags) {
  xy = Tensor({steps, 2});
  flags = Tensor({steps});
  const double* p = t.data() + row * steps * channels;
  for (std::size_t s = 0; s < steps; ++s) {
    xy(s, 0) = p[s * channels];
    xy(s, 1) = p[s * channels + 1];
    flags[s] = p[s * channels + flag_channel];
  }
}

// Row `row` of an interleaved [k x 2*steps] tensor as [steps x 2].
Tensor interleaved_row(const Tensor& t, std::size_t row, std::size_t steps) {
  if (t.rank() != 2 || row >= t.dim(0) || t.dim(1) != 2 * steps) {
    throw Error("reconstruction values do not match the masked elements");
  }
  Tensor xy({steps, 2});
  std::copy_n(t.data() + row * 2 * steps, 2 * steps, xy.data());
  return xy;
}

// Per-step flags of element `i` in a [k x steps x 2] validity tensor.
Tensor target_flags(const Tensor& valid, std::size_t i, std::size_t steps) {
  Tensor flags({steps});
  for (std::size_t s = 0; s < steps; ++s) flags[s] = valid[(i * steps + s) * 2];
  return flags;
}

Point2 anchor_of(const Tensor& anchors, std::size_t row) {
  return {anchors(row, 0), anchors(row, 1)};
}

std::vector<Point2> flagged_points(const Tensor& relative, const Tensor& flags, Point2 origin) {
  if (relative.rows() != flags.size()) throw Error("points and flags differ in length");
  std::vector<Point2> out;
  for (std::size_t s = 0; s < flags.size(); ++s) {
    if (flags[s] == 0.0) continue;
    out.push_back({origin.x + relative(s, 0), origin.y + relative(s, 1)});
  }
  return out;
}

class SvgWriter {
 public:
  explicit SvgWriter(const RenderOptions& o) : o_(o) {
    const double size = 2.0 * o.half_extent * o.pixels_per_metre;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.3f\" height=\"%.3f\" "
                  "viewBox=\"%.3f %.3f %.3f %.3f\">\n",
                  size, size, -o.half_extent, -o.half_extent, 2.0 * o.half_extent,
                  2.0 * o.half_extent);
    out_ += buf;
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" height=\"%.3f\" fill=\"#ffffff\"/>\n",
                  -o.half_extent, -o.half_extent, 2.0 * o.half_extent, 2.0 * o.half_extent);
    out_ += buf;
    // Flip y so the focal frame reads with +y up.
    out_ += "<g transform=\"scale(1,-1)\">\n";
  }

  void comment(const std::string& text) { out_ += "<!-- " + text + " -->\n"; }

  void polyline(const std::vector<Point2>& pts, const char* stroke, double width,
                double opacity = 1.0, bool dashed = false) {
    if (pts.size() < 2) return;
    out_ += "<polyline fill=\"none\" stroke=\"";
    out_ += stroke;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "\" stroke-width=\"%.3f\" stroke-opacity=\"%.3f\"", width,
                  opacity);
    out_ += buf;
    if (dashed) out_ += " stroke-dasharray=\"0.800 0.600\"";
    out_ += " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s%.3f,%.3f", i == 0 ? "" : " ", pts[i].x, pts[i].y);
      out_ += buf;
    }
    out_ += "\"/>\n";
  }

  void circle(Point2 c, double r, const char* fill) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"%.3f\" fill=\"%s\"/>\n",
                  c.x, c.y, r, fill);
    out_ += buf;
  }

  std::string finish() {
    out_ += "</g>\n</svg>\n";
    return std::move(out_);
  }

 private:
  RenderOptions o_;
  std::string out_;
};

nlohmann::json points_json(const std::vector<Point2>& pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const Point2& p : pts) a.push_back({p.x, p.y});
  return a;
}

}  // namespace

std::vector<Point2> history_polyline(const Tensor& displacements, const Tensor& flags,
                                     Point2 anchor) {
  if (displacements.rows() != flags.size() || displacements.cols() != 2) {
    throw Error("history displacements must be [T x 2] with T flags");
  }
  std::size_t last = flags.size();
  for (std::size_t s = flags.size(); s-- > 0;) {
    if (flags[s] != 0.0) {
      last = s;
      break;
    }
  }
  if (last == flags.size()) return {anchor};
  // Step s holds the displacement from s - 1 to s.
  std::vector<Point2> back = {anchor};
  for (std::size_t s = last; s > 0 && flags[s] != 0.0; --s) {
    const Point2 p = back.back();
    back.push_back({p.x - displacements(s, 0), p.y - displacements(s, 1)});
  }
  return {back.rbegin(), back.rend()};
}

std::vector<Point2> future_polyline(const Tensor& relative, const Tensor& flags, Point2 anchor) {
  return flagged_points(relative, flags, anchor);
}

std::vector<Point2> lane_polyline(const Tensor& relative, const Tensor& flags, Point2 centroid) {
  return flagged_points(relative, flags, centroid);
}

std::vector<ElementPolylines> reconstruction_polylines(const ProcessedScene& scene,
                                                       const MaskedScene& masked,
                                                       const ReconstructionValues& values) {
  std::vector<ElementPolylines> out;
  Tensor xy, flags;
  for (std::size_t i = 0; i < masked.masked_history.size(); ++i) {
    const std::size_t a = masked.masked_history[i];
    split_rows(scene.agent_history, a, kHistorySteps, kHistoryChannels, 3, xy, flags);
    const Point2 anchor = anchor_of(scene.agent_anchor, a);
    const Tensor f = target_flags(masked.history_target_valid, i, kHistorySteps);
    out.push_back({"history", a, history_polyline(xy, flags, anchor),
                   history_polyline(interleaved_row(values.history, i, kHistorySteps), f,
                                    anchor)});
  }
  for (std::size_t i = 0; i < masked.masked_future.size(); ++i) {
    const std::size_t a = masked.masked_future[i];
    split_rows(scene.agent_future, a, kFutureSteps, kFutureChannels, 2, xy, flags);
    const Point2 anchor = anchor_of(scene.agent_anchor, a);
    out.push_back({"future", a, future_polyline(xy, flags, anchor),
                   future_polyline(interleaved_row(values.future, i, kFutureSteps), flags,
                                   anchor)});
  }
  for (std::size_t i = 0; i < masked.masked_lanes.size(); ++i) {
    const std::size_t l = masked.masked_lanes[i];
    split_rows(scene.lanes, l, kLanePoints, kLaneChannels, 2, xy, flags);
    const Point2 c = anchor_of(scene.lane_anchor, l);
    out.push_back({"lane", l, lane_polyline(xy, flags, c),
                   lane_polyline(interleaved_row(values.lanes, i, kLanePoints), flags, c)});
  }
  return out;
}

std::string reconstruction_json(const ProcessedScene& scene, const MaskedScene& masked,
                                const ReconstructionValues& values) {
  nlohmann::json j;
  j["scenario_id"] = scene.scenario_id;
  j["frame"] = "focal";
  j["visible"] = {{"history", masked.visible_history},
                  {"future", masked.visible_future},
                  {"lanes", masked.visible_lanes}};
  j["masked"] = {{"history", masked.masked_history},
                 {"future", masked.masked_future},
                 {"lanes", masked.masked_lanes}};
  nlohmann::json elements = nlohmann::json::array();
  for (const ElementPolylines& e : reconstruction_polylines(scene, masked, values)) {
    elements.push_back({{"type", e.type},
                        {"index", e.index},
                        {"truth", points_json(e.truth)},
                        {"reconstruction", points_json(e.reconstruction)}});
  }
  j["elements"] = std::move(elements);
  return j.dump(2) + "\n";
}

std::string render_svg(const ProcessedScene& scene, const RenderOverlay& overlay,
                       const RenderOptions& options) {
  if (!(options.half_extent > 0.0) || !(options.pixels_per_metre > 0.0)) {
    throw Error("render extent and scale must be positive");
  }
  SvgWriter svg(options);
  svg.comment("scenario " + scene.scenario_id);
  Tensor xy, flags;

  for (std::size_t l = 0; l < scene.num_lanes(); ++l) {
    split_rows(scene.lanes, l, kLanePoints, kLaneChannels, 2, xy, flags);
    svg.polyline(lane_polyline(xy, flags, anchor_of(scene.lane_anchor, l)), "#b0b0b0", 0.25);
  }
  for (std::size_t a = 0; a < scene.num_agents(); ++a) {
    split_rows(scene.agent_history, a, kHistorySteps, kHistoryChannels, 3, xy, flags);
    const Point2 anchor = anchor_of(scene.agent_anchor, a);
    const bool focal = a == 0;
    svg.polyline(history_polyline(xy, flags, anchor), focal ? "#d62728" : "#1f3b73",
                 focal ? 0.45 : 0.3);
    svg.circle(anchor, focal ? 0.9 : 0.6, focal ? "#d62728" : "#1f3b73");
  }
  if (overlay.ground_truth && scene.num_agents() > 0) {
    split_rows(scene.agent_future, 0, kFutureSteps, kFutureChannels, 2, xy, flags);
    svg.polyline(future_polyline(xy, flags, anchor_of(scene.agent_anchor, 0)), "#2ca02c", 0.45);
  }
  if (overlay.forecast != nullptr) {
    const FocalForecast& f = *overlay.forecast;
    const Tensor& t = f.trajectories;
    if (t.rank() != 3 || t.dim(1) != kFutureSteps || t.dim(2) != 2 ||
        f.scores.size() != t.dim(0)) {
      throw Error("forecast overlay must be [K x kFutureSteps x 2] with K scores");
    }
    const double top = *std::max_element(f.scores.begin(), f.scores.end());
    for (std::size_t k = 0; k < t.dim(0); ++k) {
      std::vector<Point2> pts;
      for (std::size_t s = 0; s < kFutureSteps; ++s) {
        pts.push_back({t[(k * kFutureSteps + s) * 2], t[(k * kFutureSteps + s) * 2 + 1]});
      }
      const double rel = top > 0.0 ? f.scores[k] / top : 1.0;
      svg.polyline(pts, "#ff7f0e", 0.15 + 0.35 * rel, 0.35 + 0.65 * rel);
    }
  }
  if (overlay.masked != nullptr && overlay.reconstruction != nullptr) {
    for (const ElementPolylines& e :
         reconstruction_polylines(scene, *overlay.masked, *overlay.reconstruction)) {
      svg.polyline(e.truth, "#7f7f7f", 0.3, 1.0, /*dashed=*/true);
      svg.polyline(e.reconstruction, "#9467bd", 0.35);
    }
  }
  return svg.finish();
}

}  // namespace trajmae
