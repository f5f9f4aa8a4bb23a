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

// Focal-frame geometry of scenes, forecasts and reconstructions, and a
// deterministic SVG writer for them.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trajmae/masking.hpp"
#include "trajmae/metrics.hpp"

namespace trajmae {

/// Observed history positions of `agent` in the focal frame, oldest first,
/// rebuilt from per-step displacements backward from the anchor. Covers the
/// contiguous run of flagged steps that ends at the last flagged step.
std::vector<Point2> history_polyline(const Tensor& displacements, const Tensor& flags,
                                     Point2 anchor);

/// Focal-frame points of a future given positions relative to `anchor`;
/// steps whose flag is zero are skipped.
std::vector<Point2> future_polyline(const Tensor& relative, const Tensor& flags, Point2 anchor);

/// Focal-frame points of a lane given centroid-relative points.
std::vector<Point2> lane_polyline(const Tensor& relative, const Tensor& flags, Point2 centroid);

/// Decoded values for the masked elements, one row per element:
/// history [k x 2*kHistorySteps], future [k x 2*kFutureSteps],
/// lanes [k x 2*kLanePoints], (x, y) interleaved.
struct ReconstructionValues {
  Tensor history, future, lanes;
};

struct ElementPolylines {
  std::string type;  // "history", "future" or "lane"
  std::size_t index = 0;  // agent or lane index in the scene
  std::vector<Point2> truth;
  std::vector<Point2> reconstruction;
};

/// Truth and reconstruction polylines for every masked element, grouped by
/// type in mask order. Reconstructions use the truth's step validity.
std::vector<ElementPolylines> reconstruction_polylines(const ProcessedScene& scene,
                                                       const MaskedScene& masked,
                                                       const ReconstructionValues& values);

/// JSON document with scenario id, masked/visible index lists and the
/// polylines of reconstruction_polylines.
std::string reconstruction_json(const ProcessedScene& scene, const MaskedScene& masked,
                                const ReconstructionValues& values);

struct RenderOptions {
  double half_extent = 60.0;      // metres shown on each side of the focal agent
  double pixels_per_metre = 6.0;
};

/// Optional layers drawn over the scene. Null pointers are skipped.
struct RenderOverlay {
  const FocalForecast* forecast = nullptr;  // focal modes, width by score
  bool ground_truth = true;                 // focal ground-truth future
  const MaskedScene* masked = nullptr;      // with `reconstruction`, draws
  const ReconstructionValues* reconstruction = nullptr;  // masked elements
};

/// SVG document of the scene in the focal frame (+y up). Output is a pure
/// function of the inputs; coordinates use three decimals.
std::string render_svg(const ProcessedScene& scene, const RenderOverlay& overlay = {},
                       const RenderOptions& options = {});

}  // namespace trajmae
