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

#include "trajmae/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace trajmae {

namespace {

void check_shapes(const Tensor& preds, const Tensor& gt, std::span<const std::uint8_t> valid) {
  if (preds.rank() != 3 || preds.dim(2) != 2 || preds.dim(0) == 0) {
    throw Error("predictions must be [K x T x 2] with K >= 1, got " + to_string(preds.shape()));
  }
  if (gt.rank() != 2 || gt.dim(0) != preds.dim(1) || gt.dim(1) != 2 ||
      valid.size() != preds.dim(1)) {
    throw Error("ground truth does not match predictions " + to_string(preds.shape()));
  }
}

double step_error(const Tensor& preds, std::size_t k, const Tensor& gt, std::size_t t) {
  const std::size_t steps = gt.dim(0);
  const double* p = preds.data() + (k * steps + t) * 2;
  return std::hypot(p[0] - gt(t, 0), p[1] - gt(t, 1));
}

std::size_t last_valid_step(std::span<const std::uint8_t> valid) {
  for (std::size_t t = valid.size(); t-- > 0;) {
    if (valid[t]) return t;
  }
  throw Error("no valid ground-truth step");
}

// Endpoint-best mode and its error.
std::pair<std::size_t, double> best_endpoint(const Tensor& preds, const Tensor& gt,
                                             std::span<const std::uint8_t> valid) {
  check_shapes(preds, gt, valid);
  const std::size_t t = last_valid_step(valid);
  std::size_t best = 0;
  double err = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < preds.dim(0); ++k) {
    const double e = step_error(preds, k, gt, t);
    if (e < err) {
      err = e;
      best = k;
    }
  }
  return {best, err};
}

Tensor single_mode(const Tensor& preds, std::size_t k) {
  const std::size_t stride = preds.dim(1) * 2;
  Tensor out({1, preds.dim(1), 2});
  std::copy_n(preds.data() + k * stride, stride, out.data());
  return out;
}

}  // namespace

double min_ade(const Tensor& preds, const Tensor& gt, std::span<const std::uint8_t> valid) {
  check_shapes(preds, gt, valid);
  last_valid_step(valid);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < preds.dim(0); ++k) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < valid.size(); ++t) {
      if (!valid[t]) continue;
      sum += step_error(preds, k, gt, t);
      ++n;
    }
    best = std::min(best, sum / static_cast<double>(n));
  }
  return best;
}

double min_fde(const Tensor& preds, const Tensor& gt, std::span<const std::uint8_t> valid) {
  return best_endpoint(preds, gt, valid).second;
}

double miss_rate(const Tensor& preds, const Tensor& gt, std::span<const std::uint8_t> valid,
                 double threshold) {
  return min_fde(preds, gt, valid) > threshold ? 1.0 : 0.0;
}

double brier_min_fde(const Tensor& preds, std::span<const double> scores, const Tensor& gt,
                     std::span<const std::uint8_t> valid) {
  if (scores.size() != preds.dim(0)) throw Error("one score per mode required");
  const auto [k, err] = best_endpoint(preds, gt, valid);
  const double miss = 1.0 - scores[k];
  return err + miss * miss;
}

std::size_t top_mode(std::span<const double> scores) {
  if (scores.empty()) throw Error("no scores");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return best;
}

FocalForecast constant_velocity_baseline(const ProcessedScene& scene) {
  if (scene.num_agents() == 0) throw Error("scene has no agents");
  double vx = 0.0, vy = 0.0;
  for (std::size_t t = kHistorySteps; t-- > 0;) {
    const double* row = scene.agent_history.data() + t * kHistoryChannels;
    if (row[3] != 0.0) {
      vx = row[0];
      vy = row[1];
      break;
    }
  }
  FocalForecast f;
  f.trajectories = Tensor({1, kFutureSteps, 2});
  for (std::size_t k = 0; k < kFutureSteps; ++k) {
    f.trajectories[2 * k] = vx * static_cast<double>(k + 1);
    f.trajectories[2 * k + 1] = vy * static_cast<double>(k + 1);
  }
  f.scores = {1.0};
  return f;
}

void focal_ground_truth(const ProcessedScene& scene, Tensor& gt,
                        std::vector<std::uint8_t>& valid) {
  if (scene.num_agents() == 0) throw Error("scene has no agents");
  gt = Tensor({kFutureSteps, 2});
  valid.assign(kFutureSteps, 0);
  for (std::size_t t = 0; t < kFutureSteps; ++t) {
    const double* row = scene.agent_future.data() + t * kFutureChannels;
    gt(t, 0) = row[0];
    gt(t, 1) = row[1];
    valid[t] = row[2] != 0.0;
  }
}

SceneMetrics score_forecast(const FocalForecast& forecast, const Tensor& gt,
                            std::span<const std::uint8_t> valid, const std::string& scene_id) {
  const Tensor& preds = forecast.trajectories;
  check_shapes(preds, gt, valid);
  if (forecast.scores.size() != preds.dim(0)) throw Error("one score per mode required");
  const Tensor top = single_mode(preds, top_mode(forecast.scores));
  SceneMetrics m;
  m.scene_id = scene_id;
  m.min_ade_1 = min_ade(top, gt, valid);
  m.min_fde_1 = min_fde(top, gt, valid);
  m.mr_1 = miss_rate(top, gt, valid);
  m.min_ade_6 = min_ade(preds, gt, valid);
  m.min_fde_6 = min_fde(preds, gt, valid);
  m.mr_6 = miss_rate(preds, gt, valid);
  m.brier_min_fde_6 = brier_min_fde(preds, forecast.scores, gt, valid);
  return m;
}

SceneMetrics mean_metrics(const std::vector<SceneMetrics>& scenes) {
  if (scenes.empty()) throw Error("cannot average zero scenes");
  SceneMetrics m;
  m.scene_id = "mean";
  for (const auto& s : scenes) {
    m.min_ade_1 += s.min_ade_1;
    m.min_fde_1 += s.min_fde_1;
    m.mr_1 += s.mr_1;
    m.min_ade_6 += s.min_ade_6;
    m.min_fde_6 += s.min_fde_6;
    m.mr_6 += s.mr_6;
    m.brier_min_fde_6 += s.brier_min_fde_6;
  }
  const double n = static_cast<double>(scenes.size());
  for (double* v : {&m.min_ade_1, &m.min_fde_1, &m.mr_1, &m.min_ade_6, &m.min_fde_6, &m.mr_6,
                    &m.brier_min_fde_6}) {
    *v /= n;
  }
  return m;
}

MetricReport evaluate(const Forecaster& forecaster, const std::vector<ProcessedScene>& scenes) {
  if (scenes.empty()) throw Error("evaluation split is empty");
  MetricReport report;
  report.scenes.reserve(scenes.size());
  Tensor gt;
  std::vector<std::uint8_t> valid;
  for (const ProcessedScene& s : scenes) {
    focal_ground_truth(s, gt, valid);
    report.scenes.push_back(score_forecast(forecaster(s), gt, valid, s.scenario_id));
  }
  report.mean = mean_metrics(report.scenes);
  return report;
}

void write_metrics_csv(const MetricReport& report, std::ostream& out) {
  out << "scene_id,minADE_1,minFDE_1,MR_1,minADE_6,minFDE_6,MR_6,brier_minFDE_6\n";
  auto row = [&](const SceneMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", m.min_ade_1,
                  m.min_fde_1, m.mr_1, m.min_ade_6, m.min_fde_6, m.mr_6, m.brier_min_fde_6);
    out << m.scene_id << buf;
  };
  for (const auto& m : report.scenes) row(m);
  row(report.mean);
}

}  // namespace trajmae
