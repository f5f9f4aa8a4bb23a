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

#include "trajmae/forecasting.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace trajmae {

namespace {

constexpr std::size_t kOut = 2 * kFutureSteps;

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

bool future_step_valid(const ProcessedScene& scene, std::size_t agent, std::size_t t) {
  return scene.agent_future[(agent * kFutureSteps + t) * kFutureChannels + 2] != 0.0;
}

}  // namespace

ForecastModel::ForecastModel(const ModelConfig& config)
    : config_(config),
      embed_(config, /*with_future=*/false),
      encoder_("encoder", config.encoder_depth, config),
      traj_head_("traj_head", {config.dim, 2 * config.dim, 2 * config.dim, config.modes * kOut},
                 Activation::kGelu),
      score_head_("score_head", {config.dim, 2 * config.dim, 2 * config.dim, config.modes},
                  Activation::kGelu) {
  validate(config);
}

void ForecastModel::init(ParamStore& store, RngStream& rng) const {
  embed_.init(store, rng);
  encoder_.init(store, rng);
  traj_head_.init(store, rng);
  score_head_.init(store, rng);
}

ForecastOutput ForecastModel::forward(const Context& ctx, const ProcessedScene& scene) const {
  const std::size_t n = scene.num_agents();
  if (n == 0) throw Error("scene has no agents");
  std::vector<std::size_t> agents(n), lanes(scene.num_lanes());
  std::iota(agents.begin(), agents.end(), 0);
  std::iota(lanes.begin(), lanes.end(), 0);
  const TokenSet tokens = embed_.embed(ctx, scene, agents, {}, lanes);
  Var encoded = encoder_.forward(ctx, encoder_input(tokens));
  Var agent_rows = gather_rows(encoded, agents);
  ForecastOutput out;
  out.trajectories =
      reshape(traj_head_.forward(ctx, agent_rows), {n * config_.modes, kOut});
  out.logits = score_head_.forward(ctx, agent_rows);
  return out;
}

Prediction ForecastModel::predict(ParamStore& params, const ProcessedScene& scene) const {
  Tape tape;
  Context ctx{tape, params, /*training=*/false, nullptr};
  const ForecastOutput out = forward(ctx, scene);
  const std::size_t n = scene.num_agents();
  Prediction p;
  p.trajectories = out.trajectories.value().reshaped({n, config_.modes, kFutureSteps, 2});
  p.probabilities = softmax_rows(out.logits.value());
  return p;
}

const std::vector<std::string>& shared_prefixes() {
  static const std::vector<std::string> prefixes = {"hist_fpn.", "lane_net.", "pos_embed.",
                                                    "semantic.", "encoder."};
  return prefixes;
}

std::size_t init_from_pretrained(const ParamStore& pretrained, ParamStore& target) {
  std::vector<std::string> missing;
  std::vector<std::string> copy;
  for (const std::string& name : target.names()) {
    bool shared = false;
    for (const std::string& p : shared_prefixes()) shared = shared || starts_with(name, p);
    if (!shared) continue;
    if (!pretrained.contains(name) ||
        pretrained.at(name).value.shape() != target.at(name).value.shape()) {
      missing.push_back(name);
    } else {
      copy.push_back(name);
    }
  }
  if (!missing.empty()) {
    std::string msg = "pretrained weights missing or mismatched:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(msg);
  }
  for (const auto& name : copy) target.assign(name, pretrained.at(name).value);
  return copy.size();
}

std::size_t count_forecast_targets(const ProcessedScene& scene) {
  std::size_t count = 0;
  for (std::size_t a = 0; a < scene.num_agents(); ++a) {
    for (std::size_t t = 0; t < kFutureSteps; ++t) {
      if (future_step_valid(scene, a, t)) {
        ++count;
        break;
      }
    }
  }
  return count;
}

WtaLoss wta_loss(const ForecastOutput& out, const ProcessedScene& scene, std::size_t modes,
                 std::size_t agent_count) {
  const std::size_t n = scene.num_agents();
  if (out.trajectories.rows() != n * modes || out.trajectories.cols() != kOut ||
      out.logits.rows() != n || out.logits.cols() != modes) {
    throw Error("forecast output does not match scene and mode count");
  }
  const Tensor& traj = out.trajectories.value();
  Tensor target({n * modes, kOut});
  Tensor weight({n * modes, kOut});
  std::vector<double> row_weight(n, 0.0);

  WtaLoss loss;
  loss.winner.assign(n, kNoWinner);
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::size_t> steps;
    for (std::size_t t = 0; t < kFutureSteps; ++t) {
      if (future_step_valid(scene, a, t)) steps.push_back(t);
    }
    if (steps.empty()) continue;
    if (agent_count == 0) throw Error("agent_count is zero but the scene has targets");
    ++loss.agents;
    const double* gt = scene.agent_future.data() + a * kFutureSteps * kFutureChannels;
    std::size_t best = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < modes; ++k) {
      const double* pr = traj.data() + (a * modes + k) * kOut;
      double err = 0.0;
      for (std::size_t t : steps) {
        err += std::hypot(pr[2 * t] - gt[t * kFutureChannels],
                          pr[2 * t + 1] - gt[t * kFutureChannels + 1]);
      }
      err /= static_cast<double>(steps.size());
      if (err < best_err) {
        best_err = err;
        best = k;
      }
    }
    loss.winner[a] = best;
    const std::size_t row = a * modes + best;
    const double w = 1.0 / (2.0 * static_cast<double>(steps.size()) *
                            static_cast<double>(agent_count));
    for (std::size_t t : steps) {
      for (std::size_t c = 0; c < 2; ++c) {
        target(row, 2 * t + c) = gt[t * kFutureChannels + c];
        weight(row, 2 * t + c) = w;
      }
    }
    row_weight[a] = 1.0 / static_cast<double>(agent_count);
  }
  if (loss.agents == 0) return loss;

  std::vector<std::size_t> cls_target(n, 0);
  for (std::size_t a = 0; a < n; ++a) {
    if (loss.winner[a] != kNoWinner) cls_target[a] = loss.winner[a];
  }
  Var reg = weighted_loss(out.trajectories, target, weight, LossKind::kHuber, 1.0);
  Var cls = weighted_cross_entropy(out.logits, cls_target, row_weight);
  loss.regression = reg.value()[0];
  loss.classification = cls.value()[0];
  loss.total = add(reg, cls);
  return loss;
}

FinetuneRecord finetune_step(const ForecastModel& model, ParamStore& params,
                             const std::vector<const ProcessedScene*>& batch,
                             const FinetuneOptions& options, RngStream& dropout_rng) {
  if (batch.empty()) throw Error("empty batch");
  std::size_t agent_count = 0;
  for (const ProcessedScene* s : batch) agent_count += count_forecast_targets(*s);
  if (agent_count == 0) throw Error("batch has no agent with a valid future");

  params.zero_grad();
  FinetuneRecord rec;
  for (const ProcessedScene* s : batch) {
    Tape tape;
    Context ctx{tape, params, /*training=*/true, &dropout_rng};
    const ForecastOutput out = model.forward(ctx, *s);
    const WtaLoss loss = wta_loss(out, *s, model.config().modes, agent_count);
    if (!loss.total.valid()) continue;
    const double total = loss.total.value()[0];
    if (!std::isfinite(total)) throw Error("non-finite forecasting loss");
    rec.total += total;
    rec.regression += loss.regression;
    rec.classification += loss.classification;
    accumulate_gradients(tape, loss.total, params);
  }
  adamw_step(params, options.lr, options.weight_decay);
  return rec;
}

}  // namespace trajmae
