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

// Acceptance gate. Each criterion prints one line:
//   CRITERION <n>: PASS|FAIL <detail>
// Usage: acceptance [--criterion N]   (N = 0 runs all eight)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "trajmae/checkpoint.hpp"
#include "trajmae/forecasting.hpp"
#include "trajmae/optim.hpp"
#include "trajmae/pipeline.hpp"
#include "trajmae/scenario_io.hpp"

namespace trajmae {
namespace {

using testing::check_gradients;
using testing::GradCheckResult;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, a);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void progress_line(const std::string& line) { std::cerr << "  " << line << std::endl; }

Tensor random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal(0.0, scale);
  return t;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

struct OpCheck {
  std::string name;
  GradCheckResult result;
};

// Every store entry is a leaf; `graph` maps leaves to a tensor that is
// contracted with a fixed random probe to give a scalar.
OpCheck probe_check(const std::string& name, ParamStore store,
                    const std::function<Var(Tape&, ParamStore&)>& graph, std::uint64_t seed) {
  Tensor probe;
  {
    Tape tape;
    const Tensor out = graph(tape, store).value();
    RngStream rng(seed);
    probe = random_tensor(out.shape(), rng);
  }
  OpCheck c{name, check_gradients(store, [&](Tape& tape) {
              return sum(mul(graph(tape, store), tape.constant(probe)));
            })};
  return c;
}

OpCheck scalar_check(const std::string& name, ParamStore store,
                     const std::function<Var(Tape&, ParamStore&)>& graph) {
  return {name, check_gradients(store, [&](Tape& tape) { return graph(tape, store); })};
}

ParamStore leaves(std::initializer_list<std::pair<const char*, Shape>> spec, std::uint64_t seed) {
  ParamStore store;
  RngStream rng(seed);
  for (const auto& [name, shape] : spec) store.add(name, random_tensor(shape, rng));
  return store;
}

std::vector<OpCheck> per_op_checks() {
  std::vector<OpCheck> checks;
  auto p = [](Tape& t, ParamStore& s, const char* n) { return t.parameter(s, n); };
  const auto ab = [] { return leaves({{"a", {3, 4}}, {"b", {3, 4}}}, 1); };

  checks.push_back(probe_check("add", ab(), [&](Tape& t, ParamStore& s) {
    return add(p(t, s, "a"), p(t, s, "b"));
  }, 11));
  checks.push_back(probe_check("sub", ab(), [&](Tape& t, ParamStore& s) {
    return sub(p(t, s, "a"), p(t, s, "b"));
  }, 12));
  checks.push_back(probe_check("mul", ab(), [&](Tape& t, ParamStore& s) {
    return mul(p(t, s, "a"), p(t, s, "b"));
  }, 13));
  checks.push_back(probe_check("scale", ab(), [&](Tape& t, ParamStore& s) {
    return scale(p(t, s, "a"), -1.7);
  }, 14));
  checks.push_back(probe_check("add_row", leaves({{"x", {3, 4}}, {"v", {4}}}, 2),
                               [&](Tape& t, ParamStore& s) {
                                 return add_row(p(t, s, "x"), p(t, s, "v"));
                               }, 15));
  checks.push_back(scalar_check("sum", ab(), [&](Tape& t, ParamStore& s) {
    return sum(mul(p(t, s, "a"), p(t, s, "a")));
  }));
  checks.push_back(probe_check("reshape", ab(), [&](Tape& t, ParamStore& s) {
    return reshape(p(t, s, "a"), {4, 3});
  }, 16));
  checks.push_back(probe_check("matmul", leaves({{"x", {3, 4}}, {"w", {4, 5}}}, 3),
                               [&](Tape& t, ParamStore& s) {
                                 return matmul(p(t, s, "x"), p(t, s, "w"));
                               }, 17));
  checks.push_back(probe_check("linear", leaves({{"x", {3, 4}}, {"w", {4, 5}}, {"b", {5}}}, 4),
                               [&](Tape& t, ParamStore& s) {
                                 return linear(p(t, s, "x"), p(t, s, "w"), p(t, s, "b"));
                               }, 18));
  checks.push_back(probe_check("relu", leaves({{"x", {4, 5}}}, 5), [&](Tape& t, ParamStore& s) {
    return relu(p(t, s, "x"));
  }, 19));
  checks.push_back(probe_check("gelu", leaves({{"x", {4, 5}}}, 6), [&](Tape& t, ParamStore& s) {
    return gelu(p(t, s, "x"));
  }, 20));
  checks.push_back(probe_check("layer_norm",
                               leaves({{"x", {3, 6}}, {"gamma", {6}}, {"beta", {6}}}, 7),
                               [&](Tape& t, ParamStore& s) {
                                 return layer_norm(p(t, s, "x"), p(t, s, "gamma"),
                                                   p(t, s, "beta"));
                               }, 21));
  checks.push_back(probe_check("dropout", leaves({{"x", {5, 6}}}, 8), [&](Tape& t, ParamStore& s) {
    RngStream rng(99);  // same keep pattern on every evaluation
    return dropout(p(t, s, "x"), 0.3, rng);
  }, 22));
  checks.push_back(probe_check("gather_rows", leaves({{"x", {4, 3}}}, 9),
                               [&](Tape& t, ParamStore& s) {
                                 return gather_rows(p(t, s, "x"), {2, 0, 2, 3});
                               }, 23));
  checks.push_back(probe_check("concat_rows", leaves({{"a", {2, 3}}, {"b", {3, 3}}}, 10),
                               [&](Tape& t, ParamStore& s) {
                                 return concat_rows({p(t, s, "a"), p(t, s, "b")});
                               }, 24));
  {
    const std::vector<KeyWindow> windows = {{0, 5}, {1, 3}, {2, 3}};
    const std::vector<std::uint8_t> key_valid = {1, 1, 0, 1, 1};
    checks.push_back(probe_check(
        "attention", leaves({{"q", {3, 4}}, {"k", {5, 4}}, {"v", {5, 4}}}, 11),
        [&](Tape& t, ParamStore& s) {
          return attention(p(t, s, "q"), p(t, s, "k"), p(t, s, "v"), 2, windows, key_valid);
        }, 25));
  }
  checks.push_back(probe_check("conv1d", leaves({{"x", {2 * 5, 2}}, {"w", {6, 3}}, {"b", {3}}}, 12),
                               [&](Tape& t, ParamStore& s) {
                                 return conv1d(p(t, s, "x"), p(t, s, "w"), p(t, s, "b"), 5, 2);
                               }, 26));
  {
    const std::vector<std::uint8_t> valid = {1, 1, 1, 1, 0, 1, 1, 1};
    checks.push_back(probe_check("segment_max", leaves({{"x", {8, 3}}}, 13),
                                 [&](Tape& t, ParamStore& s) {
                                   return segment_max(p(t, s, "x"), 4, valid);
                                 }, 27));
  }
  {
    RngStream rng(14);
    const Tensor target = random_tensor({4, 3}, rng, 2.0);
    Tensor weight({4, 3});
    for (double& w : weight.values()) w = rng.uniform();
    weight[5] = 0.0;
    Tensor valid({4, 3}, 1.0);
    valid[4] = 0.0;
    const std::pair<const char*, LossKind> kinds[] = {
        {"weighted_loss/l1", LossKind::kL1},
        {"weighted_loss/mse", LossKind::kMse},
        {"weighted_loss/huber", LossKind::kHuber}};
    for (const auto& [name, kind] : kinds) {
      checks.push_back(scalar_check(name, leaves({{"p", {4, 3}}}, 15),
                                    [&, kind = kind](Tape& t, ParamStore& s) {
                                      return weighted_loss(p(t, s, "p"), target, weight, kind,
                                                           0.7);
                                    }));
    }
    checks.push_back(scalar_check("l1_loss", leaves({{"p", {4, 3}}}, 16),
                                  [&](Tape& t, ParamStore& s) {
                                    return l1_loss(p(t, s, "p"), target, valid);
                                  }));
    checks.push_back(scalar_check("mse_loss", leaves({{"p", {4, 3}}}, 17),
                                  [&](Tape& t, ParamStore& s) {
                                    return mse_loss(p(t, s, "p"), target, valid);
                                  }));
    checks.push_back(scalar_check("huber_loss", leaves({{"p", {4, 3}}}, 18),
                                  [&](Tape& t, ParamStore& s) {
                                    return huber_loss(p(t, s, "p"), target, valid);
                                  }));
  }
  {
    const std::vector<std::size_t> targets = {0, 2, 1, 1};
    const std::vector<double> weights = {0.5, 1.0, 0.0, 2.0};
    checks.push_back(scalar_check("weighted_cross_entropy", leaves({{"z", {4, 3}}}, 19),
                                  [&](Tape& t, ParamStore& s) {
                                    return weighted_cross_entropy(p(t, s, "z"), targets, weights);
                                  }));
    checks.push_back(scalar_check("cross_entropy", leaves({{"z", {6}}}, 20),
                                  [&](Tape& t, ParamStore& s) {
                                    return cross_entropy(p(t, s, "z"), 4);
                                  }));
  }
  return checks;
}

// Training-mode graphs (dropout active) on the 2-agent / 3-lane fixture. The
// dropout stream is restored before every evaluation so the graph is fixed.
std::vector<OpCheck> end_to_end_checks() {
  const ModelConfig config = testing::tiny_model();
  const ProcessedScene scene = normalize_to_focal(testing::two_agent_three_lane());
  std::vector<OpCheck> checks;
  {
    MaeModel model(config);
    ParamStore params;
    RngStream init(31);
    model.init(params, init);
    MaskPlan plan;
    plan.agent_assignment = {AgentMask::kFutureMasked, AgentMask::kHistoryMasked};
    plan.lane_masked = {1, 0, 1};
    const MaskedScene masked = apply_mask(scene, plan);
    MaeNormalizer norm;
    norm.add(masked);
    checks.push_back({"end_to_end/mae", check_gradients(params, [&](Tape& tape) {
                        RngStream drop(32);
                        Context ctx{tape, params, /*training=*/true, &drop};
                        return mae_loss(model.forward(ctx, scene, masked), masked, norm).total;
                      })});
  }
  {
    ForecastModel model(config);
    ParamStore params;
    RngStream init(33);
    model.init(params, init);
    const std::size_t agents = count_forecast_targets(scene);
    checks.push_back({"end_to_end/forecast", check_gradients(params, [&](Tape& tape) {
                        RngStream drop(34);
                        Context ctx{tape, params, /*training=*/true, &drop};
                        return wta_loss(model.forward(ctx, scene), scene, config.modes, agents)
                            .total;
                      })});
  }
  return checks;
}

Outcome criterion_gradients() {
  const Stopwatch clock;
  bool ok = true;
  double worst_op = 0.0, worst_e2e = 0.0;
  std::string worst_op_name, worst_e2e_name;
  std::size_t checked = 0;
  for (const OpCheck& c : per_op_checks()) {
    checked += c.result.checked;
    const bool pass = c.result.max_rel_err < 1e-4;
    std::fprintf(stderr, "  %-24s rel %.2e %s\n", c.name.c_str(), c.result.max_rel_err,
                 pass ? "ok" : c.result.worst.c_str());
    ok &= pass;
    if (c.result.max_rel_err >= worst_op) {
      worst_op = c.result.max_rel_err;
      worst_op_name = c.name;
    }
  }
  for (const OpCheck& c : end_to_end_checks()) {
    checked += c.result.checked;
    const bool pass = c.result.max_rel_err < 1e-3;
    std::fprintf(stderr, "  %-24s rel %.2e over %zu scalars %s\n", c.name.c_str(),
                 c.result.max_rel_err, c.result.checked, pass ? "ok" : c.result.worst.c_str());
    ok &= pass;
    if (c.result.max_rel_err >= worst_e2e) {
      worst_e2e = c.result.max_rel_err;
      worst_e2e_name = c.name;
    }
  }
  const double secs = clock.seconds();
  ok &= secs < 60.0;
  return {ok, "max per-op rel " + fmt("%.2e", worst_op) + " (" + worst_op_name +
                  "), max end-to-end rel " + fmt("%.2e", worst_e2e) + " (" + worst_e2e_name +
                  "), " + std::to_string(checked) + " scalars, " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Masking properties

// Content-free scene with n agents and m lanes; every step flagged.
ProcessedScene blank_scene(std::size_t n, std::size_t m) {
  ProcessedScene s;
  s.agent_history = Tensor({n, kHistorySteps, kHistoryChannels});
  s.agent_future = Tensor({n, kFutureSteps, kFutureChannels});
  s.lanes = Tensor({m, kLanePoints, kLaneChannels});
  s.agent_anchor = Tensor({n, 3});
  s.lane_anchor = Tensor({m, 3});
  for (std::size_t i = 0; i < s.agent_history.size(); ++i) s.agent_history[i] = double(i % 97);
  for (std::size_t i = 0; i < s.agent_future.size(); ++i) s.agent_future[i] = double(i % 89);
  for (std::size_t i = 0; i < s.lanes.size(); ++i) s.lanes[i] = double(i % 83);
  s.agent_category.assign(n, AgentCategory::kVehicle);
  s.lane_type.assign(m, LaneType::kStraight);
  s.agent_hist_valid.assign(n, 1);
  s.agent_fut_valid.assign(n, 1);
  s.lane_valid.assign(m, 1);
  return s;
}

bool complementary(const MaskedScene& m, std::size_t n, std::size_t lanes) {
  if (m.visible_history != m.masked_future || m.visible_future != m.masked_history) return false;
  std::vector<int> agent_seen(n, 0), lane_seen(lanes, 0);
  for (std::size_t i : m.visible_history) ++agent_seen.at(i);
  for (std::size_t i : m.visible_future) ++agent_seen.at(i);
  for (std::size_t j : m.visible_lanes) ++lane_seen.at(j);
  for (std::size_t j : m.masked_lanes) ++lane_seen.at(j);
  const auto once = [](int c) { return c == 1; };
  return std::all_of(agent_seen.begin(), agent_seen.end(), once) &&
         std::all_of(lane_seen.begin(), lane_seen.end(), once) &&
         m.history_target.dim(0) == m.masked_history.size() &&
         m.future_target.dim(0) == m.masked_future.size() &&
         m.lane_target.dim(0) == m.masked_lanes.size();
}

Outcome criterion_masking() {
  const Stopwatch clock;
  RngStream rng(2026);
  std::size_t count_failures = 0, complement_failures = 0;
  for (std::size_t n = 1; n <= 64; ++n) {
    for (std::size_t m : {std::size_t{0}, std::size_t{1}, n, 2 * n + 3}) {
      const ProcessedScene scene = blank_scene(n, m);
      for (int a = 0; a <= 5; ++a) {
        for (int b = 0; b <= 5; ++b) {
          const double alpha = 0.2 * a, beta = 0.2 * b;
          const MaskPlan plan = plan_masks(n, m, alpha, beta, rng);
          const std::size_t hist = static_cast<std::size_t>(std::count(
              plan.agent_assignment.begin(), plan.agent_assignment.end(),
              AgentMask::kHistoryMasked));
          const std::size_t lanes = static_cast<std::size_t>(
              std::count(plan.lane_masked.begin(), plan.lane_masked.end(), 1));
          const auto expected = [](double r, std::size_t k) {
            return static_cast<std::size_t>(std::floor(r * static_cast<double>(k) + 0.5));
          };
          if (plan.agent_assignment.size() != n || plan.lane_masked.size() != m ||
              hist != expected(alpha, n) || lanes != expected(beta, m)) {
            ++count_failures;
          }
          if (!complementary(apply_mask(scene, plan), n, m)) ++complement_failures;
        }
      }
    }
  }

  // Under a uniform subset each agent is history-masked with frequency
  // round(N/2)/N, which is exactly 0.5 for even N. Lane frequencies are
  // reported alongside.
  constexpr int kDraws = 10000;
  double worst_dev = 0.0, worst_even = 0.0, worst_lane = 0.0;
  std::size_t worst_n = 0;
  for (std::size_t n = 1; n <= 64; ++n) {
    std::vector<int> agent_hits(n, 0), lane_hits(n, 0);
    RngStream draws = RngStream(2027).split(n);  // own stream per N
    for (int d = 0; d < kDraws; ++d) {
      const MaskPlan plan = plan_masks(n, n, 0.5, 0.5, draws);
      for (std::size_t i = 0; i < n; ++i) {
        agent_hits[i] += plan.agent_assignment[i] == AgentMask::kHistoryMasked;
        lane_hits[i] += plan.lane_masked[i];
      }
    }
    const double expected = static_cast<double>(mask_count(0.5, n)) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double f = static_cast<double>(agent_hits[i]) / kDraws;
      const double dev = std::abs(f - expected);
      if (dev > worst_dev) {
        worst_dev = dev;
        worst_n = n;
      }
      if (n % 2 == 0) worst_even = std::max(worst_even, std::abs(f - 0.5));
      worst_lane = std::max(
          worst_lane, std::abs(static_cast<double>(lane_hits[i]) / kDraws - expected));
    }
  }
  const bool ok = count_failures == 0 && complement_failures == 0 && worst_dev <= 0.02;
  return {ok, std::to_string(count_failures) + " count and " +
                  std::to_string(complement_failures) +
                  " complementarity violations over N in [1,64]; max |freq - round(N/2)/N| " +
                  fmt("%.4f", worst_dev) + " (N=" + std::to_string(worst_n) +
                  "), max |freq - 0.5| for even N " + fmt("%.4f", worst_even) +
                  ", lanes max dev " + fmt("%.4f", worst_lane) + ", " +
                  fmt("%.1f", clock.seconds()) + " s"};
}

// ---------------------------------------------------------------------------
// 3. Equivariance and invariance

Outcome criterion_invariance() {
  const Stopwatch clock;
  const ModelConfig config;  // full-size model, evaluation mode
  MaeModel mae(config);
  ForecastModel forecast(config);
  ParamStore mae_params, forecast_params;
  RngStream i1(301), i2(302);
  mae.init(mae_params, i1);
  forecast.init(forecast_params, i2);

  double perm_err = 0.0, loss_err = 0.0, traj_err = 0.0, prob_err = 0.0;
  RngStream rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    RngStream gen = rng.split(trial);
    const RawScenario raw = generate_synthetic_scenario(GenConfig{}, gen);
    const ProcessedScene a = normalize_to_focal(raw);
    const double rot = gen.uniform(-std::numbers::pi, std::numbers::pi);
    const Point2 shift{gen.uniform(-2000.0, 2000.0), gen.uniform(-2000.0, 2000.0)};
    const ProcessedScene b = normalize_to_focal(testing::rigid_transform(raw, rot, shift));

    RngStream mr(400 + trial);
    const MaskedScene ma =
        apply_mask(a, plan_masks(a.num_agents(), a.num_lanes(), 0.4, 0.5, mr));
    RngStream mr2(400 + trial);
    const MaskedScene mb =
        apply_mask(b, plan_masks(b.num_agents(), b.num_lanes(), 0.4, 0.5, mr2));

    // Encoder permutation equivariance on the visible tokens of scene a.
    {
      Tape tape;
      Context ctx{tape, mae_params};
      const TokenSet tokens = mae.embed_visible(ctx, a, ma);
      const Var x = encoder_input(tokens);
      const std::size_t n = x.value().rows();
      const std::vector<std::size_t> perm = gen.permutation(n);
      const Tensor y = mae.encoder().forward(ctx, x).value();
      const Tensor yp = mae.encoder().forward(ctx, gather_rows(x, perm)).value();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < y.cols(); ++c) {
          perm_err = std::max(perm_err, std::abs(yp(r, c) - y(perm[r], c)));
        }
      }
    }
    {
      Tape tape;
      Context ctx{tape, mae_params};
      MaeNormalizer na, nb;
      na.add(ma);
      nb.add(mb);
      const double la = mae_loss(mae.forward(ctx, a, ma), ma, na).total.value().item();
      const double lb = mae_loss(mae.forward(ctx, b, mb), mb, nb).total.value().item();
      loss_err = std::max(loss_err, std::abs(la - lb));
    }
    const Prediction pa = forecast.predict(forecast_params, a);
    const Prediction pb = forecast.predict(forecast_params, b);
    traj_err = std::max(traj_err, max_abs_diff(pa.trajectories, pb.trajectories));
    prob_err = std::max(prob_err, max_abs_diff(pa.probabilities, pb.probabilities));
  }
  const bool ok = perm_err <= 1e-10 && loss_err <= 1e-8 && traj_err <= 1e-8 && prob_err <= 1e-8;
  return {ok, "20 scenes: encoder permutation err " + fmt("%.2e", perm_err) +
                  ", SE(2) loss err " + fmt("%.2e", loss_err) + ", trajectory err " +
                  fmt("%.2e", traj_err) + ", probability err " + fmt("%.2e", prob_err) + ", " +
                  fmt("%.1f", clock.seconds()) + " s"};
}

// ---------------------------------------------------------------------------
// 4. Metric oracle

struct BruteMetrics {
  double ade, fde, mr, brier;
};

// Plain loops over modes and steps with nothing shared with the library.
BruteMetrics brute_metrics(const std::vector<std::vector<std::array<double, 2>>>& modes,
                           const std::vector<double>& scores,
                           const std::vector<std::array<double, 2>>& gt,
                           const std::vector<std::uint8_t>& valid) {
  std::size_t last = 0, count = 0;
  for (std::size_t t = 0; t < valid.size(); ++t) {
    if (valid[t]) {
      last = t;
      ++count;
    }
  }
  BruteMetrics r{INFINITY, INFINITY, 0.0, 0.0};
  std::size_t best = 0;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    double total = 0.0;
    for (std::size_t t = 0; t < valid.size(); ++t) {
      if (valid[t]) total += std::hypot(modes[k][t][0] - gt[t][0], modes[k][t][1] - gt[t][1]);
    }
    if (total / static_cast<double>(count) < r.ade) r.ade = total / static_cast<double>(count);
    const double e = std::hypot(modes[k][last][0] - gt[last][0], modes[k][last][1] - gt[last][1]);
    if (e < r.fde) {
      r.fde = e;
      best = k;
    }
  }
  r.mr = r.fde > 2.0 ? 1.0 : 0.0;
  r.brier = r.fde + (1.0 - scores[best]) * (1.0 - scores[best]);
  return r;
}

Outcome criterion_metrics() {
  RngStream rng(404);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(6);
    const std::size_t steps = 1 + rng.uniform_index(kFutureSteps);
    std::vector<std::array<double, 2>> gt(steps);
    for (auto& p : gt) p = {rng.normal(0.0, 15.0), rng.normal(0.0, 15.0)};
    std::vector<std::vector<std::array<double, 2>>> modes(k, gt);
    for (auto& m : modes) {
      for (auto& p : m) {
        p[0] += rng.normal(0.0, 3.0);
        p[1] += rng.normal(0.0, 3.0);
      }
    }
    std::vector<std::uint8_t> valid(steps);
    for (auto& v : valid) v = rng.uniform() < 0.8;
    valid[rng.uniform_index(steps)] = 1;
    std::vector<double> scores(k);
    double z = 0.0;
    for (double& s : scores) z += (s = rng.uniform() + 1e-3);
    for (double& s : scores) s /= z;

    Tensor preds({k, steps, 2}), truth({steps, 2});
    for (std::size_t m = 0; m < k; ++m) {
      for (std::size_t t = 0; t < steps; ++t) {
        preds[(m * steps + t) * 2] = modes[m][t][0];
        preds[(m * steps + t) * 2 + 1] = modes[m][t][1];
      }
    }
    for (std::size_t t = 0; t < steps; ++t) {
      truth(t, 0) = gt[t][0];
      truth(t, 1) = gt[t][1];
    }
    const BruteMetrics ref = brute_metrics(modes, scores, gt, valid);
    mismatches += min_ade(preds, truth, valid) != ref.ade;
    mismatches += min_fde(preds, truth, valid) != ref.fde;
    mismatches += miss_rate(preds, truth, valid) != ref.mr;
    mismatches += brier_min_fde(preds, scores, truth, valid) != ref.brier;
  }

  const std::vector<std::uint8_t> one = {1};
  const double fde_345 = min_fde(Tensor({1, 1, 2}, {3.0, 4.0}), Tensor({1, 2}), one);
  const std::vector<double> scores = {0.3, 0.7};
  const double brier =
      brier_min_fde(Tensor({2, 1, 2}, {1.0, 0.0, 5.0, 0.0}), scores, Tensor({1, 2}), one);
  const bool ok = mismatches == 0 && fde_345 == 5.0 && std::abs(brier - 1.49) < 1e-12;
  return {ok, std::to_string(mismatches) + " mismatches over 1000 cases x 4 metrics; 3-4-5 FDE " +
                  fmt("%.6f", fde_345) + ", brier-minFDE(p=0.3, FDE=1) " + fmt("%.6f", brier)};
}

// ---------------------------------------------------------------------------
// 5. Overfit smoke

// Mean evaluation-mode L_MAE over `scenes` x 4 fixed masks per scene.
double fixed_mask_loss(const MaeModel& model, ParamStore& params,
                       const std::vector<ProcessedScene>& scenes, double alpha, double beta) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (std::uint64_t r = 0; r < 4; ++r) {
      RngStream rng = RngStream(505).split(i * 4 + r);
      const MaskedScene m = apply_mask(
          scenes[i], plan_masks(scenes[i].num_agents(), scenes[i].num_lanes(), alpha, beta, rng));
      MaeNormalizer norm;
      norm.add(m);
      Tape tape;
      Context ctx{tape, params};
      total += mae_loss(model.forward(ctx, scenes[i], m), m, norm).total.value().item();
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

Outcome criterion_overfit() {
  const Stopwatch clock;
  ExperimentConfig config = desk_profile();
  config.model.dropout = 0.0;
  std::vector<RawScenario> raw;
  for (std::size_t i = 0; i < 8; ++i) raw.push_back(generate_scene(config.data, Split::kTrain, i));
  const std::vector<ProcessedScene> scenes = preprocess_all(raw);
  std::vector<const ProcessedScene*> batch;
  for (const ProcessedScene& s : scenes) batch.push_back(&s);

  const MaeModel mae(config.model);
  ParamStore pre;
  RngStream init(501);
  mae.init(pre, init);
  PretrainOptions po;
  po.alpha = config.alpha;
  po.beta = config.beta;
  po.weights = config.loss_weights;
  po.lr = 5e-3;
  po.weight_decay = 0.0;
  RngStream mask_rng(502), drop_rng(503);
  const double eval0 = fixed_mask_loss(mae, pre, scenes, po.alpha, po.beta);
  double step0 = 0.0, tail = 0.0;
  for (int step = 0; step < 500; ++step) {
    const PretrainRecord r = pretrain_step(mae, pre, batch, po, mask_rng, drop_rng);
    if (step == 0) step0 = r.total;
    if (step >= 490) tail += r.total / 10.0;
  }
  const double eval1 = fixed_mask_loss(mae, pre, scenes, po.alpha, po.beta);
  const double reduction = 1.0 - eval1 / eval0;
  std::fprintf(stderr, "  pretrain: step-0 batch loss %.4f, last-10 mean %.4f; fixed-mask loss "
               "%.4f -> %.4f\n", step0, tail, eval0, eval1);

  const ForecastModel model(config.model);
  ParamStore ft;
  RngStream init2(504);
  model.init(ft, init2);
  init_from_pretrained(pre, ft);
  FinetuneOptions fo;
  fo.weight_decay = 0.0;
  RngStream drop2(506);
  constexpr std::size_t kFinetuneSteps = 1000;
  for (std::size_t step = 0; step < kFinetuneSteps; ++step) {
    fo.lr = lr_at(step, kFinetuneSteps, 0, 2e-3);
    finetune_step(model, ft, batch, fo, drop2);
  }
  const double ade = evaluate(model_forecaster(model, ft), scenes).mean.min_ade_6;

  const double secs = clock.seconds();
  const bool ok = reduction >= 0.9 && ade < 0.3 && secs < 300.0;
  return {ok, "L_MAE " + fmt("%.4f", eval0) + " -> " + fmt("%.4f", eval1) + " (" +
                  fmt("%.1f", 100.0 * reduction) + "% reduction), focal minADE_6 " +
                  fmt("%.4f", ade) + " m, " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 6. Desk-scale transfer

Outcome criterion_transfer() {
  const Stopwatch clock;
  const ExperimentConfig config = desk_profile();
  const std::vector<ProcessedScene> train = load_scenes(config, Split::kTrain);
  const std::vector<RawScenario> val_raw = generate_split(config.data, Split::kVal);
  const std::vector<ProcessedScene> val = preprocess_all(val_raw);
  std::vector<ProcessedScene> turns;
  for (std::size_t i = 0; i < val_raw.size(); ++i) {
    if (is_turn_scene(val_raw[i])) turns.push_back(val[i]);
  }
  const double cv_turn = evaluate(constant_velocity_baseline, turns).mean.min_fde_6;

  const ForecastModel model(config.model);
  double pre_ade = 0.0, scratch_ade = 0.0, ft_turn = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const PretrainRun pre = run_pretrain(config, train, seed, progress_line);
    FinetuneRun ft = run_finetune(config, train, {}, seed, &pre.params, progress_line);
    FinetuneRun scratch = run_finetune(config, train, {}, seed, nullptr, progress_line);
    const double a = evaluate(model_forecaster(model, ft.params), val).mean.min_ade_6;
    const double b = evaluate(model_forecaster(model, scratch.params), val).mean.min_ade_6;
    const double t = evaluate(model_forecaster(model, ft.params), turns).mean.min_fde_6;
    std::fprintf(stderr, "  seed %llu: pretrained %.4f scratch %.4f turn minFDE_6 %.4f\n",
                 static_cast<unsigned long long>(seed), a, b, t);
    per_seed += (seed > 1 ? "/" : "") + fmt("%.3f", a) + ":" + fmt("%.3f", b);
    pre_ade += a / 3.0;
    scratch_ade += b / 3.0;
    ft_turn += t / 3.0;
  }
  const double gain = 1.0 - ft_turn / cv_turn;
  const double secs = clock.seconds();
  const bool ok = pre_ade <= scratch_ade && gain >= 0.2 && secs < 1800.0;
  return {ok, "val minADE_6 pretrained " + fmt("%.4f", pre_ade) + " vs scratch " +
                  fmt("%.4f", scratch_ade) + " (per seed " + per_seed + "); " +
                  std::to_string(turns.size()) + " turn scenes minFDE_6 " +
                  fmt("%.3f", ft_turn) + " vs CV " + fmt("%.3f", cv_turn) + " (" +
                  fmt("%.1f", 100.0 * gain) + "% better); " + fmt("%.0f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 7. Masking-ratio sweep

Outcome criterion_sweep() {
  const Stopwatch clock;
  const ExperimentConfig config = desk_profile();
  const std::vector<ProcessedScene> train = load_scenes(config, Split::kTrain);
  const std::vector<ProcessedScene> val = load_scenes(config, Split::kVal);
  const std::vector<double> values = {0.2, 0.5, 0.8};
  const std::vector<SweepRow> rows =
      run_sweep(config, "alpha", values, {1, 2, 3}, train, val, progress_line);
  std::vector<double> mean(values.size(), 0.0);
  for (const SweepRow& r : rows) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (r.value == values[i]) mean[i] += r.val.min_ade_6 / 3.0;
    }
    std::fprintf(stderr, "  alpha %.1f seed %llu minADE_6 %.4f\n", r.value,
                 static_cast<unsigned long long>(r.seed), r.val.min_ade_6);
  }
  const bool ok = mean[1] <= mean[0] && mean[1] <= mean[2];
  return {ok, "mean val minADE_6 alpha 0.2: " + fmt("%.4f", mean[0]) + ", 0.5: " +
                  fmt("%.4f", mean[1]) + ", 0.8: " + fmt("%.4f", mean[2]) + "; " +
                  fmt("%.0f", clock.seconds()) + " s"};
}

// ---------------------------------------------------------------------------
// 8. Determinism and round trips

template <typename T>
bool same_bits(const T& a, const T& b) {
  return std::memcmp(&a, &b, sizeof(T)) == 0;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.names() != b.names()) return false;
  for (const auto& [name, p] : a) {
    if (!same_bits(p.value, b.at(name).value)) return false;
  }
  return true;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_determinism() {
  ExperimentConfig config = desk_profile();
  config.data.train_scenes = 24;
  config.pretrain.epochs = config.finetune.epochs = 2;
  config.pretrain.warmup_epochs = config.finetune.warmup_epochs = 1;
  config.pretrain.batch = config.finetune.batch = 8;
  const std::vector<ProcessedScene> train = load_scenes(config, Split::kTrain);

  const PretrainRun p1 = run_pretrain(config, train, 7);
  const PretrainRun p2 = run_pretrain(config, train, 7);
  bool traces = p1.log.size() == p2.log.size() && same_params(p1.params, p2.params);
  for (std::size_t i = 0; traces && i < p1.log.size(); ++i) {
    traces = same_bits(p1.log[i].total, p2.log[i].total) &&
             same_bits(p1.log[i].history, p2.log[i].history) &&
             same_bits(p1.log[i].future, p2.log[i].future) &&
             same_bits(p1.log[i].lane, p2.log[i].lane);
  }
  const FinetuneRun f1 = run_finetune(config, train, {}, 7, &p1.params);
  const FinetuneRun f2 = run_finetune(config, train, {}, 7, &p2.params);
  traces = traces && f1.log.size() == f2.log.size() && same_params(f1.params, f2.params);
  for (std::size_t i = 0; traces && i < f1.log.size(); ++i) {
    traces = same_bits(f1.log[i].loss, f2.log[i].loss) &&
             same_bits(f1.log[i].regression, f2.log[i].regression) &&
             same_bits(f1.log[i].classification, f2.log[i].classification);
  }

  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "trajmae_acceptance_c8";
  std::filesystem::create_directories(dir);
  const std::string meta = checkpoint_metadata(config, "finetune", 7);
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(f1.params, meta);
  save_checkpoint((dir / "a.ckpt").string(), f1.params, meta);
  const Checkpoint loaded = load_checkpoint((dir / "a.ckpt").string());
  save_checkpoint((dir / "b.ckpt").string(), loaded.params, loaded.metadata);
  const std::string a_bytes = read_bytes(dir / "a.ckpt");
  const bool checkpoint = same_params(loaded.params, f1.params) && loaded.metadata == meta &&
                          a_bytes == read_bytes(dir / "b.ckpt") &&
                          a_bytes == std::string(bytes.begin(), bytes.end());

  bool scenario = true;
  for (std::size_t i = 0; i < 20; ++i) {
    const RawScenario raw = generate_scene(config.data, Split::kVal, i);
    save_scenario((dir / "s1.json").string(), raw);
    save_scenario((dir / "s2.json").string(), load_scenario((dir / "s1.json").string()));
    const std::string text = scenario_to_json(raw);
    scenario = scenario && read_bytes(dir / "s1.json") == read_bytes(dir / "s2.json") &&
               scenario_to_json(scenario_from_json(text)) == text;
  }
  std::filesystem::remove_all(dir);

  const bool ok = traces && checkpoint && scenario;
  return {ok, std::string("loss traces ") + (traces ? "bit-identical" : "DIFFER") +
                  ", checkpoint round trip " + (checkpoint ? "bit-exact" : "DIFFERS") +
                  ", scenario JSON " + (scenario ? "byte-identical" : "DIFFERS") +
                  " over 20 scenes"};
}

}  // namespace
}  // namespace trajmae

int main(int argc, char** argv) {
  CLI::App app{"trajmae acceptance gate"};
  int criterion = 0;
  app.add_option("--criterion", criterion, "criterion to run (0 = all)")->check(CLI::Range(0, 8));
  CLI11_PARSE(app, argc, argv);

  using Fn = trajmae::Outcome (*)();
  const Fn criteria[] = {trajmae::criterion_gradients, trajmae::criterion_masking,
                         trajmae::criterion_invariance, trajmae::criterion_metrics,
                         trajmae::criterion_overfit,    trajmae::criterion_transfer,
                         trajmae::criterion_sweep,      trajmae::criterion_determinism};
  bool all = true;
  for (int i = 1; i <= 8; ++i) {
    if (criterion != 0 && criterion != i) continue;
    trajmae::Outcome o;
    try {
      o = criteria[i - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("CRITERION %d: %s %s\n", i, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all &= o.pass;
  }
  return all ? 0 : 1;
}
