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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "trajmae/autoencoder.hpp"

namespace trajmae {
namespace {

using testing::check_gradients;
using testing::synthetic_scene;
using testing::tiny_model;

ModelConfig no_dropout() {
  ModelConfig c = tiny_model();
  c.dropout = 0.0;
  return c;
}

Tensor random_tensor(Shape shape, RngStream& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal();
  return t;
}

MaskedScene mask(const ProcessedScene& scene, double alpha, double beta, std::uint64_t seed) {
  RngStream rng(seed);
  return apply_mask(scene, plan_masks(scene.num_agents(), scene.num_lanes(), alpha, beta, rng));
}

MaeNormalizer normalizer_of(const MaskedScene& m) {
  MaeNormalizer n;
  n.add(m);
  return n;
}

// Reference L1/MSE component: mean over valid coordinates per element, then
// mean over elements that have any valid coordinate.
double reference_component(const Tensor& pred_row_major, const Tensor& target,
                           const Tensor& valid, bool squared) {
  const std::size_t k = target.dim(0);
  const std::size_t per = k == 0 ? 0 : target.size() / k;
  double total = 0.0;
  std::size_t elements = 0;
  for (std::size_t i = 0; i < k; ++i) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < per; ++j) {
      if (valid[i * per + j] == 0.0) continue;
      const double d = pred_row_major[i * per + j] - target[i * per + j];
      acc += squared ? d * d : std::abs(d);
      ++n;
    }
    if (n == 0) continue;
    total += acc / static_cast<double>(n);
    ++elements;
  }
  return elements == 0 ? 0.0 : total / static_cast<double>(elements);
}

TEST(TransformerStack, PermutationEquivariance) {
  ModelConfig c = no_dropout();
  c.dim = 16;
  TransformerStack stack("enc", 2, c);
  ParamStore store;
  RngStream rng(1);
  stack.init(store, rng);
  const Tensor x = random_tensor({7, 16}, rng);
  const std::vector<std::size_t> perm = RngStream(2).permutation(7);
  Tape tape;
  Context ctx{tape, store};
  const Tensor y = stack.forward(ctx, ctx.constant(x)).value();
  const Tensor yp = stack.forward(ctx, ctx.constant(select_rows(x, perm))).value();
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t col = 0; col < 16; ++col) {
      EXPECT_NEAR(yp(r, col), y(perm[r], col), 1e-10);
    }
  }
}

TEST(TransformerStack, GradientCheckThreeTokens) {
  TransformerStack stack("enc", 2, no_dropout());
  ParamStore store;
  RngStream rng(3);
  stack.init(store, rng);
  const Tensor x = random_tensor({3, 8}, rng);
  const Tensor w = random_tensor({3, 8}, rng);
  // Key biases have an exactly zero gradient; the floor absorbs FD noise.
  const auto r = check_gradients(
      store,
      [&](Tape& tape) {
        Context ctx{tape, store};
        return sum(mul(stack.forward(ctx, ctx.constant(x)), ctx.constant(w)));
      },
      1e-5, 1, /*floor=*/1e-5);
  EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
}

TEST(EncoderInput, EmptyTokenSetIsError) {
  Tape tape;
  ParamStore store;
  Context ctx{tape, store};
  TokenSet ts;
  for (Var* v : {&ts.history, &ts.future, &ts.lanes, &ts.pe_history, &ts.pe_future, &ts.pe_lanes}) {
    *v = ctx.constant(Tensor({0, 8}));
  }
  EXPECT_THROW(encoder_input(ts), Error);
}

class MaeModelTest : public ::testing::Test {
 protected:
  MaeModelTest() : model_(no_dropout()) {
    RngStream rng(5);
    model_.init(params_, rng);
  }

  MaeModel model_;
  ParamStore params_;
};

TEST_F(MaeModelTest, ParameterGroups) {
  for (const char* name :
       {"mask_token.history", "mask_token.future", "mask_token.lane", "recon_head.history.weight",
        "recon_head.future.weight", "recon_head.lane.weight", "decoder.norm.scale"}) {
    EXPECT_TRUE(params_.contains(name)) << name;
  }
}

TEST_F(MaeModelTest, ReconstructionShapesFollowMaskCounts) {
  const ProcessedScene scene = synthetic_scene(20);
  const MaskedScene m = mask(scene, 0.4, 0.5, 1);
  Tape tape;
  Context ctx{tape, params_};
  const Reconstruction r = model_.forward(ctx, scene, m);
  EXPECT_EQ(r.history.shape(), (Shape{m.masked_history.size(), 2 * kHistorySteps}));
  EXPECT_EQ(r.future.shape(), (Shape{m.masked_future.size(), 2 * kFutureSteps}));
  EXPECT_EQ(r.lanes.shape(), (Shape{m.masked_lanes.size(), 2 * kLanePoints}));
  EXPECT_EQ(m.masked_history.size() + m.masked_future.size(), scene.num_agents());
}

TEST_F(MaeModelTest, MaskedLanesWithSameAnchorDecodeIdentically) {
  ProcessedScene scene = synthetic_scene(21);
  ASSERT_GE(scene.num_lanes(), 2u);
  for (std::size_t c = 0; c < 3; ++c) scene.lane_anchor(1, c) = scene.lane_anchor(0, c);
  MaskedScene m = mask(scene, 0.4, 0.0, 2);
  // Mask lanes 0 and 1 only.
  MaskPlan plan;
  RngStream rng(3);
  plan = plan_masks(scene.num_agents(), scene.num_lanes(), 0.4, 0.0, rng);
  plan.lane_masked[0] = plan.lane_masked[1] = 1;
  m = apply_mask(scene, plan);
  ASSERT_EQ(m.masked_lanes.size(), 2u);
  Tape tape;
  Context ctx{tape, params_};
  const Reconstruction r = model_.forward(ctx, scene, m);
  const Tensor& lanes = r.lanes.value();
  for (std::size_t col = 0; col < lanes.cols(); ++col) {
    EXPECT_NEAR(lanes(0, col), lanes(1, col), 1e-12);
  }
}

TEST_F(MaeModelTest, NoMaskedElementsDecodesToEmpty) {
  const ProcessedScene scene = synthetic_scene(22);
  MaskedScene m = mask(scene, 0.4, 0.5, 4);
  // Keep only visible elements.
  m.masked_history.clear();
  m.masked_future.clear();
  m.masked_lanes.clear();
  m.history_target = m.history_target_valid = Tensor({0, kHistorySteps, 2});
  m.future_target = m.future_target_valid = Tensor({0, kFutureSteps, 2});
  m.lane_target = m.lane_target_valid = Tensor({0, kLanePoints, 2});
  Tape tape;
  Context ctx{tape, params_};
  const Reconstruction r = model_.forward(ctx, scene, m);
  EXPECT_EQ(r.history.rows(), 0u);
  EXPECT_EQ(r.future.rows(), 0u);
  EXPECT_EQ(r.lanes.rows(), 0u);
  EXPECT_THROW(mae_loss(r, m, normalizer_of(m)), Error);
}

TEST_F(MaeModelTest, ConstantHeadMatchesReferenceLoss) {
  const ProcessedScene scene = synthetic_scene(23);
  const MaskedScene m = mask(scene, 0.4, 0.5, 5);
  RngStream rng(6);
  Tensor b_h({2 * kHistorySteps}), b_f({2 * kFutureSteps}), b_l({2 * kLanePoints});
  for (Tensor* b : {&b_h, &b_f, &b_l}) {
    for (double& v : b->values()) v = rng.normal();
  }
  const std::pair<const char*, const Tensor*> heads[] = {
      {"recon_head.history", &b_h}, {"recon_head.future", &b_f}, {"recon_head.lane", &b_l}};
  for (const auto& [name, bias] : heads) {
    const std::string w = std::string(name) + ".weight";
    params_.assign(w, Tensor(params_.at(w).value.shape()));
    params_.assign(std::string(name) + ".bias", *bias);
  }
  Tape tape;
  Context ctx{tape, params_};
  const Reconstruction r = model_.forward(ctx, scene, m);
  const MaeLossWeights weights{1.3, 0.7, 0.35};
  const MaeLoss loss = mae_loss(r, m, normalizer_of(m), weights);

  auto tiled = [](const Tensor& bias, std::size_t rows) {
    Tensor t({rows, bias.size()});
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy(bias.values().begin(), bias.values().end(), t.data() + i * bias.size());
    }
    return t;
  };
  const double h = reference_component(tiled(b_h, m.masked_history.size()), m.history_target,
                                       m.history_target_valid, false);
  const double f = reference_component(tiled(b_f, m.masked_future.size()), m.future_target,
                                       m.future_target_valid, false);
  const double l = reference_component(tiled(b_l, m.masked_lanes.size()), m.lane_target,
                                       m.lane_target_valid, true);
  EXPECT_NEAR(loss.history, h, 1e-10);
  EXPECT_NEAR(loss.future, f, 1e-10);
  EXPECT_NEAR(loss.lane, l, 1e-10);
  EXPECT_NEAR(loss.total.value().item(), 1.3 * h + 0.7 * f + 0.35 * l, 1e-10);
}

TEST(MaeLoss, LaneOnlyExample) {
  // One masked lane, every point valid, prediction off by 1 in both
  // coordinates: MSE is 1, so the weighted total is the lane weight.
  MaskedScene m;
  m.masked_lanes = {0};
  m.history_target = m.history_target_valid = Tensor({0, kHistorySteps, 2});
  m.future_target = m.future_target_valid = Tensor({0, kFutureSteps, 2});
  m.lane_target = Tensor({1, kLanePoints, 2});
  m.lane_target_valid = Tensor({1, kLanePoints, 2}, 1.0);
  Tape tape;
  Reconstruction r;
  r.history = tape.constant(Tensor({0, 2 * kHistorySteps}));
  r.future = tape.constant(Tensor({0, 2 * kFutureSteps}));
  r.lanes = tape.constant(Tensor({1, 2 * kLanePoints}, 1.0));
  const MaeLoss loss = mae_loss(r, m, normalizer_of(m));
  EXPECT_DOUBLE_EQ(loss.lane, 1.0);
  EXPECT_DOUBLE_EQ(loss.history, 0.0);
  EXPECT_DOUBLE_EQ(loss.future, 0.0);
  EXPECT_DOUBLE_EQ(loss.total.value().item(), 0.35);
}

TEST(MaeLoss, InvalidStepsAreIgnored) {
  MaskedScene m;
  m.masked_future = {0};
  m.history_target = m.history_target_valid = Tensor({0, kHistorySteps, 2});
  m.lane_target = m.lane_target_valid = Tensor({0, kLanePoints, 2});
  m.future_target = Tensor({1, kFutureSteps, 2});
  m.future_target_valid = Tensor({1, kFutureSteps, 2});
  m.future_target_valid[0] = m.future_target_valid[1] = 1.0;  // step 0 only
  Tensor pred({1, 2 * kFutureSteps}, 100.0);
  pred[0] = 2.0;
  pred[1] = -4.0;
  Tape tape;
  Reconstruction r;
  r.history = tape.constant(Tensor({0, 2 * kHistorySteps}));
  r.future = tape.constant(pred);
  r.lanes = tape.constant(Tensor({0, 2 * kLanePoints}));
  EXPECT_DOUBLE_EQ(mae_loss(r, m, normalizer_of(m)).future, 3.0);
}

TEST_F(MaeModelTest, MaskedContentDoesNotReachTheEncoder) {
  const ProcessedScene scene = synthetic_scene(24);
  const MaskedScene m = mask(scene, 0.4, 0.5, 7);
  ProcessedScene altered = scene;
  RngStream rng(8);
  for (std::size_t a : m.masked_future) {
    for (std::size_t t = 0; t < kFutureSteps; ++t) {
      altered.agent_future[(a * kFutureSteps + t) * kFutureChannels] += rng.normal();
    }
  }
  for (std::size_t a : m.masked_history) {
    for (std::size_t t = 0; t < kHistorySteps; ++t) {
      altered.agent_history[(a * kHistorySteps + t) * kHistoryChannels + 1] += rng.normal();
    }
  }
  for (std::size_t l : m.masked_lanes) {
    altered.lanes[l * kLanePoints * kLaneChannels] += 3.0;
  }
  const MaskedScene m2 = mask(altered, 0.4, 0.5, 7);
  ASSERT_EQ(m.masked_future, m2.masked_future);
  Tape tape;
  Context ctx{tape, params_};
  const Tensor e1 = model_.encode(ctx, model_.embed_visible(ctx, scene, m)).value();
  const Tensor e2 = model_.encode(ctx, model_.embed_visible(ctx, altered, m2)).value();
  EXPECT_EQ(e1, e2);
}

TEST_F(MaeModelTest, GradientsOnlyReachUsedBranches) {
  const ProcessedScene scene = synthetic_scene(25);
  // alpha = 0: every history visible, every future masked; beta = 0.
  const MaskedScene m = mask(scene, 0.0, 0.0, 9);
  ASSERT_TRUE(m.masked_lanes.empty());
  ASSERT_TRUE(m.masked_history.empty());
  Tape tape;
  Context ctx{tape, params_};
  const MaeLoss loss = mae_loss(model_.forward(ctx, scene, m), m, normalizer_of(m));
  compute_gradients(tape, loss.total, params_);
  auto grad_norm = [&](const std::string& prefix) {
    double s = 0.0;
    for (const std::string& name : params_.names()) {
      if (name.rfind(prefix, 0) != 0) continue;
      for (double g : params_.at(name).grad.values()) s += g * g;
    }
    return s;
  };
  EXPECT_EQ(grad_norm("mask_token.lane"), 0.0);
  EXPECT_EQ(grad_norm("mask_token.history"), 0.0);
  EXPECT_EQ(grad_norm("recon_head.lane"), 0.0);
  EXPECT_EQ(grad_norm("recon_head.history"), 0.0);
  EXPECT_EQ(grad_norm("fut_fpn."), 0.0);
  EXPECT_GT(grad_norm("mask_token.future"), 0.0);
  EXPECT_GT(grad_norm("recon_head.future"), 0.0);
  EXPECT_GT(grad_norm("hist_fpn."), 0.0);
  EXPECT_GT(grad_norm("lane_net."), 0.0);
  EXPECT_GT(grad_norm("encoder."), 0.0);
}

TEST_F(MaeModelTest, LossInvariantToRigidMotion) {
  GenConfig gc;
  gc.random_global_transform = false;
  RngStream gen(30);
  const RawScenario raw = generate_synthetic_scenario(gc, gen);
  const ProcessedScene a = normalize_to_focal(raw);
  const ProcessedScene b =
      normalize_to_focal(testing::rigid_transform(raw, 2.1, {-350.0, 870.0}));
  const MaskedScene ma = mask(a, 0.4, 0.5, 11);
  const MaskedScene mb = mask(b, 0.4, 0.5, 11);
  Tape tape;
  Context ctx{tape, params_};
  const double la = mae_loss(model_.forward(ctx, a, ma), ma, normalizer_of(ma)).total.value().item();
  const double lb = mae_loss(model_.forward(ctx, b, mb), mb, normalizer_of(mb)).total.value().item();
  EXPECT_NEAR(la, lb, 1e-8);
}

TEST(MaeGradient, FiniteDifferenceOnSmallFixture) {
  MaeModel model(no_dropout());
  ParamStore params;
  RngStream rng(12);
  model.init(params, rng);
  const ProcessedScene scene = normalize_to_focal(testing::two_agent_three_lane());
  MaskPlan plan;
  plan.agent_assignment = {AgentMask::kFutureMasked, AgentMask::kHistoryMasked};
  plan.lane_masked = {1, 0, 1};
  const MaskedScene m = apply_mask(scene, plan);
  const auto r = check_gradients(
      params,
      [&](Tape& tape) {
        Context ctx{tape, params};
        return mae_loss(model.forward(ctx, scene, m), m, normalizer_of(m)).total;
      },
      1e-5, /*stride=*/7, /*floor=*/1e-5);
  // L1 kinks are measure-zero; a loose bound still catches wiring errors.
  EXPECT_LT(r.max_rel_err, 1e-3) << r.worst;
}

TEST(Pretrain, SingleSceneOverfits) {
  MaeModel model(no_dropout());
  ParamStore params;
  RngStream init(13);
  model.init(params, init);
  const ProcessedScene scene = synthetic_scene(31);
  const std::vector<const ProcessedScene*> batch = {&scene};
  PretrainOptions options;
  options.lr = 3e-3;
  options.weight_decay = 0.0;
  const RngStream fixed_mask(14);
  RngStream drop_rng(15);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    RngStream mask_rng = fixed_mask;  // same mask every step
    const PretrainRecord rec = pretrain_step(model, params, batch, options, mask_rng, drop_rng);
    if (step < 10) first += rec.total / 10.0;
    if (step >= 190) last += rec.total / 10.0;
  }
  EXPECT_LT(last, 0.5 * first) << "first " << first << " last " << last;
}

TEST(Pretrain, DeterministicGivenSeeds) {
  auto run = [] {
    MaeModel model(tiny_model());
    ParamStore params;
    RngStream init(16);
    model.init(params, init);
    const ProcessedScene s0 = synthetic_scene(40), s1 = synthetic_scene(41);
    RngStream mask_rng(17), drop_rng(18);
    for (int step = 0; step < 3; ++step) {
      pretrain_step(model, params, {&s0, &s1}, {}, mask_rng, drop_rng);
    }
    return params;
  };
  const ParamStore a = run(), b = run();
  for (const std::string& name : a.names()) {
    EXPECT_EQ(a.at(name).value, b.at(name).value) << name;
  }
}

}  // namespace
}  // namespace trajmae
