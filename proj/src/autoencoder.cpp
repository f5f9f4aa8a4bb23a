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

#include "trajmae/autoencoder.hpp"

#include <cmath>

namespace trajmae {

namespace {

Var empty_rows(const Context& ctx, std::size_t dim) { return ctx.constant(Tensor({0, dim})); }

// Number of elements in a [k x steps x 2] validity tensor with any valid step.
std::size_t count_valid_elements(const Tensor& valid) {
  if (valid.rank() == 0 || valid.dim(0) == 0) return 0;
  const std::size_t stride = valid.size() / valid.dim(0);
  std::size_t n = 0;
  for (std::size_t e = 0; e < valid.dim(0); ++e) {
    for (std::size_t i = 0; i < stride; ++i) {
      if (valid[e * stride + i] != 0.0) {
        ++n;
        break;
      }
    }
  }
  return n;
}

// Per-element mean over valid coordinates, summed over elements and divided
// by `count`. Returns an invalid Var when no element has a valid coordinate.
Var component_loss(Var pred, const Tensor& target, const Tensor& valid, std::size_t count,
                   LossKind kind) {
  if (valid.rank() == 0 || valid.dim(0) == 0 || count == 0) return Var();
  const std::size_t k = valid.dim(0);
  const std::size_t stride = valid.size() / k;
  Tensor weight(valid.shape());
  bool any = false;
  for (std::size_t e = 0; e < k; ++e) {
    double n = 0.0;
    for (std::size_t i = 0; i < stride; ++i) n += valid[e * stride + i] != 0.0;
    if (n == 0.0) continue;
    any = true;
    for (std::size_t i = 0; i < stride; ++i) {
      if (valid[e * stride + i] != 0.0) {
        weight[e * stride + i] = 1.0 / (n * static_cast<double>(count));
      }
    }
  }
  if (!any) return Var();
  return weighted_loss(pred, target, weight, kind);
}

}  // namespace

// ---------------------------------------------------------------------------
// TransformerStack

TransformerStack::TransformerStack(const std::string& name, std::size_t depth,
                                   const ModelConfig& config)
    : norm_(name + ".norm", config.dim) {
  for (std::size_t i = 0; i < depth; ++i) {
    blocks_.emplace_back(name + ".block" + std::to_string(i), config.dim, config.heads,
                         config.mlp_ratio, config.dropout);
  }
}

void TransformerStack::init(ParamStore& store, RngStream& rng) const {
  for (const auto& b : blocks_) b.init(store, rng);
  norm_.init(store);
}

Var TransformerStack::forward(const Context& ctx, Var x) const {
  for (const auto& b : blocks_) x = b.forward(ctx, x);
  return norm_.forward(ctx, x);
}

Var encoder_input(const TokenSet& tokens) {
  if (tokens.size() == 0) throw Error("empty token set");
  Var x = concat_rows({tokens.history, tokens.future, tokens.lanes});
  Var pe = concat_rows({tokens.pe_history, tokens.pe_future, tokens.pe_lanes});
  return add(x, pe);
}

// ---------------------------------------------------------------------------
// MaeNormalizer

void MaeNormalizer::add(const MaskedScene& m) {
  history += count_valid_elements(m.history_target_valid);
  future += count_valid_elements(m.future_target_valid);
  lanes += count_valid_elements(m.lane_target_valid);
}

// ---------------------------------------------------------------------------
// MaeModel

MaeModel::MaeModel(const ModelConfig& config)
    : config_(config),
      embed_(config, /*with_future=*/true),
      encoder_("encoder", config.encoder_depth, config),
      decoder_("decoder", config.decoder_depth, config),
      head_history_("recon_head.history", config.dim, 2 * kHistorySteps),
      head_future_("recon_head.future", config.dim, 2 * kFutureSteps),
      head_lane_("recon_head.lane", config.dim, 2 * kLanePoints) {
  validate(config);
}

void MaeModel::init(ParamStore& store, RngStream& rng) const {
  embed_.init(store, rng);
  encoder_.init(store, rng);
  for (const char* kind : {"history", "future", "lane"}) {
    store.add(std::string("mask_token.") + kind, normal_init({1, config_.dim}, 0.02, rng));
  }
  decoder_.init(store, rng);
  head_history_.init(store, rng);
  head_future_.init(store, rng);
  head_lane_.init(store, rng);
}

TokenSet MaeModel::embed_visible(const Context& ctx, const ProcessedScene& scene,
                                 const MaskedScene& masked) const {
  return embed_.embed(ctx, scene, masked.visible_history, masked.visible_future,
                      masked.visible_lanes);
}

Var MaeModel::encode(const Context& ctx, const TokenSet& tokens) const {
  return encoder_.forward(ctx, encoder_input(tokens));
}

Decoded MaeModel::decode(const Context& ctx, Var encoded, const TokenSet& tokens,
                         const ProcessedScene& scene, const MaskedScene& masked) const {
  const std::size_t nh = masked.masked_history.size();
  const std::size_t nf = masked.masked_future.size();
  const std::size_t nl = masked.masked_lanes.size();
  const std::size_t visible = tokens.size();
  if (encoded.rows() != visible) throw Error("encoded rows do not match the token set");

  Decoded out;
  if (nh + nf + nl == 0) {
    out.history = out.future = out.lanes = empty_rows(ctx, config_.dim);
    return out;
  }
  auto mask_rows = [&](const char* kind, std::size_t n) {
    return gather_rows(ctx.param(std::string("mask_token.") + kind),
                       std::vector<std::size_t>(n, 0));
  };
  Var x = concat_rows({encoded, mask_rows("history", nh), mask_rows("future", nf),
                       mask_rows("lane", nl)});

  // PE rows follow the row order of x.
  std::vector<std::size_t> agents = tokens.history_index;
  agents.insert(agents.end(), tokens.future_index.begin(), tokens.future_index.end());
  Tensor visible_poses = anchor_poses(scene, agents, tokens.lane_index);
  std::vector<std::size_t> masked_agents = masked.masked_history;
  masked_agents.insert(masked_agents.end(), masked.masked_future.begin(),
                       masked.masked_future.end());
  Tensor masked_poses = anchor_poses(scene, masked_agents, masked.masked_lanes);
  Tensor poses({visible + nh + nf + nl, 3});
  std::copy(visible_poses.values().begin(), visible_poses.values().end(), poses.data());
  std::copy(masked_poses.values().begin(), masked_poses.values().end(),
            poses.data() + visible_poses.size());
  x = add(x, embed_.pos_embed().forward(ctx, poses));

  Var y = decoder_.forward(ctx, x);
  auto rows = [&](std::size_t begin, std::size_t n) {
    if (n == 0) return empty_rows(ctx, config_.dim);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = begin + i;
    return gather_rows(y, std::move(idx));
  };
  out.history = rows(visible, nh);
  out.future = rows(visible + nh, nf);
  out.lanes = rows(visible + nh + nf, nl);
  return out;
}

Reconstruction MaeModel::reconstruct(const Context& ctx, const Decoded& decoded) const {
  auto head = [&](const Linear& h, Var x) {
    if (x.rows() == 0) return ctx.constant(Tensor({0, h.out()}));
    return h.forward(ctx, x);
  };
  return {head(head_history_, decoded.history), head(head_future_, decoded.future),
          head(head_lane_, decoded.lanes)};
}

Reconstruction MaeModel::forward(const Context& ctx, const ProcessedScene& scene,
                                 const MaskedScene& masked) const {
  TokenSet tokens = embed_visible(ctx, scene, masked);
  Var encoded = encode(ctx, tokens);
  return reconstruct(ctx, decode(ctx, encoded, tokens, scene, masked));
}

// ---------------------------------------------------------------------------
// Loss and training step

MaeLoss mae_loss(const Reconstruction& recon, const MaskedScene& masked,
                 const MaeNormalizer& norm, const MaeLossWeights& weights) {
  if (norm.history + norm.future + norm.lanes == 0) {
    throw Error("no valid masked element to reconstruct");
  }
  const Var parts[3] = {
      component_loss(recon.history, masked.history_target, masked.history_target_valid,
                     norm.history, LossKind::kL1),
      component_loss(recon.future, masked.future_target, masked.future_target_valid,
                     norm.future, LossKind::kL1),
      component_loss(recon.lanes, masked.lane_target, masked.lane_target_valid, norm.lanes,
                     LossKind::kMse)};
  const double w[3] = {weights.history, weights.future, weights.lane};

  MaeLoss out;
  double* values[3] = {&out.history, &out.future, &out.lane};
  for (std::size_t c = 0; c < 3; ++c) {
    if (!parts[c].valid()) continue;
    *values[c] = parts[c].value()[0];
    Var term = scale(parts[c], w[c]);
    out.total = out.total.valid() ? add(out.total, term) : term;
  }
  return out;
}

PretrainRecord pretrain_step(const MaeModel& model, ParamStore& params,
                             const std::vector<const ProcessedScene*>& batch,
                             const PretrainOptions& options, RngStream& mask_rng,
                             RngStream& dropout_rng) {
  if (batch.empty()) throw Error("empty batch");
  std::vector<MaskedScene> masked;
  masked.reserve(batch.size());
  MaeNormalizer norm;
  for (const ProcessedScene* s : batch) {
    masked.push_back(apply_mask(
        *s, plan_masks(s->num_agents(), s->num_lanes(), options.alpha, options.beta, mask_rng)));
    norm.add(masked.back());
  }

  params.zero_grad();
  PretrainRecord rec;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tape tape;
    Context ctx{tape, params, /*training=*/true, &dropout_rng};
    const Reconstruction r = model.forward(ctx, *batch[i], masked[i]);
    const MaeLoss loss = mae_loss(r, masked[i], norm, options.weights);
    if (!loss.total.valid()) continue;
    const double total = loss.total.value()[0];
    if (!std::isfinite(total)) throw Error("non-finite reconstruction loss");
    rec.total += total;
    rec.history += loss.history;
    rec.future += loss.future;
    rec.lane += loss.lane;
    accumulate_gradients(tape, loss.total, params);
  }
  adamw_step(params, options.lr, options.weight_decay);
  return rec;
}

}  // namespace trajmae
