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

#include "trajmae/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace trajmae {

namespace {

std::size_t scale_heads(std::size_t width) { return std::max<std::size_t>(1, width / 16); }

Var empty_rows(const Context& ctx, std::size_t dim) { return ctx.constant(Tensor({0, dim})); }

}  // namespace

void validate(const ModelConfig& c) {
  if (c.dim < 4 || c.dim % 4 != 0) throw Error("model dim must be a positive multiple of 4");
  if (c.heads == 0 || c.dim % c.heads != 0) {
    throw Error("model dim " + std::to_string(c.dim) + " is not divisible by " +
                std::to_string(c.heads) + " heads");
  }
  if (c.modes == 0) throw Error("modes must be >= 1");
  if (c.mlp_ratio == 0) throw Error("mlp_ratio must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw Error("dropout must be in [0, 1)");
  if (c.fpn_blocks == 0) throw Error("fpn_blocks must be >= 1");
  for (std::size_t k : c.fpn_kernels) {
    if (k == 0 || k % 2 == 0) throw Error("fpn kernels must be odd");
  }
}

Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
  if (t.rank() == 0) throw Error("select_rows on a scalar");
  Shape shape = t.shape();
  const std::size_t stride = t.dim(0) == 0 ? 0 : t.size() / t.dim(0);
  shape[0] = idx.size();
  Tensor out(shape);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= t.dim(0)) throw Error("select_rows index out of range");
    std::memcpy(out.data() + k * stride, t.data() + idx[k] * stride, stride * sizeof(double));
  }
  return out;
}

Tensor anchor_poses(const ProcessedScene& scene, const std::vector<std::size_t>& agents,
                    const std::vector<std::size_t>& lanes) {
  Tensor a = select_rows(scene.agent_anchor, agents);
  Tensor l = select_rows(scene.lane_anchor, lanes);
  Tensor out({agents.size() + lanes.size(), 3});
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(l.values().begin(), l.values().end(), out.data() + a.size());
  return out;
}

// ---------------------------------------------------------------------------
// FpnEmbedding

FpnEmbedding::FpnEmbedding(const std::string& name, std::size_t in_channels,
                           std::size_t seq_len, const ModelConfig& config)
    : in_channels_(in_channels),
      seq_len_(seq_len),
      dim_(config.dim),
      kernels_(config.fpn_kernels) {
  validate(config);
  if (seq_len < 4) throw Error("FPN needs at least 4 timesteps, got " + std::to_string(seq_len));
  const std::array<std::size_t, 3> w = {dim_ / 4, dim_ / 2, dim_};
  stem_ = Linear(name + ".stem", in_channels, w[0]);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t b = 0; b < config.fpn_blocks; ++b) {
      blocks_[s].emplace_back(name + ".scale" + std::to_string(s) + ".block" + std::to_string(b),
                              w[s], scale_heads(w[s]), config.mlp_ratio, 0.0);
    }
    lateral_[s] = Linear(name + ".lateral" + std::to_string(s), w[s], dim_);
  }
  for (std::size_t s = 0; s < 2; ++s) {
    down_[s] = Conv1d(name + ".down" + std::to_string(s), w[s], w[s + 1]);
    up_[s] = Conv1d(name + ".up" + std::to_string(s), dim_, dim_);
  }
  norm_ = LayerNorm(name + ".norm", dim_);
}

void FpnEmbedding::init(ParamStore& store, RngStream& rng) const {
  stem_.init(store, rng);
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& b : blocks_[s]) b.init(store, rng);
    lateral_[s].init(store, rng);
  }
  for (std::size_t s = 0; s < 2; ++s) {
    down_[s].init(store, rng);
    up_[s].init(store, rng);
  }
  norm_.init(store);
}

Var FpnEmbedding::forward(const Context& ctx, const Tensor& tracks) const {
  if (tracks.rank() != 3 || tracks.dim(1) != seq_len_ || tracks.dim(2) != in_channels_) {
    throw Error("FPN expects [n x " + std::to_string(seq_len_) + " x " +
                std::to_string(in_channels_) + "], got " + to_string(tracks.shape()));
  }
  const std::size_t n = tracks.dim(0);
  if (n == 0) return empty_rows(ctx, dim_);

  std::array<std::size_t, 3> len{};
  len[0] = seq_len_;
  len[1] = (len[0] + 1) / 2;
  len[2] = (len[1] + 1) / 2;

  std::array<Var, 3> feat;
  Var x = stem_.forward(ctx, ctx.constant(tracks.reshaped({n * seq_len_, in_channels_})));
  for (std::size_t s = 0; s < 3; ++s) {
    if (s > 0) x = down_[s - 1].forward(ctx, x, len[s - 1], 2);
    for (const auto& b : blocks_[s]) x = b.forward_local(ctx, x, len[s], kernels_[s]);
    feat[s] = x;
  }

  // Top-down: repeat each coarse step twice, truncate, smooth, add lateral.
  Var p = lateral_[2].forward(ctx, feat[2]);
  for (std::size_t s = 2; s-- > 0;) {
    std::vector<std::size_t> idx;
    idx.reserve(n * len[s]);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < len[s]; ++t) idx.push_back(i * len[s + 1] + t / 2);
    }
    Var up = up_[s].forward(ctx, gather_rows(p, std::move(idx)), len[s], 1);
    p = add(lateral_[s].forward(ctx, feat[s]), up);
  }

  std::vector<std::size_t> last(n);
  for (std::size_t i = 0; i < n; ++i) last[i] = i * seq_len_ + seq_len_ - 1;
  return norm_.forward(ctx, gather_rows(p, std::move(last)));
}

// ---------------------------------------------------------------------------
// LaneEmbedding

LaneEmbedding::LaneEmbedding(const std::string& name, std::size_t dim)
    : dim_(dim),
      point_mlp_(name + ".point_mlp", {kLaneChannels, dim, dim}, Activation::kRelu),
      fuse_point_(name + ".fuse_point", dim, dim),
      fuse_global_(name + ".fuse_global", dim, dim, /*bias=*/false),
      out_(name + ".out", dim, dim),
      norm_(name + ".norm", dim) {}

void LaneEmbedding::init(ParamStore& store, RngStream& rng) const {
  point_mlp_.init(store, rng);
  fuse_point_.init(store, rng);
  fuse_global_.init(store, rng);
  out_.init(store, rng);
  norm_.init(store);
}

Var LaneEmbedding::forward(const Context& ctx, const Tensor& lanes) const {
  if (lanes.rank() != 3 || lanes.dim(1) == 0 || lanes.dim(2) != kLaneChannels) {
    throw Error("lane embedding expects [m x P x 3], got " + to_string(lanes.shape()));
  }
  const std::size_t m = lanes.dim(0);
  const std::size_t pts = lanes.dim(1);
  if (m == 0) return empty_rows(ctx, dim_);
  std::vector<std::uint8_t> valid(m * pts);
  std::vector<std::size_t> segment(m * pts);
  for (std::size_t r = 0; r < m * pts; ++r) {
    valid[r] = lanes[r * kLaneChannels + 2] != 0.0;
    segment[r] = r / pts;
  }
  Var h = relu(point_mlp_.forward(ctx, ctx.constant(lanes.reshaped({m * pts, kLaneChannels}))));
  Var g = segment_max(h, pts, valid);
  Var fused = relu(add(fuse_point_.forward(ctx, h),
                       gather_rows(fuse_global_.forward(ctx, g), std::move(segment))));
  return norm_.forward(ctx, segment_max(out_.forward(ctx, fused), pts, valid));
}

// ---------------------------------------------------------------------------
// PositionalEmbedding

PositionalEmbedding::PositionalEmbedding(const std::string& name, std::size_t dim)
    : mlp_(name, {4, dim, dim}, Activation::kGelu) {}

void PositionalEmbedding::init(ParamStore& store, RngStream& rng) const { mlp_.init(store, rng); }

Tensor PositionalEmbedding::features(const Tensor& poses) {
  if (poses.rank() != 2 || poses.cols() != 3) {
    throw Error("positional embedding expects [k x 3] poses, got " + to_string(poses.shape()));
  }
  Tensor f({poses.rows(), 4});
  for (std::size_t r = 0; r < poses.rows(); ++r) {
    f(r, 0) = poses(r, 0);
    f(r, 1) = poses(r, 1);
    f(r, 2) = std::cos(poses(r, 2));
    f(r, 3) = std::sin(poses(r, 2));
  }
  return f;
}

Var PositionalEmbedding::forward(const Context& ctx, const Tensor& poses) const {
  return mlp_.forward(ctx, ctx.constant(features(poses)));
}

// ---------------------------------------------------------------------------
// SemanticTable

SemanticTable::SemanticTable(const std::string& name, std::size_t dim) : name_(name), dim_(dim) {}

void SemanticTable::init(ParamStore& store, RngStream& rng) const {
  store.add(agent_table(), normal_init({kNumAgentCategories, dim_}, 0.02, rng));
  store.add(lane_table(), normal_init({kNumLaneTypes, dim_}, 0.02, rng));
  store.add(stream_table(), normal_init({3, dim_}, 0.02, rng));
}

Var SemanticTable::agent_rows(const Context& ctx, const std::vector<AgentCategory>& cats) const {
  std::vector<std::size_t> idx;
  for (AgentCategory c : cats) {
    const auto i = static_cast<std::size_t>(c);
    if (i >= kNumAgentCategories) throw Error("unknown agent category index " + std::to_string(i));
    idx.push_back(i);
  }
  return gather_rows(ctx.param(agent_table()), std::move(idx));
}

Var SemanticTable::lane_rows(const Context& ctx, const std::vector<LaneType>& types) const {
  std::vector<std::size_t> idx;
  for (LaneType t : types) {
    const auto i = static_cast<std::size_t>(t);
    if (i >= kNumLaneTypes) throw Error("unknown lane type index " + std::to_string(i));
    idx.push_back(i);
  }
  return gather_rows(ctx.param(lane_table()), std::move(idx));
}

Var SemanticTable::stream_rows(const Context& ctx, StreamType type, std::size_t count) const {
  return gather_rows(ctx.param(stream_table()),
                     std::vector<std::size_t>(count, static_cast<std::size_t>(type)));
}

// ---------------------------------------------------------------------------
// SceneEmbedding

SceneEmbedding::SceneEmbedding(const ModelConfig& config, bool with_future)
    : dim_(config.dim),
      with_future_(with_future),
      hist_("hist_fpn", kHistoryChannels, kHistorySteps, config),
      lane_("lane_net", config.dim),
      pe_("pos_embed", config.dim),
      semantic_("semantic", config.dim) {
  if (with_future) fut_ = FpnEmbedding("fut_fpn", kFutureChannels, kFutureSteps, config);
}

void SceneEmbedding::init(ParamStore& store, RngStream& rng) const {
  hist_.init(store, rng);
  if (with_future_) fut_.init(store, rng);
  lane_.init(store, rng);
  pe_.init(store, rng);
  semantic_.init(store, rng);
}

TokenSet SceneEmbedding::embed(const Context& ctx, const ProcessedScene& scene,
                               const std::vector<std::size_t>& history_index,
                               const std::vector<std::size_t>& future_index,
                               const std::vector<std::size_t>& lane_index) const {
  if (!future_index.empty() && !with_future_) {
    throw Error("future tokens requested but the model has no future embedding");
  }
  auto categories = [&](const std::vector<std::size_t>& idx) {
    std::vector<AgentCategory> c;
    for (std::size_t i : idx) c.push_back(scene.agent_category.at(i));
    return c;
  };
  auto agent_tokens = [&](const FpnEmbedding& fpn, const Tensor& streams,
                          const std::vector<std::size_t>& idx, StreamType type) {
    if (idx.empty()) return empty_rows(ctx, dim_);
    Var t = fpn.forward(ctx, select_rows(streams, idx));
    t = add(t, semantic_.agent_rows(ctx, categories(idx)));
    return add(t, semantic_.stream_rows(ctx, type, idx.size()));
  };
  auto pe = [&](const std::vector<std::size_t>& agents, const std::vector<std::size_t>& lanes) {
    if (agents.empty() && lanes.empty()) return empty_rows(ctx, dim_);
    return pe_.forward(ctx, anchor_poses(scene, agents, lanes));
  };

  TokenSet ts;
  ts.history_index = history_index;
  ts.future_index = future_index;
  ts.lane_index = lane_index;
  ts.history = agent_tokens(hist_, scene.agent_history, history_index, StreamType::kHistory);
  ts.future = agent_tokens(fut_, scene.agent_future, future_index, StreamType::kFuture);
  if (lane_index.empty()) {
    ts.lanes = empty_rows(ctx, dim_);
  } else {
    std::vector<LaneType> types;
    for (std::size_t j : lane_index) types.push_back(scene.lane_type.at(j));
    Var t = lane_.forward(ctx, select_rows(scene.lanes, lane_index));
    t = add(t, semantic_.lane_rows(ctx, types));
    ts.lanes = add(t, semantic_.stream_rows(ctx, StreamType::kLane, lane_index.size()));
  }
  ts.pe_history = pe(history_index, {});
  ts.pe_future = pe(future_index, {});
  ts.pe_lanes = pe({}, lane_index);
  return ts;
}

}  // namespace trajmae
