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

// Token embeddings for agent streams and lane segments.

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "trajmae/layers.hpp"
#include "trajmae/scene.hpp"

namespace trajmae {

struct ModelConfig {
  std::size_t dim = 128;
  std::size_t encoder_depth = 4;
  std::size_t decoder_depth = 4;
  std::size_t heads = 8;
  std::size_t modes = 6;
  std::size_t mlp_ratio = 4;
  double dropout = 0.2;
  std::array<std::size_t, 3> fpn_kernels = {3, 5, 7};
  std::size_t fpn_blocks = 1;  // neighborhood-attention blocks per scale
};

/// Throws Error if dimensions are inconsistent.
void validate(const ModelConfig& config);

/// Three-scale temporal pyramid over [n x T x C_in] tracks, one C-vector per
/// track. Scale widths are C/4, C/2, C.
class FpnEmbedding {
 public:
  FpnEmbedding() = default;
  FpnEmbedding(const std::string& name, std::size_t in_channels, std::size_t seq_len,
               const ModelConfig& config);

  void init(ParamStore& store, RngStream& rng) const;
  /// `tracks` is [n x T x C_in]. Throws if T < 4 or shapes disagree.
  Var forward(const Context& ctx, const Tensor& tracks) const;

  std::size_t seq_len() const { return seq_len_; }

 private:
  std::size_t in_channels_ = 0;
  std::size_t seq_len_ = 0;
  std::size_t dim_ = 0;
  std::array<std::size_t, 3> kernels_{};
  Linear stem_;
  std::array<std::vector<TransformerBlock>, 3> blocks_;
  std::array<Conv1d, 2> down_;
  std::array<Linear, 3> lateral_;
  std::array<Conv1d, 2> up_;
  LayerNorm norm_;
};

/// Per-point MLP, masked max-pool, global feature fused back into every
/// point, second MLP, masked max-pool.
class LaneEmbedding {
 public:
  LaneEmbedding() = default;
  LaneEmbedding(const std::string& name, std::size_t dim);

  void init(ParamStore& store, RngStream& rng) const;
  /// `lanes` is [m x P x 3] with the flag in the last channel. Throws
  /// "empty polyline" if a segment has no flagged point.
  Var forward(const Context& ctx, const Tensor& lanes) const;

 private:
  std::size_t dim_ = 0;
  Mlp point_mlp_;
  Linear fuse_point_, fuse_global_;
  Linear out_;
  LayerNorm norm_;
};

/// Two-layer MLP on [x, y, cos(theta), sin(theta)].
class PositionalEmbedding {
 public:
  PositionalEmbedding() = default;
  PositionalEmbedding(const std::string& name, std::size_t dim);

  void init(ParamStore& store, RngStream& rng) const;
  /// `poses` is [k x 3] (x, y, theta); returns [k x C].
  Var forward(const Context& ctx, const Tensor& poses) const;

  /// MLP input rows for `poses`.
  static Tensor features(const Tensor& poses);

 private:
  Mlp mlp_;
};

enum class StreamType : std::size_t { kHistory = 0, kFuture = 1, kLane = 2 };

/// Learned attribute rows: agent category, lane type and stream type.
class SemanticTable {
 public:
  SemanticTable() = default;
  SemanticTable(const std::string& name, std::size_t dim);

  void init(ParamStore& store, RngStream& rng) const;
  Var agent_rows(const Context& ctx, const std::vector<AgentCategory>& cats) const;
  Var lane_rows(const Context& ctx, const std::vector<LaneType>& types) const;
  Var stream_rows(const Context& ctx, StreamType type, std::size_t count) const;

  std::string agent_table() const { return name_ + ".agent_category"; }
  std::string lane_table() const { return name_ + ".lane_type"; }
  std::string stream_table() const { return name_ + ".stream_type"; }

 private:
  std::string name_;
  std::size_t dim_ = 0;
};

/// Visible tokens and their positional embeddings. Index lists map rows back
/// into the scene.
struct TokenSet {
  Var history, future, lanes;           // [k x C] each, possibly zero rows
  Var pe_history, pe_future, pe_lanes;  // matching rows
  std::vector<std::size_t> history_index, future_index, lane_index;

  std::size_t size() const {
    return history_index.size() + future_index.size() + lane_index.size();
  }
};

/// All embedding layers. The future FPN exists only when `with_future`.
/// Parameter prefixes: hist_fpn, fut_fpn, lane_net, pos_embed, semantic.
class SceneEmbedding {
 public:
  SceneEmbedding() = default;
  SceneEmbedding(const ModelConfig& config, bool with_future);

  void init(ParamStore& store, RngStream& rng) const;

  /// Embeds the listed elements of `scene`. Token = stream embedding +
  /// attribute row + stream-type row; PE of the element's anchor is kept
  /// separately.
  TokenSet embed(const Context& ctx, const ProcessedScene& scene,
                 const std::vector<std::size_t>& history_index,
                 const std::vector<std::size_t>& future_index,
                 const std::vector<std::size_t>& lane_index) const;

  const FpnEmbedding& history_fpn() const { return hist_; }
  const FpnEmbedding& future_fpn() const { return fut_; }
  const LaneEmbedding& lane_net() const { return lane_; }
  const PositionalEmbedding& pos_embed() const { return pe_; }
  const SemanticTable& semantic() const { return semantic_; }
  bool with_future() const { return with_future_; }

 private:
  std::size_t dim_ = 0;
  bool with_future_ = false;
  FpnEmbedding hist_, fut_;
  LaneEmbedding lane_;
  PositionalEmbedding pe_;
  SemanticTable semantic_;
};

/// Rows `idx` of a [n x ...] tensor as a new [|idx| x ...] tensor.
Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& idx);

/// Anchor poses [k x 3] of agents `agents` followed by lanes `lanes`.
Tensor anchor_poses(const ProcessedScene& scene, const std::vector<std::size_t>& agents,
                    const std::vector<std::size_t>& lanes);

}  // namespace trajmae
