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

// Masked scene autoencoder: encoder over visible tokens, decoder with learned
// mask tokens, linear reconstruction heads and the reconstruction loss.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trajmae/embedding.hpp"
#include "trajmae/masking.hpp"
#include "trajmae/optim.hpp"

namespace trajmae {

/// Stack of pre-norm transformer blocks followed by a LayerNorm.
/// Parameters: <name>.block<i>.*, <name>.norm.*
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(const std::string& name, std::size_t depth, const ModelConfig& config);

  void init(ParamStore& store, RngStream& rng) const;
  Var forward(const Context& ctx, Var x) const;

 private:
  std::vector<TransformerBlock> blocks_;
  LayerNorm norm_;
};

/// Concatenated visible tokens with PE added once, in history, future, lane
/// order. Throws "empty token set" when nothing is visible.
Var encoder_input(const TokenSet& tokens);

struct Decoded {
  Var history, future, lanes;  // decoded mask-token rows, grouped by type
};

struct Reconstruction {
  Var history;  // [|masked_history| x 2*kHistorySteps]
  Var future;   // [|masked_future| x 2*kFutureSteps]
  Var lanes;    // [|masked_lanes| x 2*kLanePoints]
};

struct MaeLossWeights {
  double history = 1.0;
  double future = 1.0;
  double lane = 0.35;
};

/// Elements with at least one valid step, counted over a whole batch.
/// Each component averages per-element means over this many elements.
struct MaeNormalizer {
  std::size_t history = 0;
  std::size_t future = 0;
  std::size_t lanes = 0;

  void add(const MaskedScene& m);
};

struct MaeLoss {
  Var total;
  double history = 0.0;  // unweighted component values
  double future = 0.0;
  double lane = 0.0;
};

/// Parameters: the SceneEmbedding prefixes plus encoder, decoder,
/// mask_token.{history,future,lane}, recon_head.{history,future,lane}.
class MaeModel {
 public:
  explicit MaeModel(const ModelConfig& config);

  void init(ParamStore& store, RngStream& rng) const;

  const ModelConfig& config() const { return config_; }
  const SceneEmbedding& embedding() const { return embed_; }
  const TransformerStack& encoder() const { return encoder_; }

  TokenSet embed_visible(const Context& ctx, const ProcessedScene& scene,
                         const MaskedScene& masked) const;
  Var encode(const Context& ctx, const TokenSet& tokens) const;
  /// Appends one mask token per masked element, adds PE to the whole
  /// sequence, decodes and returns the mask-token rows.
  Decoded decode(const Context& ctx, Var encoded, const TokenSet& tokens,
                 const ProcessedScene& scene, const MaskedScene& masked) const;
  Reconstruction reconstruct(const Context& ctx, const Decoded& decoded) const;

  /// Full pass for one scene.
  Reconstruction forward(const Context& ctx, const ProcessedScene& scene,
                         const MaskedScene& masked) const;

 private:
  ModelConfig config_;
  SceneEmbedding embed_;
  TransformerStack encoder_, decoder_;
  Linear head_history_, head_future_, head_lane_;
};

/// Weighted L1 (history, future) and MSE (lane) over valid steps of masked
/// elements. `norm` supplies the batch-level element counts; pass
/// MaeNormalizer filled from this scene alone for a per-scene loss. Throws if
/// the batch has no valid masked element at all.
MaeLoss mae_loss(const Reconstruction& recon, const MaskedScene& masked,
                 const MaeNormalizer& norm, const MaeLossWeights& weights = {});

struct PretrainOptions {
  double alpha = 0.4;
  double beta = 0.5;
  MaeLossWeights weights;
  double lr = 1e-3;
  double weight_decay = 1e-4;
};

struct PretrainRecord {
  double total = 0.0;
  double history = 0.0;
  double future = 0.0;
  double lane = 0.0;
};

/// One optimizer step over `batch`: masks each scene with `mask_rng`,
/// accumulates gradients scene by scene, then applies AdamW. Component
/// values are batch means. Throws on a non-finite loss.
PretrainRecord pretrain_step(const MaeModel& model, ParamStore& params,
                             const std::vector<const ProcessedScene*>& batch,
                             const PretrainOptions& options, RngStream& mask_rng,
                             RngStream& dropout_rng);

}  // namespace trajmae
