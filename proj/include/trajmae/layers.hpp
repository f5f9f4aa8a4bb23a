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

// Parameterized building blocks. A layer is a descriptor (parameter-name
// prefix plus dimensions); its weights live in a ParamStore. init() registers
// freshly initialized weights, forward() reads them through a Context.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trajmae/autodiff.hpp"
#include "trajmae/param_store.hpp"
#include "trajmae/rng.hpp"

namespace trajmae {

/// Per-forward state: the tape being recorded, the weights, and whether
/// dropout is active.
struct Context {
  Tape& tape;
  ParamStore& params;
  bool training = false;
  RngStream* dropout_rng = nullptr;

  Var param(const std::string& name) const { return tape.parameter(params, name); }
  Var constant(Tensor t) const { return tape.constant(std::move(t)); }
  /// Dropout when training with a configured stream; identity otherwise.
  Var dropout(Var x, double rate) const;
};

// Initializers. Linear and conv weights use U(-sqrt(1/fan_in), sqrt(1/fan_in)).
Tensor uniform_fan_in(Shape shape, std::size_t fan_in, RngStream& rng);
Tensor normal_init(Shape shape, double stddev, RngStream& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, bool bias = true)
      : name_(std::move(name)), in_(in), out_(out), bias_(bias) {}

  void init(ParamStore& store, RngStream& rng) const;
  Var forward(const Context& ctx, Var x) const;

  const std::string& name() const { return name_; }
  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

 private:
  std::string name_;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  bool bias_ = true;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, std::size_t dim) : name_(std::move(name)), dim_(dim) {}

  void init(ParamStore& store) const;
  Var forward(const Context& ctx, Var x) const;

 private:
  std::string name_;
  std::size_t dim_ = 0;
};

enum class Activation { kRelu, kGelu };

Var activate(Var x, Activation act);

/// Stack of Linear layers with an activation between consecutive layers
/// (none after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, std::vector<std::size_t> widths, Activation act);

  void init(ParamStore& store, RngStream& rng) const;
  Var forward(const Context& ctx, Var x) const;

  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::kGelu;
};

/// Learned Q/K/V/output projections around `attention`.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  /// Throws when `dim` is not divisible by `heads`.
  MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t heads);

  void init(ParamStore& store, RngStream& rng) const;
  /// Attention of x_q rows over x_kv rows. Empty `windows` means every query
  /// sees every key.
  Var forward(const Context& ctx, Var x_q, Var x_kv, std::span<const KeyWindow> windows = {},
              std::span<const std::uint8_t> key_valid = {}) const;

  std::size_t heads() const { return heads_; }
  const Linear& query() const { return q_; }
  const Linear& key() const { return k_; }
  const Linear& value() const { return v_; }
  const Linear& output() const { return o_; }

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  Linear q_, k_, v_, o_;
};

/// Windows for 1D neighborhood attention over `num_seqs` stacked sequences of
/// length `seq_len`. Each window holds exactly `kernel` neighbors, shifted
/// inward at the sequence edges; sequences shorter than the kernel attend to
/// all positions. Throws for even kernels.
std::vector<KeyWindow> neighborhood_windows(std::size_t num_seqs, std::size_t seq_len,
                                            std::size_t kernel);

/// Self-attention of every position over its clamped temporal neighborhood.
Var neighborhood_attention_1d(const Context& ctx, const MultiHeadAttention& mha, Var x,
                              std::size_t seq_len, std::size_t kernel);

/// Pre-norm transformer block:
///   x = x + drop(attn(norm1(x)));  x = x + drop(mlp(norm2(x)))
/// With a kernel set, attention is restricted to temporal neighborhoods.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, std::size_t dim, std::size_t heads,
                   std::size_t mlp_ratio, double dropout);

  void init(ParamStore& store, RngStream& rng) const;
  /// Full self-attention over all rows (optionally with key padding).
  Var forward(const Context& ctx, Var x, std::span<const std::uint8_t> key_valid = {}) const;
  /// Neighborhood-attention variant over stacked sequences.
  Var forward_local(const Context& ctx, Var x, std::size_t seq_len, std::size_t kernel) const;

 private:
  Var finish(const Context& ctx, Var x, Var attended) const;

  LayerNorm norm1_, norm2_;
  MultiHeadAttention attn_;
  Mlp mlp_;
  double dropout_ = 0.0;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::string name, std::size_t in, std::size_t out)
      : name_(std::move(name)), in_(in), out_(out) {}

  void init(ParamStore& store, RngStream& rng) const;
  Var forward(const Context& ctx, Var x, std::size_t seq_len, std::size_t stride) const;

 private:
  std::string name_;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

/// Scaled dot-product attention for one head without projections.
Var scaled_dot_attention(Var q, Var k, Var v, std::span<const std::uint8_t> key_padding = {});

/// Max over rows flagged valid; throws "empty polyline" if none are.
Var masked_max_pool(Var x, std::span<const std::uint8_t> valid);

}  // namespace trajmae
