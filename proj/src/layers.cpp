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

#include "trajmae/layers.hpp"

#include <algorithm>
#include <cmath>

namespace trajmae {

Var Context::dropout(Var x, double rate) const {
  if (!training || dropout_rng == nullptr || rate == 0.0) return x;
  return trajmae::dropout(x, rate, *dropout_rng);
}

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, RngStream& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_init(Shape shape, double stddev, RngStream& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

// ---------------------------------------------------------------------------

void Linear::init(ParamStore& store, RngStream& rng) const {
  store.add(name_ + ".weight", uniform_fan_in({in_, out_}, in_, rng));
  if (bias_) store.add(name_ + ".bias", uniform_fan_in({out_}, in_, rng));
}

Var Linear::forward(const Context& ctx, Var x) const {
  return linear(x, ctx.param(name_ + ".weight"), bias_ ? ctx.param(name_ + ".bias") : Var{});
}

void LayerNorm::init(ParamStore& store) const {
  store.add(name_ + ".scale", Tensor({dim_}, 1.0));
  store.add(name_ + ".shift", Tensor({dim_}, 0.0));
}

Var LayerNorm::forward(const Context& ctx, Var x) const {
  return layer_norm(x, ctx.param(name_ + ".scale"), ctx.param(name_ + ".shift"));
}

Var activate(Var x, Activation act) {
  return act == Activation::kRelu ? relu(x) : gelu(x);
}

Mlp::Mlp(const std::string& name, std::vector<std::size_t> widths, Activation act) : act_(act) {
  if (widths.size() < 2) throw Error("Mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(name + ".fc" + std::to_string(i), widths[i], widths[i + 1]);
  }
}

void Mlp::init(ParamStore& store, RngStream& rng) const {
  for (const Linear& l : layers_) l.init(store, rng);
}

Var Mlp::forward(const Context& ctx, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(ctx, x);
    if (i + 1 < layers_.size()) x = activate(x, act_);
  }
  return x;
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t dim,
                                       std::size_t heads)
    : dim_(dim),
      heads_(heads),
      q_(name + ".query", dim, dim),
      k_(name + ".key", dim, dim),
      v_(name + ".value", dim, dim),
      o_(name + ".out", dim, dim) {
  if (heads == 0 || dim % heads != 0) {
    throw Error("model dim " + std::to_string(dim) + " is not divisible by " +
                std::to_string(heads) + " heads");
  }
}

void MultiHeadAttention::init(ParamStore& store, RngStream& rng) const {
  q_.init(store, rng);
  k_.init(store, rng);
  v_.init(store, rng);
  o_.init(store, rng);
}

Var MultiHeadAttention::forward(const Context& ctx, Var x_q, Var x_kv,
                                std::span<const KeyWindow> windows,
                                std::span<const std::uint8_t> key_valid) const {
  Var q = q_.forward(ctx, x_q);
  Var k = k_.forward(ctx, x_kv);
  Var v = v_.forward(ctx, x_kv);
  Var attended;
  if (windows.empty()) {
    std::vector<KeyWindow> full(x_q.rows(), KeyWindow{0, x_kv.rows()});
    attended = attention(q, k, v, heads_, full, key_valid);
  } else {
    attended = attention(q, k, v, heads_, windows, key_valid);
  }
  return o_.forward(ctx, attended);
}

std::vector<KeyWindow> neighborhood_windows(std::size_t num_seqs, std::size_t seq_len,
                                            std::size_t kernel) {
  if (kernel == 0 || kernel % 2 == 0) {
    throw Error("neighborhood attention kernel must be odd, got " + std::to_string(kernel));
  }
  std::vector<KeyWindow> windows;
  windows.reserve(num_seqs * seq_len);
  const std::size_t half = kernel / 2;
  for (std::size_t s = 0; s < num_seqs; ++s) {
    for (std::size_t t = 0; t < seq_len; ++t) {
      KeyWindow w;
      if (seq_len <= kernel) {
        w = {0, seq_len};
      } else {
        const std::size_t start = std::min(t > half ? t - half : 0, seq_len - kernel);
        w = {start, kernel};
      }
      w.begin += s * seq_len;
      windows.push_back(w);
    }
  }
  return windows;
}

Var neighborhood_attention_1d(const Context& ctx, const MultiHeadAttention& mha, Var x,
                              std::size_t seq_len, std::size_t kernel) {
  if (seq_len == 0 || x.rows() % seq_len != 0) {
    throw Error("neighborhood attention: rows not a multiple of sequence length");
  }
  const auto windows = neighborhood_windows(x.rows() / seq_len, seq_len, kernel);
  return mha.forward(ctx, x, x, windows);
}

// ---------------------------------------------------------------------------

TransformerBlock::TransformerBlock(const std::string& name, std::size_t dim, std::size_t heads,
                                   std::size_t mlp_ratio, double dropout)
    : norm1_(name + ".norm1", dim),
      norm2_(name + ".norm2", dim),
      attn_(name + ".attn", dim, heads),
      mlp_(name + ".mlp", {dim, dim * mlp_ratio, dim}, Activation::kGelu),
      dropout_(dropout) {}

void TransformerBlock::init(ParamStore& store, RngStream& rng) const {
  norm1_.init(store);
  norm2_.init(store);
  attn_.init(store, rng);
  mlp_.init(store, rng);
}

Var TransformerBlock::finish(const Context& ctx, Var x, Var attended) const {
  x = add(x, ctx.dropout(attended, dropout_));
  Var h = mlp_.forward(ctx, norm2_.forward(ctx, x));
  return add(x, ctx.dropout(h, dropout_));
}

Var TransformerBlock::forward(const Context& ctx, Var x,
                              std::span<const std::uint8_t> key_valid) const {
  Var h = norm1_.forward(ctx, x);
  return finish(ctx, x, attn_.forward(ctx, h, h, {}, key_valid));
}

Var TransformerBlock::forward_local(const Context& ctx, Var x, std::size_t seq_len,
                                    std::size_t kernel) const {
  Var h = norm1_.forward(ctx, x);
  return finish(ctx, x, neighborhood_attention_1d(ctx, attn_, h, seq_len, kernel));
}

// ---------------------------------------------------------------------------

void Conv1d::init(ParamStore& store, RngStream& rng) const {
  store.add(name_ + ".weight", uniform_fan_in({3 * in_, out_}, 3 * in_, rng));
  store.add(name_ + ".bias", uniform_fan_in({out_}, 3 * in_, rng));
}

Var Conv1d::forward(const Context& ctx, Var x, std::size_t seq_len, std::size_t stride) const {
  return conv1d(x, ctx.param(name_ + ".weight"), ctx.param(name_ + ".bias"), seq_len, stride);
}

// ---------------------------------------------------------------------------

Var scaled_dot_attention(Var q, Var k, Var v, std::span<const std::uint8_t> key_padding) {
  std::vector<std::uint8_t> valid;
  if (!key_padding.empty()) {
    if (key_padding.size() != k.rows()) throw Error("key padding mask length mismatch");
    valid.reserve(key_padding.size());
    for (std::uint8_t p : key_padding) valid.push_back(p == 0 ? 1 : 0);
  }
  std::vector<KeyWindow> windows(q.rows(), KeyWindow{0, k.rows()});
  return attention(q, k, v, 1, windows, valid);
}

Var masked_max_pool(Var x, std::span<const std::uint8_t> valid) {
  return reshape(segment_max(x, x.rows(), valid), {x.cols()});
}

}  // namespace trajmae
