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

// Reverse-mode differentiation over a per-step tape.
//
// Every op evaluates eagerly, appends a node holding its output value and a
// backward closure, and returns a Var handle. Tape::backward walks the nodes
// in reverse creation order. A tape can be differentiated exactly once; the
// training loop builds a fresh tape per step.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "trajmae/param_store.hpp"
#include "trajmae/rng.hpp"
#include "trajmae/tensor.hpp"

namespace trajmae {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf bound to a named parameter. Repeated calls with the same name
  /// return the same node.
  Var parameter(ParamStore& store, const std::string& name);

  /// Records an op result. `inputs` decides whether the node needs a gradient.
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient slot of a node, zero-initialized on first access.
  Tensor& grad(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Reverse pass from a scalar root. Throws if the root is not a
  /// single-element value or if the tape was already differentiated.
  void backward(Var root);

  /// Adds (or writes, after zeroing) parameter-leaf gradients into the store.
  void export_gradients(ParamStore& store) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
    std::string param_name;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // deque: value references stay valid as the tape grows
  std::unordered_map<std::string, std::size_t> param_nodes_;
  const ParamStore* bound_store_ = nullptr;
  bool consumed_ = false;
};

/// Zeroes every gradient slot in `store`, runs the reverse pass from `loss`,
/// and writes d(loss)/d(param). Parameters not on the loss path keep exactly
/// zero gradient.
void compute_gradients(Tape& tape, Var loss, ParamStore& store);

/// Like compute_gradients but adds into the existing gradient slots.
void accumulate_gradients(Tape& tape, Var loss, ParamStore& store);

// ---------------------------------------------------------------------------
// Differentiable ops. Unless noted, matrices are viewed as rows() x cols().

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// x[R x C] + v broadcast over rows; v holds C values.
Var add_row(Var x, Var v);
Var sum(Var x);
Var reshape(Var x, Shape shape);

/// x[R x K] * w[K x N].
Var matmul(Var x, Var w);
/// x[R x in] * w[in x out] + b[out]; `b` may be an invalid Var.
Var linear(Var x, Var w, Var b);

Var relu(Var x);
/// Exact (erf-based) GELU.
Var gelu(Var x);

/// Per-row normalization over the last dimension, then gamma/beta affine.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Inverted dropout. Identity when `rate` is zero.
Var dropout(Var x, double rate, RngStream& rng);

/// Rows x[idx[0]], x[idx[1]], ...; gradient scatter-adds back.
Var gather_rows(Var x, std::vector<std::size_t> idx);
/// Vertical concatenation; all parts share cols(). Empty parts are allowed.
Var concat_rows(std::span<const Var> parts);
Var concat_rows(std::initializer_list<Var> parts);

/// Contiguous key range visible to one query row.
struct KeyWindow {
  std::size_t begin = 0;
  std::size_t count = 0;
};

/// Multi-head scaled dot-product attention on pre-projected Q[n x C],
/// K[m x C], V[m x C]. Query i attends to keys in windows[i] whose
/// key_valid flag is set (empty key_valid means all valid). Heads split C
/// into equal contiguous column blocks.
Var attention(Var q, Var k, Var v, std::size_t heads, std::span<const KeyWindow> windows,
              std::span<const std::uint8_t> key_valid = {});

/// Kernel-3, zero-padded temporal convolution over `x` holding
/// x.rows() / seq_len sequences stacked row-wise. `w` is [3*C_in x C_out]
/// with row index tap * C_in + c. Output length per sequence is
/// ceil(seq_len / stride).
Var conv1d(Var x, Var w, Var b, std::size_t seq_len, std::size_t stride);

/// Per-channel max over each group of `group_size` consecutive rows,
/// restricted to rows with valid[r] != 0.
Var segment_max(Var x, std::size_t group_size, std::span<const std::uint8_t> valid);

enum class LossKind { kL1, kMse, kHuber };

/// sum_i weight[i] * rho(pred[i] - target[i]) as a scalar.
Var weighted_loss(Var pred, const Tensor& target, const Tensor& weight, LossKind kind,
                  double huber_delta = 1.0);

/// sum_r row_weight[r] * (-log softmax(logits[r])[target[r]]).
Var weighted_cross_entropy(Var logits, std::span<const std::size_t> target,
                           std::span<const double> row_weight);

// Mean-reduced elementary losses over entries with valid != 0.
Var l1_loss(Var pred, const Tensor& target, const Tensor& valid);
Var mse_loss(Var pred, const Tensor& target, const Tensor& valid);
Var huber_loss(Var pred, const Tensor& target, const Tensor& valid, double delta = 1.0);
/// -log softmax(logits)[target] for a single logits row.
Var cross_entropy(Var logits, std::size_t target);

/// Row-wise softmax on plain tensors.
Tensor softmax_rows(const Tensor& logits);

}  // namespace trajmae
