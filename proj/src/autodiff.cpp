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

#include "trajmae/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace trajmae {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

MatMap as_mat(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}
ConstMatMap as_mat(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}
VecMap as_vec(Tensor& t) { return VecMap(t.data(), static_cast<Eigen::Index>(t.size())); }
ConstVecMap as_vec(const Tensor& t) {
  return ConstVecMap(t.data(), static_cast<Eigen::Index>(t.size()));
}

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw Error("operands recorded on different tapes");
  return a.tape();
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw Error(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                to_string(b.shape()));
  }
}

// Adds g into the gradient of `target` if that node participates.
void accumulate(Tape& tape, Var target, const Tensor& g) {
  if (!tape.requires_grad(target.id())) return;
  as_vec(tape.grad(target.id())) += as_vec(g);
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

Tape& Var::tape() const {
  if (tape_ == nullptr) throw Error("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(ParamStore& store, const std::string& name) {
  if (bound_store_ != nullptr && bound_store_ != &store) {
    throw Error("tape already bound to a different parameter store");
  }
  bound_store_ = &store;
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Parameter& p = store.at(name);
  nodes_.push_back(Node{p.value, {}, {}, &p, name, true});
  param_nodes_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (!in.valid()) continue;
    if (&in.tape() != this) throw Error("operand recorded on a different tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  Node node{std::move(value), {}, {}, nullptr, {}, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var root) {
  if (consumed_) {
    throw Error("gradients already computed for this tape; record a new forward pass");
  }
  if (&root.tape() != this) throw Error("backward root recorded on a different tape");
  if (root.value().size() != 1) {
    throw Error("backward requires a scalar root, got shape " + to_string(root.shape()));
  }
  consumed_ = true;
  if (!nodes_[root.id()].requires_grad) return;
  grad(root.id())[0] = 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

void Tape::export_gradients(ParamStore& store) const {
  if (bound_store_ != nullptr && bound_store_ != &store) {
    throw Error("tape parameters belong to a different store");
  }
  for (const Node& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    as_vec(n.param->grad) += as_vec(n.grad);
  }
}

void compute_gradients(Tape& tape, Var loss, ParamStore& store) {
  store.zero_grad();
  accumulate_gradients(tape, loss, store);
}

void accumulate_gradients(Tape& tape, Var loss, ParamStore& store) {
  tape.backward(loss);
  tape.export_gradients(store);
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tape& t = same_tape(a, b);
  Tensor out = a.value();
  as_vec(out) += as_vec(b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    accumulate(tp, a, g);
    accumulate(tp, b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tape& t = same_tape(a, b);
  Tensor out = a.value();
  as_vec(out) -= as_vec(b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    accumulate(tp, a, g);
    if (tp.requires_grad(b.id())) as_vec(tp.grad(b.id())) -= as_vec(g);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tape& t = same_tape(a, b);
  Tensor out = a.value();
  as_vec(out).array() *= as_vec(b.value()).array();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(a.id())) {
      as_vec(tp.grad(a.id())).array() += as_vec(g).array() * as_vec(b.value()).array();
    }
    if (tp.requires_grad(b.id())) {
      as_vec(tp.grad(b.id())).array() += as_vec(g).array() * as_vec(a.value()).array();
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  as_vec(out) *= factor;
  return x.tape().record(std::move(out), {x}, [x, factor](Tape& tp, std::size_t self) {
    as_vec(tp.grad(x.id())) += factor * as_vec(tp.grad(self));
  });
}

Var add_row(Var x, Var v) {
  Tape& t = same_tape(x, v);
  if (v.value().size() != x.cols()) {
    throw Error("add_row: vector of " + std::to_string(v.value().size()) +
                " values for " + std::to_string(x.cols()) + " columns");
  }
  Tensor out = x.value();
  as_mat(out).rowwise() += as_vec(v.value()).transpose();
  return t.record(std::move(out), {x, v}, [x, v](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    accumulate(tp, x, g);
    if (tp.requires_grad(v.id())) {
      as_vec(tp.grad(v.id())) += as_mat(g).colwise().sum().transpose();
    }
  });
}

Var sum(Var x) {
  Tensor out = Tensor::scalar(as_vec(x.value()).sum());
  return x.tape().record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    as_vec(tp.grad(x.id())).array() += tp.grad(self)[0];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    as_vec(tp.grad(x.id())) += as_vec(tp.grad(self));
  });
}

// ---------------------------------------------------------------------------
// Dense layers

Var matmul(Var x, Var w) {
  Tape& t = same_tape(x, w);
  if (x.cols() != w.rows() || w.value().rank() != 2) {
    throw Error("matmul: incompatible shapes " + to_string(x.shape()) + " * " +
                to_string(w.shape()));
  }
  Tensor out({x.rows(), w.cols()});
  as_mat(out).noalias() = as_mat(x.value()) * as_mat(w.value());
  return t.record(std::move(out), {x, w}, [x, w](Tape& tp, std::size_t self) {
    const auto g = as_mat(tp.grad(self));
    if (tp.requires_grad(x.id())) {
      as_mat(tp.grad(x.id())).noalias() += g * as_mat(w.value()).transpose();
    }
    if (tp.requires_grad(w.id())) {
      as_mat(tp.grad(w.id())).noalias() += as_mat(x.value()).transpose() * g;
    }
  });
}

Var linear(Var x, Var w, Var b) {
  Tape& t = x.tape();
  if (&w.tape() != &t || (b.valid() && &b.tape() != &t)) {
    throw Error("linear: operands recorded on different tapes");
  }
  if (w.value().rank() != 2 || x.cols() != w.rows()) {
    throw Error("linear: input " + to_string(x.shape()) + " vs weight " +
                to_string(w.shape()));
  }
  if (b.valid() && b.value().size() != w.cols()) {
    throw Error("linear: bias size " + std::to_string(b.value().size()) +
                " vs output width " + std::to_string(w.cols()));
  }
  Tensor out({x.rows(), w.cols()});
  auto o = as_mat(out);
  o.noalias() = as_mat(x.value()) * as_mat(w.value());
  if (b.valid()) o.rowwise() += as_vec(b.value()).transpose();
  std::vector<Var> inputs{x, w};
  if (b.valid()) inputs.push_back(b);
  return t.record(std::move(out), inputs, [x, w, b](Tape& tp, std::size_t self) {
    const auto g = as_mat(tp.grad(self));
    if (tp.requires_grad(x.id())) {
      as_mat(tp.grad(x.id())).noalias() += g * as_mat(w.value()).transpose();
    }
    if (tp.requires_grad(w.id())) {
      as_mat(tp.grad(w.id())).noalias() += as_mat(x.value()).transpose() * g;
    }
    if (b.valid() && tp.requires_grad(b.id())) {
      as_vec(tp.grad(b.id())) += g.colwise().sum().transpose();
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& in = x.value();
    Tensor& gx = tp.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return x.tape().record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& in = x.value();
    Tensor& gx = tp.grad(x.id());
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = x.tape();
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (gamma.value().size() != cols || beta.value().size() != cols) {
    throw Error("layer_norm: affine size mismatch for width " + std::to_string(cols));
  }
  auto normalized = std::make_shared<Tensor>(Shape{rows, cols});
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out({rows, cols});
  const Tensor& in = x.value();
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += row[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double n = (row[c] - mean) * is;
      (*normalized)(r, c) = n;
      out(r, c) = n * gm[c] + bt[c];
    }
  }
  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, normalized, inv_std](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& gm = gamma.value();
                    const std::size_t rows = g.rows();
                    const std::size_t cols = g.cols();
                    const Tensor& xh = *normalized;
                    if (tp.requires_grad(gamma.id()) || tp.requires_grad(beta.id())) {
                      Tensor& gg = tp.grad(gamma.id());
                      Tensor& gb = tp.grad(beta.id());
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < cols; ++c) {
                          if (tp.requires_grad(gamma.id())) gg[c] += g(r, c) * xh(r, c);
                          if (tp.requires_grad(beta.id())) gb[c] += g(r, c);
                        }
                      }
                    }
                    if (!tp.requires_grad(x.id())) return;
                    Tensor& gx = tp.grad(x.id());
                    const double n = static_cast<double>(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mean_d = 0.0;
                      double mean_dx = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double d = g(r, c) * gm[c];
                        mean_d += d;
                        mean_dx += d * xh(r, c);
                      }
                      mean_d /= n;
                      mean_dx /= n;
                      const double is = (*inv_std)[r];
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double d = g(r, c) * gm[c];
                        gx(r, c) += is * (d - mean_d - xh(r, c) * mean_dx);
                      }
                    }
                  });
}

Var dropout(Var x, double rate, RngStream& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  auto mask = std::make_shared<Tensor>(x.shape());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask->values()) m = rng.uniform() >= rate ? keep : 0.0;
  Tensor out = x.value();
  as_vec(out).array() *= as_vec(*mask).array();
  return x.tape().record(std::move(out), {x}, [x, mask](Tape& tp, std::size_t self) {
    as_vec(tp.grad(x.id())).array() += as_vec(tp.grad(self)).array() * as_vec(*mask).array();
  });
}

Var gather_rows(Var x, std::vector<std::size_t> idx) {
  const std::size_t cols = x.cols();
  const std::size_t rows = x.rows();
  Tensor out({idx.size(), cols});
  const Tensor& in = x.value();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw Error("gather_rows: index " + std::to_string(idx[r]) + " out of " +
                  std::to_string(rows) + " rows");
    }
    std::copy_n(in.data() + idx[r] * cols, cols, out.data() + r * cols);
  }
  return x.tape().record(std::move(out), {x},
                         [x, idx = std::move(idx), cols](Tape& tp, std::size_t self) {
                           const Tensor& g = tp.grad(self);
                           Tensor& gx = tp.grad(x.id());
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             const double* src = g.data() + r * cols;
                             double* dst = gx.data() + idx[r] * cols;
                             for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                           }
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_rows: no parts");
  Tape& t = parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw Error("concat_rows: parts on different tapes");
    if (p.cols() != cols) {
      throw Error("concat_rows: column mismatch " + std::to_string(p.cols()) + " vs " +
                  std::to_string(cols));
    }
    rows += p.value().size() / cols;
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + offset);
    offset += p.value().size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), inputs, [inputs](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t n = p.value().size();
      if (tp.requires_grad(p.id()) && n > 0) {
        Tensor& gp = tp.grad(p.id());
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

// ---------------------------------------------------------------------------
// Attention

Var attention(Var q, Var k, Var v, std::size_t heads, std::span<const KeyWindow> windows,
              std::span<const std::uint8_t> key_valid) {
  Tape& t = q.tape();
  if (&k.tape() != &t || &v.tape() != &t) throw Error("attention: operands on different tapes");
  const std::size_t n = q.rows();
  const std::size_t m = k.rows();
  const std::size_t width = q.cols();
  if (width == 0) throw Error("attention: zero feature width");
  if (k.cols() != width || v.cols() != width || v.rows() != m) {
    throw Error("attention: shape mismatch Q" + to_string(q.shape()) + " K" +
                to_string(k.shape()) + " V" + to_string(v.shape()));
  }
  if (heads == 0 || width % heads != 0) {
    throw Error("attention: width " + std::to_string(width) + " not divisible by " +
                std::to_string(heads) + " heads");
  }
  if (windows.size() != n) throw Error("attention: one key window per query row required");
  if (!key_valid.empty() && key_valid.size() != m) {
    throw Error("attention: key padding mask length mismatch");
  }
  const std::size_t d = width / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // Probabilities per (query, head, window slot); padded slots hold 0.
  auto offsets = std::make_shared<std::vector<std::size_t>>(n + 1, 0);
  auto wins = std::make_shared<std::vector<KeyWindow>>(windows.begin(), windows.end());
  for (std::size_t i = 0; i < n; ++i) {
    const KeyWindow& w = windows[i];
    if (w.begin + w.count > m) throw Error("attention: key window out of range");
    (*offsets)[i + 1] = (*offsets)[i] + w.count * heads;
  }
  auto probs = std::make_shared<std::vector<double>>((*offsets)[n], 0.0);
  auto valid = std::make_shared<std::vector<std::uint8_t>>(key_valid.begin(), key_valid.end());

  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  Tensor out({n, width});
  std::vector<double> logits;
  for (std::size_t i = 0; i < n; ++i) {
    const KeyWindow w = windows[i];
    bool any = false;
    for (std::size_t j = 0; j < w.count; ++j) {
      any = any || valid->empty() || (*valid)[w.begin + j] != 0;
    }
    if (!any) throw Error("empty attention context");
    logits.assign(w.count, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      const double* qi = Q.data() + i * width + h * d;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < w.count; ++j) {
        const std::size_t key = w.begin + j;
        if (!valid->empty() && (*valid)[key] == 0) continue;
        const double* kj = K.data() + key * width + h * d;
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
        logits[j] = s * inv_sqrt_d;
        mx = std::max(mx, logits[j]);
      }
      double* p = probs->data() + (*offsets)[i] + h * w.count;
      double z = 0.0;
      for (std::size_t j = 0; j < w.count; ++j) {
        const std::size_t key = w.begin + j;
        if (!valid->empty() && (*valid)[key] == 0) continue;
        p[j] = std::exp(logits[j] - mx);
        z += p[j];
      }
      double* oi = out.data() + i * width + h * d;
      for (std::size_t j = 0; j < w.count; ++j) {
        if (p[j] == 0.0) continue;
        p[j] /= z;
        const double* vj = V.data() + (w.begin + j) * width + h * d;
        for (std::size_t c = 0; c < d; ++c) oi[c] += p[j] * vj[c];
      }
    }
  }

  return t.record(
      std::move(out), {q, k, v},
      [q, k, v, heads, d, inv_sqrt_d, offsets, wins, probs](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& Q = q.value();
        const Tensor& K = k.value();
        const Tensor& V = v.value();
        const std::size_t width = Q.cols();
        const bool need_q = tp.requires_grad(q.id());
        const bool need_k = tp.requires_grad(k.id());
        const bool need_v = tp.requires_grad(v.id());
        Tensor* gq = need_q ? &tp.grad(q.id()) : nullptr;
        Tensor* gk = need_k ? &tp.grad(k.id()) : nullptr;
        Tensor* gv = need_v ? &tp.grad(v.id()) : nullptr;
        std::vector<double> dp;
        for (std::size_t i = 0; i < wins->size(); ++i) {
          const KeyWindow w = (*wins)[i];
          dp.assign(w.count, 0.0);
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs->data() + (*offsets)[i] + h * w.count;
            const double* gi = g.data() + i * width + h * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < w.count; ++j) {
              if (p[j] == 0.0) {
                dp[j] = 0.0;
                continue;
              }
              const std::size_t key = w.begin + j;
              const double* vj = V.data() + key * width + h * d;
              double s = 0.0;
              for (std::size_t c = 0; c < d; ++c) s += gi[c] * vj[c];
              dp[j] = s;
              dot += p[j] * s;
              if (need_v) {
                double* gvj = gv->data() + key * width + h * d;
                for (std::size_t c = 0; c < d; ++c) gvj[c] += p[j] * gi[c];
              }
            }
            const double* qi = Q.data() + i * width + h * d;
            for (std::size_t j = 0; j < w.count; ++j) {
              if (p[j] == 0.0) continue;
              const double ds = p[j] * (dp[j] - dot) * inv_sqrt_d;
              const std::size_t key = w.begin + j;
              const double* kj = K.data() + key * width + h * d;
              if (need_q) {
                double* gqi = gq->data() + i * width + h * d;
                for (std::size_t c = 0; c < d; ++c) gqi[c] += ds * kj[c];
              }
              if (need_k) {
                double* gkj = gk->data() + key * width + h * d;
                for (std::size_t c = 0; c < d; ++c) gkj[c] += ds * qi[c];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Temporal convolution

Var conv1d(Var x, Var w, Var b, std::size_t seq_len, std::size_t stride) {
  Tape& t = x.tape();
  if (seq_len == 0) throw Error("conv1d: empty sequence (T = 0)");
  if (stride != 1 && stride != 2) throw Error("conv1d: stride must be 1 or 2");
  const std::size_t cin = x.cols();
  if (x.rows() % seq_len != 0) throw Error("conv1d: rows not a multiple of seq_len");
  if (w.value().rank() != 2 || w.rows() != 3 * cin) {
    throw Error("conv1d: weight " + to_string(w.shape()) + " for " + std::to_string(cin) +
                " input channels");
  }
  const std::size_t cout = w.cols();
  const std::size_t nseq = x.rows() / seq_len;
  const std::size_t out_len = (seq_len + stride - 1) / stride;

  auto cols = std::make_shared<Tensor>(Shape{nseq * out_len, 3 * cin});
  const Tensor& in = x.value();
  for (std::size_t s = 0; s < nseq; ++s) {
    for (std::size_t o = 0; o < out_len; ++o) {
      double* dst = cols->data() + (s * out_len + o) * 3 * cin;
      for (std::size_t tap = 0; tap < 3; ++tap) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * stride + tap) - 1;
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(seq_len)) continue;
        std::copy_n(in.data() + (s * seq_len + static_cast<std::size_t>(pos)) * cin, cin,
                    dst + tap * cin);
      }
    }
  }
  Tensor out({nseq * out_len, cout});
  as_mat(out).noalias() = as_mat(*cols) * as_mat(w.value());
  if (b.valid()) as_mat(out).rowwise() += as_vec(b.value()).transpose();
  std::vector<Var> inputs{x, w};
  if (b.valid()) inputs.push_back(b);
  return t.record(
      std::move(out), inputs,
      [x, w, b, cols, seq_len, stride, nseq, out_len, cin](Tape& tp, std::size_t self) {
        const auto g = as_mat(tp.grad(self));
        if (tp.requires_grad(w.id())) {
          as_mat(tp.grad(w.id())).noalias() += as_mat(*cols).transpose() * g;
        }
        if (b.valid() && tp.requires_grad(b.id())) {
          as_vec(tp.grad(b.id())) += g.colwise().sum().transpose();
        }
        if (!tp.requires_grad(x.id())) return;
        RowMat dcols = g * as_mat(w.value()).transpose();
        Tensor& gx = tp.grad(x.id());
        for (std::size_t s = 0; s < nseq; ++s) {
          for (std::size_t o = 0; o < out_len; ++o) {
            const double* src = dcols.data() + (s * out_len + o) * 3 * cin;
            for (std::size_t tap = 0; tap < 3; ++tap) {
              const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * stride + tap) - 1;
              if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(seq_len)) continue;
              double* dst = gx.data() + (s * seq_len + static_cast<std::size_t>(pos)) * cin;
              for (std::size_t c = 0; c < cin; ++c) dst[c] += src[tap * cin + c];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Pooling

Var segment_max(Var x, std::size_t group_size, std::span<const std::uint8_t> valid) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (group_size == 0 || rows % group_size != 0) {
    throw Error("segment_max: rows not a multiple of group size");
  }
  if (valid.size() != rows) throw Error("segment_max: validity mask length mismatch");
  const std::size_t groups = rows / group_size;
  auto argmax = std::make_shared<std::vector<std::size_t>>(groups * cols);
  Tensor out({groups, cols});
  const Tensor& in = x.value();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_row = 0;
      for (std::size_t p = 0; p < group_size; ++p) {
        const std::size_t r = gi * group_size + p;
        if (valid[r] == 0) continue;
        any = true;
        if (in(r, c) > best) {
          best = in(r, c);
          best_row = r;
        }
      }
      if (!any) throw Error("empty polyline");
      out(gi, c) = best;
      (*argmax)[gi * cols + c] = best_row;
    }
  }
  return x.tape().record(std::move(out), {x}, [x, argmax, cols](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(x.id());
    for (std::size_t i = 0; i < argmax->size(); ++i) {
      const std::size_t c = i % cols;
      gx((*argmax)[i], c) += g[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Losses

Var weighted_loss(Var pred, const Tensor& target, const Tensor& weight, LossKind kind,
                  double huber_delta) {
  if (pred.value().size() != target.size() || pred.value().size() != weight.size()) {
    throw Error("weighted_loss: pred " + to_string(pred.shape()) + ", target " +
                to_string(target.shape()) + ", weight " + to_string(weight.shape()));
  }
  const Tensor& p = pred.value();
  auto residual = std::make_shared<Tensor>(p.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = p[i] - target[i];
    (*residual)[i] = r;
    if (weight[i] == 0.0) continue;
    double rho = 0.0;
    switch (kind) {
      case LossKind::kL1:
        rho = std::abs(r);
        break;
      case LossKind::kMse:
        rho = r * r;
        break;
      case LossKind::kHuber:
        rho = std::abs(r) <= huber_delta ? 0.5 * r * r
                                         : huber_delta * (std::abs(r) - 0.5 * huber_delta);
        break;
    }
    total += weight[i] * rho;
  }
  auto w = std::make_shared<Tensor>(weight);
  return pred.tape().record(
      Tensor::scalar(total), {pred},
      [pred, residual, w, kind, huber_delta](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        Tensor& gp = tp.grad(pred.id());
        for (std::size_t i = 0; i < gp.size(); ++i) {
          const double wi = (*w)[i];
          if (wi == 0.0) continue;
          const double r = (*residual)[i];
          double d = 0.0;
          switch (kind) {
            case LossKind::kL1:
              d = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
              break;
            case LossKind::kMse:
              d = 2.0 * r;
              break;
            case LossKind::kHuber:
              d = std::abs(r) <= huber_delta ? r : (r > 0.0 ? huber_delta : -huber_delta);
              break;
          }
          gp[i] += g * wi * d;
        }
      });
}

Var weighted_cross_entropy(Var logits, std::span<const std::size_t> target,
                           std::span<const double> row_weight) {
  const std::size_t rows = logits.rows();
  const std::size_t k = logits.cols();
  if (target.size() != rows || row_weight.size() != rows) {
    throw Error("cross_entropy: one target and weight per logits row required");
  }
  for (std::size_t t : target) {
    if (t >= k) throw Error("cross_entropy: target index out of range");
  }
  auto probs = std::make_shared<Tensor>(softmax_rows(logits.value()));
  const Tensor& lg = logits.value();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_weight[r] == 0.0) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, lg(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(lg(r, c) - mx);
    total += row_weight[r] * (mx + std::log(z) - lg(r, target[r]));
  }
  std::vector<std::size_t> tgt(target.begin(), target.end());
  std::vector<double> wts(row_weight.begin(), row_weight.end());
  return logits.tape().record(
      Tensor::scalar(total), {logits},
      [logits, probs, tgt = std::move(tgt), wts = std::move(wts)](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        Tensor& gl = tp.grad(logits.id());
        const std::size_t k = gl.cols();
        for (std::size_t r = 0; r < tgt.size(); ++r) {
          if (wts[r] == 0.0) continue;
          for (std::size_t c = 0; c < k; ++c) {
            const double onehot = c == tgt[r] ? 1.0 : 0.0;
            gl(r, c) += g * wts[r] * ((*probs)(r, c) - onehot);
          }
        }
      });
}

namespace {

Var mean_reduced(Var pred, const Tensor& target, const Tensor& valid, LossKind kind,
                 double delta) {
  if (valid.size() != pred.value().size()) throw Error("loss: validity mask size mismatch");
  double count = 0.0;
  for (double v : valid.values()) count += v != 0.0 ? 1.0 : 0.0;
  if (count == 0.0) throw Error("loss: empty valid set");
  Tensor weight(valid.shape());
  for (std::size_t i = 0; i < valid.size(); ++i) weight[i] = valid[i] != 0.0 ? 1.0 / count : 0.0;
  return weighted_loss(pred, target, weight, kind, delta);
}

}  // namespace

Var l1_loss(Var pred, const Tensor& target, const Tensor& valid) {
  return mean_reduced(pred, target, valid, LossKind::kL1, 1.0);
}

Var mse_loss(Var pred, const Tensor& target, const Tensor& valid) {
  return mean_reduced(pred, target, valid, LossKind::kMse, 1.0);
}

Var huber_loss(Var pred, const Tensor& target, const Tensor& valid, double delta) {
  return mean_reduced(pred, target, valid, LossKind::kHuber, delta);
}

Var cross_entropy(Var logits, std::size_t target) {
  const std::size_t t[1] = {target};
  const double w[1] = {1.0};
  return weighted_cross_entropy(reshape(logits, {1, logits.value().size()}), t, w);
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out(logits.shape());
  const std::size_t rows = logits.rows();
  const std::size_t k = logits.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, logits(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      out(r, c) = std::exp(logits(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < k; ++c) out(r, c) /= z;
  }
  return out;
}

}  // namespace trajmae
