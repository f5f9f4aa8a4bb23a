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

// Central finite-difference oracle. Independent of the reverse pass: it only
// ever evaluates forward values.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "trajmae/autodiff.hpp"
#include "trajmae/param_store.hpp"

namespace trajmae::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Relative error with an absolute floor so entries whose true gradient is
/// ~0 are compared absolutely.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// `loss` records a scalar on the tape using parameters from the store.
/// Compares reverse-mode gradients of every entry (or every `stride`-th entry
/// per tensor) against (f(p + eps) - f(p - eps)) / (2 eps).
inline GradCheckResult check_gradients(ParamStore& store,
                                       const std::function<Var(Tape&)>& loss,
                                       double eps = 1e-5, std::size_t stride = 1,
                                       double floor = 1e-6) {
  {
    Tape tape;
    Var l = loss(tape);
    compute_gradients(tape, l, store);
  }
  auto eval = [&]() {
    Tape tape;
    return loss(tape).value().item();
  };
  GradCheckResult result;
  for (auto& [name, p] : store) {
    const Tensor analytic = p.grad;
    for (std::size_t i = 0; i < p.value.size(); i += stride) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = eval();
      p.value[i] = orig - eps;
      const double down = eval();
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double e = rel_err(analytic[i], numeric, floor);
      ++result.checked;
      if (e > result.max_rel_err) {
        result.max_rel_err = e;
        result.worst = name + "[" + std::to_string(i) + "] analytic=" +
                       std::to_string(analytic[i]) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace trajmae::testing
