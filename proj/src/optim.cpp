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

#include "trajmae/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace trajmae {

void adamw_step(ParamStore& store, double lr, double weight_decay,
                const AdamWOptions& options) {
  for (const auto& [name, p] : store) {
    if (!all_finite(p.grad)) throw Error("non-finite gradient in parameter " + name);
  }
  store.step_count += 1;
  const double t = static_cast<double>(store.step_count);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (auto& [name, p] : store) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.value[i] -= lr * weight_decay * p.value[i];
      p.m[i] = options.beta1 * p.m[i] + (1.0 - options.beta1) * g;
      p.v[i] = options.beta2 * p.v[i] + (1.0 - options.beta2) * g * g;
      const double m_hat = p.m[i] / c1;
      const double v_hat = p.v[i] / c2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
             double base_lr) {
  step = std::min(step, total_steps);
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace trajmae
