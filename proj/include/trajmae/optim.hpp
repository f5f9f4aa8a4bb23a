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

#pragma once

#include <cstddef>

#include "trajmae/param_store.hpp"

namespace trajmae {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One AdamW update over every parameter in `store` using its grad slot.
/// Weight decay is decoupled: value -= lr * weight_decay * value is applied
/// before the bias-corrected Adam term. Increments store.step_count.
/// Throws if any gradient is non-finite, naming the parameter.
void adamw_step(ParamStore& store, double lr, double weight_decay,
                const AdamWOptions& options = {});

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
/// at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
             double base_lr);

}  // namespace trajmae
