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

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "trajmae/tensor.hpp"

namespace trajmae {

/// One learned tensor with its gradient slot and AdamW moments. All four
/// tensors always share the value's shape.
struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
};

/// Named parameters, iterated in sorted-name order.
class ParamStore {
 public:
  using Map = std::map<std::string, Parameter, std::less<>>;

  /// Registers a new parameter; duplicate names are an error.
  Parameter& add(const std::string& name, Tensor init);

  bool contains(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  /// Replaces the value of an existing parameter (shape must match) and
  /// clears its gradient and moments.
  void assign(std::string_view name, const Tensor& value);

  /// Removes every parameter whose name starts with `prefix`.
  std::size_t erase_prefix(std::string_view prefix);

  void zero_grad();
  std::vector<std::string> names() const;
  std::size_t scalar_count() const;

  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  std::uint64_t step_count = 0;

 private:
  Map entries_;
};

}  // namespace trajmae
