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

#include "trajmae/param_store.hpp"

namespace trajmae {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (entries_.contains(name)) throw Error("duplicate parameter name: " + name);
  Parameter p;
  p.grad = Tensor(init.shape());
  p.m = Tensor(init.shape());
  p.v = Tensor(init.shape());
  p.value = std::move(init);
  return entries_.emplace(name, std::move(p)).first->second;
}

bool ParamStore::contains(std::string_view name) const {
  return entries_.find(name) != entries_.end();
}

Parameter& ParamStore::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("unknown parameter: " + std::string(name));
  return it->second;
}

const Parameter& ParamStore::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("unknown parameter: " + std::string(name));
  return it->second;
}

void ParamStore::assign(std::string_view name, const Tensor& value) {
  Parameter& p = at(name);
  if (p.value.shape() != value.shape()) {
    throw Error("shape mismatch assigning " + std::string(name) + ": " +
                to_string(p.value.shape()) + " vs " + to_string(value.shape()));
  }
  p.value = value;
  p.grad.fill(0.0);
  p.m.fill(0.0);
  p.v.fill(0.0);
}

std::size_t ParamStore::erase_prefix(std::string_view prefix) {
  std::size_t n = 0;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->first.starts_with(prefix)) {
      it = entries_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : entries_) p.grad.fill(0.0);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, p] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) n += p.value.size();
  return n;
}

}  // namespace trajmae
