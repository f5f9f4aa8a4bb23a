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

// Scenario JSON files. Schema is documented in docs/formats.md.

#pragma once

#include <string>

#include "trajmae/scene.hpp"

namespace trajmae {

/// Schema violation; what() starts with a JSON-pointer location.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& pointer, const std::string& message)
      : Error(pointer + ": " + message), pointer_(pointer) {}
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

std::string scenario_to_json(const RawScenario& scenario);
RawScenario scenario_from_json(const std::string& text);

void save_scenario(const std::string& path, const RawScenario& scenario);
RawScenario load_scenario(const std::string& path);

}  // namespace trajmae
