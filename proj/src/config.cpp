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

#include "trajmae/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "json.hpp"

#include "trajmae/scenario_io.hpp"

namespace trajmae {

namespace {

using nlohmann::json;

json train_to_json(const TrainConfig& t) {
  return {{"lr", t.lr},
          {"weight_decay", t.weight_decay},
          {"batch", t.batch},
          {"epochs", t.epochs},
          {"warmup_epochs", t.warmup_epochs}};
}

json to_json_value(const ExperimentConfig& c) {
  const ModelConfig& m = c.model;
  const GenConfig& g = c.data.generator;
  json j;
  j["profile"] = c.profile;
  j["model"] = {{"dim", m.dim},
                {"encoder_depth", m.encoder_depth},
                {"decoder_depth", m.decoder_depth},
                {"heads", m.heads},
                {"modes", m.modes},
                {"mlp_ratio", m.mlp_ratio},
                {"dropout", m.dropout},
                {"fpn_kernels", m.fpn_kernels},
                {"fpn_blocks", m.fpn_blocks}};
  j["masking"] = {{"alpha", c.alpha}, {"beta", c.beta}};
  j["loss_weights"] = {{"history", c.loss_weights.history},
                       {"future", c.loss_weights.future},
                       {"lane", c.loss_weights.lane}};
  j["pretrain"] = train_to_json(c.pretrain);
  j["finetune"] = train_to_json(c.finetune);
  j["data"] = {{"seed", c.data.seed},
               {"train_scenes", c.data.train_scenes},
               {"val_scenes", c.data.val_scenes},
               {"shift_scenes", c.data.shift_scenes},
               {"shift_city_tags", c.data.shift_city_tags},
               {"dir", c.data.dir},
               {"generator",
                {{"min_agents", g.min_agents},
                 {"max_agents", g.max_agents},
                 {"min_lanes", g.min_lanes},
                 {"max_lanes", g.max_lanes},
                 {"arm_length", g.arm_length},
                 {"straight_weight", g.straight_weight},
                 {"turn_weight", g.turn_weight},
                 {"stop_weight", g.stop_weight},
                 {"noise_sigma", g.noise_sigma},
                 {"city_tags", g.city_tags},
                 {"random_global_transform", g.random_global_transform}}}};
  return j;
}

// Walks an object, overriding fields that are present and rejecting keys
// that no reader consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string pointer) : j_(j), pointer_(std::move(pointer)) {
    if (!j_.is_object()) throw SchemaError(pointer_.empty() ? "/" : pointer_, "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.push_back(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) throw SchemaError(path(key), "expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw SchemaError(path(key), "expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw SchemaError(path(key), "expected a boolean");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw SchemaError(path(key), "expected a string");
      }
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw SchemaError(path(key), e.what());
    }
  }

  ObjectReader child(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return ObjectReader(empty(), path(key));
    seen_.push_back(key);
    return ObjectReader(*it, path(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
        throw SchemaError(path(it.key()), "unknown key");
      }
    }
  }

  std::string path(const std::string& key) const { return pointer_ + "/" + key; }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }

  const json& j_;
  std::string pointer_;
  std::vector<std::string> seen_;
};

void read_train(ObjectReader r, TrainConfig& t) {
  r.read("lr", t.lr);
  r.read("weight_decay", t.weight_decay);
  r.read("batch", t.batch);
  r.read("epochs", t.epochs);
  r.read("warmup_epochs", t.warmup_epochs);
  r.finish();
}

}  // namespace

ExperimentConfig paper_profile() {
  ExperimentConfig c;
  c.profile = "paper";
  c.data.generator = GenConfig{};
  c.data.train_scenes = 200000;
  c.data.val_scenes = 25000;
  c.data.shift_scenes = 25000;
  c.data.shift_city_tags = shift_city_tags();
  return c;
}

ExperimentConfig desk_profile() {
  ExperimentConfig c = paper_profile();
  c.profile = "desk";
  c.model.dim = 32;
  c.model.heads = 4;
  c.model.encoder_depth = 2;
  c.model.decoder_depth = 2;
  c.pretrain.batch = 8;
  c.pretrain.epochs = 10;
  c.pretrain.warmup_epochs = 2;
  c.finetune.batch = 8;
  c.finetune.epochs = 40;
  c.finetune.warmup_epochs = 3;
  c.data.train_scenes = 2000;
  c.data.val_scenes = 400;
  c.data.shift_scenes = 400;
  return c;
}

ExperimentConfig profile(std::string_view name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw Error("unknown profile '" + std::string(name) + "' (expected desk or paper)");
}

void validate(const ExperimentConfig& c) {
  validate(c.model);
  validate(c.data.generator);
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw Error("masking.alpha must be in [0, 1]");
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) throw Error("masking.beta must be in [0, 1]");
  const MaeLossWeights& w = c.loss_weights;
  if (!(w.history >= 0.0 && w.future >= 0.0 && w.lane >= 0.0)) {
    throw Error("loss weights must be non-negative");
  }
  for (const TrainConfig* t : {&c.pretrain, &c.finetune}) {
    if (!(t->lr > 0.0)) throw Error("lr must be positive");
    if (!(t->weight_decay >= 0.0)) throw Error("weight_decay must be non-negative");
    if (t->batch == 0) throw Error("batch must be >= 1");
    if (t->warmup_epochs > t->epochs) throw Error("warmup_epochs exceeds epochs");
  }
  if (c.data.train_scenes == 0) throw Error("data.train_scenes must be >= 1");
  for (const auto& tag : c.data.shift_city_tags) {
    for (const auto& train_tag : c.data.generator.city_tags) {
      if (tag == train_tag) throw Error("shift city tag '" + tag + "' is also a train tag");
    }
    city_style(tag);
  }
}

std::string config_to_json(const ExperimentConfig& config) { return to_json_value(config).dump(); }

ExperimentConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("/", std::string("invalid JSON: ") + e.what());
  }
  ObjectReader root(j, "");
  std::string name = "desk";
  root.read("profile", name);
  ExperimentConfig c;
  try {
    c = profile(name);
  } catch (const Error& e) {
    throw SchemaError("/profile", e.what());
  }

  {
    ObjectReader m = root.child("model");
    m.read("dim", c.model.dim);
    m.read("encoder_depth", c.model.encoder_depth);
    m.read("decoder_depth", c.model.decoder_depth);
    m.read("heads", c.model.heads);
    m.read("modes", c.model.modes);
    m.read("mlp_ratio", c.model.mlp_ratio);
    m.read("dropout", c.model.dropout);
    m.read("fpn_kernels", c.model.fpn_kernels);
    m.read("fpn_blocks", c.model.fpn_blocks);
    m.finish();
  }
  {
    ObjectReader m = root.child("masking");
    m.read("alpha", c.alpha);
    m.read("beta", c.beta);
    m.finish();
  }
  {
    ObjectReader w = root.child("loss_weights");
    w.read("history", c.loss_weights.history);
    w.read("future", c.loss_weights.future);
    w.read("lane", c.loss_weights.lane);
    w.finish();
  }
  read_train(root.child("pretrain"), c.pretrain);
  read_train(root.child("finetune"), c.finetune);
  {
    ObjectReader d = root.child("data");
    d.read("seed", c.data.seed);
    d.read("train_scenes", c.data.train_scenes);
    d.read("val_scenes", c.data.val_scenes);
    d.read("shift_scenes", c.data.shift_scenes);
    d.read("shift_city_tags", c.data.shift_city_tags);
    d.read("dir", c.data.dir);
    ObjectReader g = d.child("generator");
    GenConfig& gen = c.data.generator;
    g.read("min_agents", gen.min_agents);
    g.read("max_agents", gen.max_agents);
    g.read("min_lanes", gen.min_lanes);
    g.read("max_lanes", gen.max_lanes);
    g.read("arm_length", gen.arm_length);
    g.read("straight_weight", gen.straight_weight);
    g.read("turn_weight", gen.turn_weight);
    g.read("stop_weight", gen.stop_weight);
    g.read("noise_sigma", gen.noise_sigma);
    g.read("city_tags", gen.city_tags);
    g.read("random_global_transform", gen.random_global_transform);
    g.finish();
    d.finish();
  }
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& config) {
  return fnv1a_hex(config_to_json(config));
}

}  // namespace trajmae
