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

#include "trajmae/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "trajmae/scenario_io.hpp"

namespace trajmae {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Stream keys under a run seed.
constexpr std::uint64_t kPretrainKey = 0x7072657472616931ULL;
constexpr std::uint64_t kFinetuneKey = 0x66696e6574756e31ULL;
constexpr std::uint64_t kInitKey = 1;
constexpr std::uint64_t kMaskKey = 2;
constexpr std::uint64_t kDropoutKey = 3;
constexpr std::uint64_t kShuffleKey = 4;

constexpr Split kSplits[] = {Split::kTrain, Split::kVal, Split::kShiftVal};

std::size_t split_size(const DataConfig& d, Split s) {
  switch (s) {
    case Split::kTrain:
      return d.train_scenes;
    case Split::kVal:
      return d.val_scenes;
    case Split::kShiftVal:
      return d.shift_scenes;
  }
  return 0;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

// Shuffled batches of scene pointers for one epoch.
std::vector<std::vector<const ProcessedScene*>> epoch_batches(
    const std::vector<ProcessedScene>& scenes, std::size_t batch, RngStream rng) {
  const std::vector<std::size_t> order = rng.permutation(scenes.size());
  std::vector<std::vector<const ProcessedScene*>> out;
  for (std::size_t i = 0; i < order.size(); i += batch) {
    std::vector<const ProcessedScene*> b;
    for (std::size_t j = i; j < std::min(order.size(), i + batch); ++j) {
      b.push_back(&scenes[order[j]]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

struct Schedule {
  std::size_t total = 0;
  std::size_t warmup = 0;
  double base = 0.0;

  // Shifted by one so that neither the first nor the last step has lr 0.
  double at(std::size_t step) const { return lr_at(step + 1, total + 1, warmup, base); }
};

Schedule make_schedule(const TrainConfig& t, std::size_t num_scenes) {
  const std::size_t per_epoch = (num_scenes + t.batch - 1) / t.batch;
  return {t.epochs * per_epoch, t.warmup_epochs * per_epoch, t.lr};
}

std::string metric_columns(const SceneMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", m.min_ade_1, m.min_fde_1,
                m.mr_1, m.min_ade_6, m.min_fde_6, m.mr_6, m.brier_min_fde_6);
  return buf;
}

constexpr const char* kMetricHeader = "minADE_1,minFDE_1,MR_1,minADE_6,minFDE_6,MR_6,brier_minFDE_6";

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kShiftVal:
      return "shift_val";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : kSplits) {
    if (to_string(s) == name) return s;
  }
  throw Error("unknown split '" + std::string(name) + "' (expected train, val or shift_val)");
}

RawScenario generate_scene(const DataConfig& data, Split split, std::size_t index) {
  GenConfig gen = data.generator;
  if (split == Split::kShiftVal) {
    if (data.shift_city_tags.empty()) throw Error("no shift city tags configured");
    gen.city_tags = data.shift_city_tags;
  }
  RngStream rng = RngStream(data.seed).split(static_cast<std::uint64_t>(split)).split(index);
  char id[32];
  std::snprintf(id, sizeof(id), "-%06zu", index);
  return generate_synthetic_scenario(gen, rng, std::string(to_string(split)) + id);
}

std::vector<RawScenario> generate_split(const DataConfig& data, Split split) {
  std::vector<RawScenario> out;
  const std::size_t n = split_size(data, split);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_scene(data, split, i));
  return out;
}

std::vector<ProcessedScene> preprocess_all(const std::vector<RawScenario>& raw) {
  std::vector<ProcessedScene> out;
  out.reserve(raw.size());
  for (const RawScenario& r : raw) out.push_back(normalize_to_focal(r));
  return out;
}

std::string write_corpus(const ExperimentConfig& config, const std::string& dir) {
  validate(config);
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error("cannot create " + dir + ": " + ec.message());

  json manifest;
  manifest["seed"] = config.data.seed;
  manifest["config_hash"] = config_hash(config);
  std::string all_bytes;
  for (Split s : kSplits) {
    const std::string name(to_string(s));
    fs::create_directories(root / name, ec);
    if (ec) throw Error("cannot create " + (root / name).string() + ": " + ec.message());
    std::map<std::string, std::size_t> tags;
    json files = json::array();
    const std::size_t n = split_size(config.data, s);
    for (std::size_t i = 0; i < n; ++i) {
      const RawScenario r = generate_scene(config.data, s, i);
      const std::string rel = name + "/" + r.scenario_id + ".json";
      const std::string text = scenario_to_json(r);
      write_file(root / rel, text);
      all_bytes += text;
      files.push_back(rel);
      ++tags[r.city_tag];
    }
    manifest["splits"][name] = {{"count", n}, {"city_tags", tags}, {"files", files}};
  }
  manifest["content_hash"] = fnv1a_hex(all_bytes);
  const std::string text = manifest.dump(2) + "\n";
  write_file(root / "manifest.json", text);
  return text;
}

std::vector<RawScenario> read_split(const std::string& dir, Split split) {
  const fs::path root(dir);
  json manifest;
  try {
    manifest = json::parse(read_file(root / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error("invalid manifest in " + dir + ": " + e.what());
  }
  const std::string name(to_string(split));
  if (!manifest.contains("splits") || !manifest["splits"].contains(name)) {
    throw Error("manifest in " + dir + " has no split '" + name + "'");
  }
  std::vector<RawScenario> out;
  for (const auto& f : manifest["splits"][name]["files"]) {
    out.push_back(load_scenario((root / f.get<std::string>()).string()));
  }
  return out;
}

std::vector<ProcessedScene> load_scenes(const ExperimentConfig& config, Split split) {
  if (!config.data.dir.empty()) return preprocess_all(read_split(config.data.dir, split));
  return preprocess_all(generate_split(config.data, split));
}

PretrainRun run_pretrain(const ExperimentConfig& config, const std::vector<ProcessedScene>& train,
                         std::uint64_t seed, const Progress& progress) {
  validate(config);
  if (train.empty()) throw Error("pretraining needs at least one scene");
  const RngStream root = RngStream(seed).split(kPretrainKey);
  const MaeModel model(config.model);
  PretrainRun run;
  RngStream init = root.split(kInitKey);
  model.init(run.params, init);
  RngStream mask_rng = root.split(kMaskKey);
  RngStream dropout_rng = root.split(kDropoutKey);

  PretrainOptions options;
  options.alpha = config.alpha;
  options.beta = config.beta;
  options.weights = config.loss_weights;
  options.weight_decay = config.pretrain.weight_decay;
  const Schedule schedule = make_schedule(config.pretrain, train.size());

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.pretrain.epochs; ++epoch) {
    const auto batches = epoch_batches(train, config.pretrain.batch,
                                       root.split(kShuffleKey).split(epoch));
    PretrainEpoch log;
    log.epoch = epoch;
    for (const auto& batch : batches) {
      options.lr = schedule.at(step++);
      const PretrainRecord r = pretrain_step(model, run.params, batch, options, mask_rng,
                                             dropout_rng);
      log.history += r.history;
      log.future += r.future;
      log.lane += r.lane;
      log.total += r.total;
      log.lr = options.lr;
    }
    const double n = static_cast<double>(batches.size());
    log.history /= n;
    log.future /= n;
    log.lane /= n;
    log.total /= n;
    run.log.push_back(log);
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "pretrain epoch %zu: L_MAE %.4f (H %.4f F %.4f L %.4f) lr %.2e",
                    epoch, log.total, log.history, log.future, log.lane, log.lr);
      progress(buf);
    }
  }
  return run;
}

FinetuneRun run_finetune(const ExperimentConfig& config, const std::vector<ProcessedScene>& train,
                         const std::vector<ProcessedScene>& val, std::uint64_t seed,
                         const ParamStore* pretrained, const Progress& progress) {
  validate(config);
  if (train.empty()) throw Error("fine-tuning needs at least one scene");
  const RngStream root = RngStream(seed).split(kFinetuneKey);
  const ForecastModel model(config.model);
  FinetuneRun run;
  RngStream init = root.split(kInitKey);
  model.init(run.params, init);
  if (pretrained != nullptr) init_from_pretrained(*pretrained, run.params);
  RngStream dropout_rng = root.split(kDropoutKey);

  FinetuneOptions options;
  options.weight_decay = config.finetune.weight_decay;
  const Schedule schedule = make_schedule(config.finetune, train.size());
  const Forecaster forecaster = model_forecaster(model, run.params);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.finetune.epochs; ++epoch) {
    const auto batches = epoch_batches(train, config.finetune.batch,
                                       root.split(kShuffleKey).split(epoch));
    FinetuneEpoch log;
    log.epoch = epoch;
    for (const auto& batch : batches) {
      options.lr = schedule.at(step++);
      const FinetuneRecord r = finetune_step(model, run.params, batch, options, dropout_rng);
      log.loss += r.total;
      log.regression += r.regression;
      log.classification += r.classification;
      log.lr = options.lr;
    }
    const double n = static_cast<double>(batches.size());
    log.loss /= n;
    log.regression /= n;
    log.classification /= n;
    if (!val.empty()) log.val = evaluate(forecaster, val).mean;
    run.log.push_back(log);
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "finetune epoch %zu: loss %.4f lr %.2e val minADE_6 %.4f",
                    epoch, log.loss, log.lr, log.val.min_ade_6);
      progress(buf);
    }
  }
  return run;
}

Forecaster model_forecaster(const ForecastModel& model, ParamStore& params) {
  return [&model, &params](const ProcessedScene& scene) {
    const Prediction p = model.predict(params, scene);
    const std::size_t k = model.config().modes;
    FocalForecast f;
    f.trajectories = Tensor({k, kFutureSteps, 2});
    std::copy_n(p.trajectories.data(), f.trajectories.size(), f.trajectories.data());
    f.scores.assign(p.probabilities.data(), p.probabilities.data() + k);
    return f;
  };
}

Forecaster ground_truth_forecaster() {
  return [](const ProcessedScene& scene) {
    Tensor gt;
    std::vector<std::uint8_t> valid;
    focal_ground_truth(scene, gt, valid);
    FocalForecast f;
    f.trajectories = gt.reshaped({1, kFutureSteps, 2});
    f.scores = {1.0};
    return f;
  };
}

void write_pretrain_log(const std::vector<PretrainEpoch>& log, std::ostream& out) {
  out << "epoch,L_H,L_F,L_L,L_MAE,lr\n";
  for (const auto& e : log) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%.6e\n", e.epoch, e.history,
                  e.future, e.lane, e.total, e.lr);
    out << buf;
  }
}

void write_finetune_log(const std::vector<FinetuneEpoch>& log, std::ostream& out) {
  out << "epoch,loss,lr," << kMetricHeader << "\n";
  for (const auto& e : log) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6e,", e.epoch, e.loss, e.lr);
    out << buf << metric_columns(e.val) << "\n";
  }
}

std::string checkpoint_metadata(const ExperimentConfig& config, std::string_view kind,
                                std::uint64_t seed) {
  json j;
  j["kind"] = kind;
  j["seed"] = seed;
  j["config_hash"] = config_hash(config);
  j["config"] = json::parse(config_to_json(config));
  return j.dump();
}

CheckpointInfo parse_checkpoint_metadata(const std::string& metadata) {
  CheckpointInfo info;
  try {
    const json j = json::parse(metadata);
    info.kind = j.at("kind").get<std::string>();
    info.seed = j.at("seed").get<std::uint64_t>();
    info.config_hash = j.at("config_hash").get<std::string>();
    info.config = config_from_json(j.at("config").dump());
  } catch (const json::exception& e) {
    throw Error(std::string("invalid checkpoint metadata: ") + e.what());
  }
  return info;
}

bool check_config_match(const CheckpointInfo& info, const ExperimentConfig& config, bool force) {
  const std::string hash = config_hash(config);
  if (hash == info.config_hash) return false;
  if (!force) {
    throw Error("checkpoint config " + info.config_hash + " does not match the requested config " +
                hash + " (pass --force to override)");
  }
  return true;
}

ExperimentConfig with_axis_value(const ExperimentConfig& config, std::string_view axis,
                                 double value) {
  ExperimentConfig c = config;
  if (axis == "alpha") {
    c.alpha = value;
  } else if (axis == "beta") {
    c.beta = value;
  } else if (axis == "encoder_depth") {
    if (!(value >= 1.0) || value != static_cast<double>(static_cast<std::size_t>(value))) {
      throw Error("encoder_depth must be a positive integer");
    }
    c.model.encoder_depth = static_cast<std::size_t>(value);
  } else {
    throw Error("unknown sweep axis '" + std::string(axis) +
                "' (expected alpha, beta or encoder_depth)");
  }
  validate(c);
  return c;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, std::string_view axis,
                                const std::vector<double>& values,
                                const std::vector<std::uint64_t>& seeds,
                                const std::vector<ProcessedScene>& train,
                                const std::vector<ProcessedScene>& val,
                                const Progress& progress) {
  if (values.empty() || seeds.empty()) throw Error("sweep needs at least one value and one seed");
  if (val.empty()) throw Error("sweep needs a validation split");
  std::vector<SweepRow> rows;
  for (double v : values) {
    const ExperimentConfig c = with_axis_value(config, axis, v);
    for (std::uint64_t seed : seeds) {
      if (progress) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "sweep %s=%g seed %llu", std::string(axis).c_str(), v,
                      static_cast<unsigned long long>(seed));
        progress(buf);
      }
      const PretrainRun pre = run_pretrain(c, train, seed, progress);
      FinetuneRun ft = run_finetune(c, train, {}, seed, &pre.params, progress);
      const ForecastModel model(c.model);
      SweepRow row;
      row.axis = std::string(axis);
      row.value = v;
      row.seed = seed;
      row.config_hash = config_hash(c);
      row.val = evaluate(model_forecaster(model, ft.params), val).mean;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_sweep_table(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "axis,value,seed,config_hash," << kMetricHeader << "\n";
  for (const auto& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s,%g,%llu,%s,", r.axis.c_str(), r.value,
                  static_cast<unsigned long long>(r.seed), r.config_hash.c_str());
    out << buf << metric_columns(r.val) << "\n";
  }
}

}  // namespace trajmae
