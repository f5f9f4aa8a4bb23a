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

// Command-line front end: gen-data, pretrain, finetune, eval, reconstruct,
// sweep and render.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "trajmae/checkpoint.hpp"
#include "trajmae/pipeline.hpp"
#include "trajmae/render.hpp"

namespace trajmae {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Options shared by most subcommands.
struct Common {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out;
  std::optional<double> alpha, beta;
  bool force = false;
};

void add_config_options(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Config JSON (desk profile when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--alpha", c.alpha, "History masking ratio override")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--beta", c.beta, "Lane masking ratio override")->check(CLI::Range(0.0, 1.0));
}

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig config = c.config_path.empty() ? desk_profile() : load_config(c.config_path);
  if (c.alpha) config.alpha = *c.alpha;
  if (c.beta) config.beta = *c.beta;
  validate(config);
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

template <typename Fn>
void write_stream(const fs::path& path, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_text(path, ss.str());
}

void progress(const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); }

// run.json: command, seed, resolved config, its hash and the outputs.
void write_run_record(const fs::path& dir, const std::string& command, std::uint64_t seed,
                      const ExperimentConfig& config, const json& extra) {
  json j = extra;
  j["command"] = command;
  j["seed"] = seed;
  j["config_hash"] = config_hash(config);
  j["config"] = json::parse(config_to_json(config));
  write_text(dir / "run.json", j.dump(2) + "\n");
}

// Loads a checkpoint of `kind` and checks it against the resolved config.
Checkpoint load_checked(const std::string& path, const std::string& kind,
                        const ExperimentConfig& config, bool force) {
  Checkpoint ckpt = load_checkpoint(path);
  const CheckpointInfo info = parse_checkpoint_metadata(ckpt.metadata);
  if (info.kind != kind) {
    throw Error(path + " is a " + info.kind + " checkpoint; expected " + kind);
  }
  if (check_config_match(info, config, force)) {
    std::fprintf(stderr, "warning: %s was written under config %s; continuing (--force)\n",
                 path.c_str(), info.config_hash.c_str());
  }
  return ckpt;
}

const ProcessedScene& pick_scene(const std::vector<ProcessedScene>& scenes, std::size_t index) {
  if (index >= scenes.size()) {
    throw Error("scene index " + std::to_string(index) + " out of range (split has " +
                std::to_string(scenes.size()) + ")");
  }
  return scenes[index];
}

int cmd_gen_data(const Common& c) {
  const ExperimentConfig config = resolve_config(c);
  const std::string manifest = write_corpus(config, c.out);
  const json j = json::parse(manifest);
  std::printf("wrote %s (content hash %s)\n", (fs::path(c.out) / "manifest.json").c_str(),
              j["content_hash"].get<std::string>().c_str());
  return 0;
}

int cmd_pretrain(const Common& c) {
  const ExperimentConfig config = resolve_config(c);
  const fs::path dir(c.out);
  const std::vector<ProcessedScene> train = load_scenes(config, Split::kTrain);
  const PretrainRun run = run_pretrain(config, train, c.seed, progress);
  write_stream(dir / "pretrain_log.csv", [&](std::ostream& o) { write_pretrain_log(run.log, o); });
  save_checkpoint((dir / "pretrain.ckpt").string(), run.params,
                  checkpoint_metadata(config, "pretrain", c.seed));
  write_run_record(dir, "pretrain", c.seed, config,
                   {{"checkpoint", "pretrain.ckpt"},
                    {"log", "pretrain_log.csv"},
                    {"final_L_MAE", run.log.empty() ? 0.0 : run.log.back().total}});
  std::printf("wrote %s\n", (dir / "pretrain.ckpt").c_str());
  return 0;
}

int cmd_finetune(const Common& c, const std::string& init) {
  const ExperimentConfig config = resolve_config(c);
  const fs::path dir(c.out);
  std::optional<Checkpoint> pre;
  if (init != "scratch") pre = load_checked(init, "pretrain", config, c.force);
  const std::vector<ProcessedScene> train = load_scenes(config, Split::kTrain);
  const std::vector<ProcessedScene> val = load_scenes(config, Split::kVal);
  const FinetuneRun run =
      run_finetune(config, train, val, c.seed, pre ? &pre->params : nullptr, progress);
  write_stream(dir / "finetune_log.csv", [&](std::ostream& o) { write_finetune_log(run.log, o); });
  save_checkpoint((dir / "finetune.ckpt").string(), run.params,
                  checkpoint_metadata(config, "finetune", c.seed));
  write_run_record(dir, "finetune", c.seed, config,
                   {{"init", init},
                    {"checkpoint", "finetune.ckpt"},
                    {"log", "finetune_log.csv"}});
  std::printf("wrote %s\n", (dir / "finetune.ckpt").c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& baseline,
             const std::string& split_name) {
  const ExperimentConfig config = resolve_config(c);
  const std::vector<ProcessedScene> scenes = load_scenes(config, parse_split(split_name));
  MetricReport report;
  if (baseline == "cv") {
    report = evaluate(constant_velocity_baseline, scenes);
  } else if (baseline == "gt") {
    report = evaluate(ground_truth_forecaster(), scenes);
  } else if (!baseline.empty()) {
    throw Error("unknown baseline '" + baseline + "' (expected cv or gt)");
  } else {
    if (checkpoint.empty()) throw Error("eval needs --checkpoint or --baseline");
    Checkpoint ckpt = load_checked(checkpoint, "finetune", config, c.force);
    const ForecastModel model(config.model);
    report = evaluate(model_forecaster(model, ckpt.params), scenes);
  }
  std::ostringstream csv;
  write_metrics_csv(report, csv);
  if (c.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(c.out, csv.str());
  }
  const SceneMetrics& m = report.mean;
  std::fprintf(stderr, "%s: %zu scenes, minADE_6 %.4f minFDE_6 %.4f MR_6 %.4f\n",
               split_name.c_str(), report.n_scenes(), m.min_ade_6, m.min_fde_6, m.mr_6);
  return 0;
}

int cmd_reconstruct(const Common& c, const std::string& checkpoint, const std::string& split_name,
                    std::size_t index, const std::string& svg_path) {
  // Masking ratios given on the command line apply at inference time only;
  // the checkpoint is checked against the config it was trained with.
  Common base = c;
  base.alpha.reset();
  base.beta.reset();
  const ExperimentConfig config = resolve_config(base);
  Checkpoint ckpt = load_checked(checkpoint, "pretrain", config, c.force);
  const double alpha = c.alpha.value_or(config.alpha);
  const double beta = c.beta.value_or(config.beta);

  const std::vector<ProcessedScene> scenes = load_scenes(config, parse_split(split_name));
  const ProcessedScene& scene = pick_scene(scenes, index);
  RngStream rng = RngStream(c.seed).split(index);
  const MaskedScene masked =
      apply_mask(scene, plan_masks(scene.num_agents(), scene.num_lanes(), alpha, beta, rng));
  const MaeModel model(config.model);
  Tape tape;
  Context ctx{tape, ckpt.params};
  const Reconstruction r = model.forward(ctx, scene, masked);
  const ReconstructionValues values{r.history.value(), r.future.value(), r.lanes.value()};

  json doc = json::parse(reconstruction_json(scene, masked, values));
  doc["alpha"] = alpha;
  doc["beta"] = beta;
  doc["seed"] = c.seed;
  doc["config_hash"] = config_hash(config);
  const std::string out = c.out.empty() ? "reconstruction.json" : c.out;
  write_text(out, doc.dump(2) + "\n");
  if (!svg_path.empty()) {
    RenderOverlay overlay;
    overlay.ground_truth = false;
    overlay.masked = &masked;
    overlay.reconstruction = &values;
    write_text(svg_path, render_svg(scene, overlay));
  }
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("invalid number '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw Error("empty value list");
  return out;
}

int cmd_sweep(const Common& c, const std::string& axis, const std::string& values,
              const std::string& seeds) {
  const ExperimentConfig config = resolve_config(c);
  std::vector<std::uint64_t> seed_list;
  for (double s : parse_list(seeds)) {
    if (s < 0 || s != static_cast<double>(static_cast<std::uint64_t>(s))) {
      throw Error("seeds must be non-negative integers");
    }
    seed_list.push_back(static_cast<std::uint64_t>(s));
  }
  const std::vector<ProcessedScene> train = load_scenes(config, Split::kTrain);
  const std::vector<ProcessedScene> val = load_scenes(config, Split::kVal);
  const std::vector<SweepRow> rows =
      run_sweep(config, axis, parse_list(values), seed_list, train, val, progress);
  std::ostringstream csv;
  write_sweep_table(rows, csv);
  if (c.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(c.out, csv.str());
  }
  return 0;
}

int cmd_render(const Common& c, const std::string& checkpoint, const std::string& baseline,
               const std::string& split_name, std::size_t index) {
  const ExperimentConfig config = resolve_config(c);
  const std::vector<ProcessedScene> scenes = load_scenes(config, parse_split(split_name));
  const ProcessedScene& scene = pick_scene(scenes, index);
  std::optional<FocalForecast> forecast;
  if (baseline == "cv") {
    forecast = constant_velocity_baseline(scene);
  } else if (!baseline.empty()) {
    throw Error("unknown baseline '" + baseline + "' (expected cv)");
  } else if (!checkpoint.empty()) {
    Checkpoint ckpt = load_checked(checkpoint, "finetune", config, c.force);
    const ForecastModel model(config.model);
    forecast = model_forecaster(model, ckpt.params)(scene);
  }
  RenderOverlay overlay;
  overlay.forecast = forecast ? &*forecast : nullptr;
  const std::string out = c.out.empty() ? "scene.svg" : c.out;
  write_text(out, render_svg(scene, overlay));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"trajmae: masked-autoencoder pretraining for motion forecasting"};
  app.require_subcommand(1);

  Common c;
  std::string init = "scratch", checkpoint, baseline, split = "val", svg, axis = "alpha";
  std::string values = "0.2,0.5,0.8", seeds = "1,2,3";
  std::size_t index = 0;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic corpus and manifest");
  add_config_options(gen, c);
  gen->add_option("--out", c.out, "Output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
  add_config_options(pre, c);
  pre->add_option("--seed", c.seed, "Run seed");
  pre->add_option("--out", c.out, "Output directory")->required();

  auto* ft = app.add_subcommand("finetune", "Train the forecaster");
  add_config_options(ft, c);
  ft->add_option("--seed", c.seed, "Run seed");
  ft->add_option("--out", c.out, "Output directory")->required();
  ft->add_option("--init", init, "'scratch' or a pretrain checkpoint path");
  ft->add_flag("--force", c.force, "Accept a checkpoint written under another config");

  auto* ev = app.add_subcommand("eval", "Evaluate a forecaster on a split");
  add_config_options(ev, c);
  ev->add_option("--checkpoint", checkpoint, "Finetune checkpoint");
  ev->add_option("--baseline", baseline, "'cv' (constant velocity) or 'gt' (ground truth)");
  ev->add_option("--split", split, "train, val or shift_val");
  ev->add_option("--out", c.out, "CSV path (stdout when omitted)");
  ev->add_flag("--force", c.force, "Accept a checkpoint written under another config");

  auto* rec = app.add_subcommand("reconstruct", "Reconstruct a masked scene");
  add_config_options(rec, c);
  rec->add_option("--checkpoint", checkpoint, "Pretrain checkpoint")->required();
  rec->add_option("--split", split, "train, val or shift_val");
  rec->add_option("--index", index, "Scene index within the split");
  rec->add_option("--seed", c.seed, "Mask seed");
  rec->add_option("--out", c.out, "JSON path");
  rec->add_option("--svg", svg, "Also render an SVG");
  rec->add_flag("--force", c.force, "Accept a checkpoint written under another config");

  auto* sw = app.add_subcommand("sweep", "Pretrain and fine-tune over one axis");
  add_config_options(sw, c);
  sw->add_option("--axis", axis, "alpha, beta or encoder_depth");
  sw->add_option("--values", values, "Comma-separated axis values");
  sw->add_option("--seeds", seeds, "Comma-separated seeds");
  sw->add_option("--out", c.out, "CSV path (stdout when omitted)");

  auto* ren = app.add_subcommand("render", "Render a scene as SVG");
  add_config_options(ren, c);
  ren->add_option("--checkpoint", checkpoint, "Finetune checkpoint for a forecast overlay");
  ren->add_option("--baseline", baseline, "'cv' for a constant-velocity overlay");
  ren->add_option("--split", split, "train, val or shift_val");
  ren->add_option("--index", index, "Scene index within the split");
  ren->add_option("--out", c.out, "SVG path");
  ren->add_flag("--force", c.force, "Accept a checkpoint written under another config");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) return cmd_gen_data(c);
  if (pre->parsed()) return cmd_pretrain(c);
  if (ft->parsed()) return cmd_finetune(c, init);
  if (ev->parsed()) return cmd_eval(c, checkpoint, baseline, split);
  if (rec->parsed()) return cmd_reconstruct(c, checkpoint, split, index, svg);
  if (sw->parsed()) return cmd_sweep(c, axis, values, seeds);
  if (ren->parsed()) return cmd_render(c, checkpoint, baseline, split, index);
  return 1;
}

}  // namespace
}  // namespace trajmae

int main(int argc, char** argv) {
  try {
    return trajmae::run(argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
