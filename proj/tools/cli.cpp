// Copyright 2026 The hlspot Authors.
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

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "hlspot/dataset.hpp"
#include "hlspot/eval.hpp"
#include "hlspot/run_config.hpp"
#include "hlspot/training.hpp"
#include "hlspot/verify.hpp"
#include "json.hpp"

namespace hlspot::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Failures that map to exit code 2.
struct DataFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataFailure("cannot create output directory " + dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFailure("cannot write " + path.string());
  out << text;
}

void echo_config(const std::string& dir, const RunConfig& config) {
  write_text(fs::path(dir) / "config.json", config.to_json() + "\n");
}

std::string scene_name(const std::string& image) { return fs::path(image).filename().string(); }

SpotterModel load_model(const std::string& path) {
  const TensorMap state = load_checkpoint(path);
  SpotterModel model(config_from_state(state), 0);
  model.load(state);
  return model;
}

// ---------------------------------------------------------------------------
// Overlay drawing

void draw_segment(Image& im, Point a, Point b, std::array<std::uint8_t, 3> color, double width) {
  const double r = width / 2;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r - 1)));
  const int x1 = std::min(im.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r - 1)));
  const int y1 = std::min(im.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r + 1)));
  const double dx = b.x - a.x, dy = b.y - a.y, len2 = dx * dx + dy * dy;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double d = std::hypot(px - (a.x + t * dx), py - (a.y + t * dy));
      const double cover = std::clamp(r + 0.5 - d, 0.0, 1.0);
      if (cover > 0) im.blend(x, y, color, cover);
    }
}

void draw_dot(Image& im, Point c, double radius, std::array<std::uint8_t, 3> color, double alpha) {
  for (int y = static_cast<int>(c.y - radius - 1); y <= static_cast<int>(c.y + radius + 1); ++y)
    for (int x = static_cast<int>(c.x - radius - 1); x <= static_cast<int>(c.x + radius + 1); ++x) {
      const double d = std::hypot(x + 0.5 - c.x, y + 0.5 - c.y);
      const double cover = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (cover > 0) im.blend(x, y, color, cover * alpha);
    }
}

// ---------------------------------------------------------------------------
// Commands

int cmd_generate(const RunConfig& config, int scenes, const std::string& out_dir, std::ostream& out) {
  if (scenes < 0) throw CLI::ValidationError("--scenes", "must be >= 0");
  ensure_dir(out_dir);
  const auto samples = procedural_style_samples(config.seed, 3);
  const auto profiles = build_style_profiles(samples, config.synthmap.k_styles, config.seed);
  std::vector<MapScene> generated(scenes);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < scenes; ++i) generated[i] = generate_scene(config.synthmap, profiles, config.seed, i);

  std::vector<AnnotatedImage> index;
  int words = 0, violations = 0;
  for (int i = 0; i < scenes; ++i) {
    for (const auto& v : check_scene(generated[i], config.synthmap.scene.max_text_len)) {
      ++violations;
      out << "scene " << i << ": " << v << "\n";
    }
    words += static_cast<int>(generated[i].annotations.size());
    try {
      index.push_back(write_scene(out_dir, i, generated[i]));
    } catch (const std::exception& e) {
      throw DataFailure(e.what());
    }
  }
  write_index(out_dir, index);
  json manifest{{"seed", config.seed}, {"scenes", scenes}, {"words", words},
                {"violations", violations}, {"index", "annotations.jsonl"}};
  write_text(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
  echo_config(out_dir, config);
  out << "wrote " << scenes << " scenes (" << words << " words) to " << out_dir << "\n";
  return violations ? kDataError : kOk;
}

std::vector<Sample> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("dataset directory not found: " + dir);
  return load_samples(dir, read_index(dir));
}

int cmd_train(const RunConfig& config, const std::string& data, const std::string& out_dir,
              const std::string& init, std::ostream& out) {
  const auto samples = load_dataset(data);
  ensure_dir(out_dir);
  echo_config(out_dir, config);
  SpotterModel model(config.model, config.seed);
  if (!init.empty()) model.load(load_checkpoint(init));

  const fs::path snapshots = fs::path(out_dir) / "snapshots";
  TrainHooks hooks;
  hooks.on_log = [&](const LossRecord& r) {
    char line[200];
    std::snprintf(line, sizeof line,
                  "iter %6d  total %.5f  enc %.4f  cls %.4f  coord %.4f  ct %.4f  char %.4f\n",
                  r.iter, r.total, r.enc, r.cls, r.coord, r.ct, r.chr);
    out << line << std::flush;
  };
  hooks.on_snapshot = [&](int iter) {
    ensure_dir(snapshots.string());
    char name[64];
    std::snprintf(name, sizeof name, "iter_%07d.ckpt", iter);
    save_checkpoint((snapshots / name).string(), model_state(model));
  };
  std::vector<LossRecord> log;
  try {
    log = train(model, samples, config.train, MatchWeights{}, hooks);
  } catch (const NonFiniteLoss& e) {
    out << "training aborted: " << e.what() << "\n";
    save_checkpoint((fs::path(out_dir) / "aborted.ckpt").string(), model_state(model));
    return kDataError;
  }
  write_text(fs::path(out_dir) / "loss.csv", loss_csv(log, config.train.log_interval));
  save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), model_state(model));
  out << "saved " << (fs::path(out_dir) / "model.ckpt").string() << "\n";
  return kOk;
}

int cmd_finetune(const RunConfig& config, const std::string& data, const std::string& checkpoint,
                 const std::string& out_dir, bool withhold, std::ostream& out) {
  if (!fs::is_directory(data)) throw DatasetError("dataset directory not found: " + data);
  auto index = read_index(data);
  if (withhold) index = withhold_centers(std::move(index));
  const auto samples = load_samples(data, index);
  SpotterModel model = load_model(checkpoint);
  ensure_dir(out_dir);
  echo_config(out_dir, config);

  const FinetuneResult r = iterative_finetune(
      model, samples, config.train, MatchWeights{}, [&](int round, int accepted) {
        out << "round " << round << ": accepted " << accepted << "\n" << std::flush;
      });
  json doc;
  doc["candidates"] = r.record.candidates;
  doc["history"] = r.record.history;
  doc["fractions"] = json::array();
  for (std::size_t i = 0; i < r.record.history.size(); ++i)
    doc["fractions"].push_back(r.record.fraction(static_cast<int>(i)));
  doc["rounds"] = r.rounds;
  doc["converged"] = r.converged;
  doc["accepted"] = json::array();
  for (std::size_t i = 0; i < r.record.accepted.size(); ++i)
    doc["accepted"].push_back({{"image", index[i].image}, {"instances", r.record.accepted[i]}});
  write_text(fs::path(out_dir) / "acceptance.json", doc.dump(2) + "\n");
  save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), model_state(model));
  out << (r.converged ? "stable" : "round limit") << " after " << r.rounds << " rounds\n";
  return kOk;
}

int cmd_infer(const std::string& checkpoint, std::vector<std::string> images, const std::string& data,
              const std::string& out_dir, bool debug, std::optional<double> threshold,
              std::ostream& out) {
  SpotterModel model = load_model(checkpoint);
  if (!data.empty()) {
    if (!fs::is_directory(data)) throw DatasetError("dataset directory not found: " + data);
    for (const auto& entry : read_index(data)) images.push_back((fs::path(data) / entry.image).string());
  }
  ensure_dir(out_dir);
  const fs::path overlays = fs::path(out_dir) / "overlays";
  const fs::path sampling = fs::path(out_dir) / "sampling";
  ensure_dir(overlays.string());
  if (debug) ensure_dir(sampling.string());

  std::ofstream preds(fs::path(out_dir) / "predictions.jsonl");
  if (!preds) throw DataFailure("cannot write predictions into " + out_dir);
  const auto& cfg = model.config();
  for (const auto& path : images) {
    Image image;
    try {
      image = read_png(path);
    } catch (const ImageIoError& e) {
      throw DataFailure(e.what());
    }
    const double W = image.width, H = image.height;
    SamplingTrace trace;
    const auto dets = model.spot(image_to_tensor(image.rgb, image.width, image.height), threshold,
                                 debug ? &trace : nullptr);
    const std::string name = scene_name(path);
    Image overlay = image;
    json dump = json::array();
    for (const auto& d : dets) {
      json line;
      line["image"] = name;
      line["score"] = d.score;
      line["text"] = d.text;
      line["polygon"] = json::array();
      for (const auto& p : d.polygon) line["polygon"].push_back({p.x * W, p.y * H});
      line["char_centers"] = json::array();
      for (const auto& p : d.char_centers) line["char_centers"].push_back({p.x * W, p.y * H});
      preds << line.dump() << "\n";

      for (std::size_t k = 0; k < d.polygon.size(); ++k) {
        const Point a = d.polygon[k], b = d.polygon[(k + 1) % d.polygon.size()];
        draw_segment(overlay, {a.x * W, a.y * H}, {b.x * W, b.y * H}, {20, 170, 40}, 1.2);
      }
      if (debug) {
        // Final-layer character attention: every sampling location shaded
        // by its attention weight, the base point drawn solid.
        const auto& rec = trace.chars.back();
        const int per = cfg.n_heads * cfg.n_levels * cfg.n_points;
        json slots = json::array();
        for (std::size_t c = 0; c < d.slots.size(); ++c) {
          const std::size_t t = static_cast<std::size_t>(d.query) * cfg.max_text_len + d.slots[c];
          json locs = json::array();
          for (int j = 0; j < per; ++j) {
            const double x = rec.locations[(t * per + j) * 2], y = rec.locations[(t * per + j) * 2 + 1];
            const double w = rec.weights[t * per + j];
            locs.push_back({x * W, y * H, w});
            draw_dot(overlay, {x * W, y * H}, 1.2, {230, 120, 0}, std::clamp(0.2 + 0.8 * w, 0.0, 1.0));
          }
          const Point base{rec.base[t * 2] * W, rec.base[t * 2 + 1] * H};
          slots.push_back({{"slot", d.slots[c]}, {"char", std::string(1, d.text[c])},
                           {"base", {base.x, base.y}}, {"samples", locs}});
        }
        dump.push_back({{"text", d.text}, {"score", d.score}, {"query", d.query}, {"chars", slots}});
      }
      for (const auto& p : d.char_centers) draw_dot(overlay, {p.x * W, p.y * H}, 1.5, {210, 30, 30}, 1.0);
    }
    const std::string stem = fs::path(name).stem().string();
    write_png((overlays / (stem + ".png")).string(), overlay);
    if (debug) write_text(sampling / (stem + ".json"), dump.dump(1) + "\n");
  }
  out << "spotted " << images.size() << " images into " << out_dir << "\n";
  return kOk;
}

std::vector<ImageResult> load_eval_inputs(const std::string& gt_dir, const std::string& preds_path) {
  if (!fs::is_directory(gt_dir)) throw DatasetError("dataset directory not found: " + gt_dir);
  const auto index = read_index(gt_dir);
  std::vector<ImageResult> images(index.size());
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < index.size(); ++i) {
    images[i].gts = index[i].instances;
    by_name[scene_name(index[i].image)] = i;
  }
  std::ifstream in(preds_path);
  if (!in) throw DatasetError("predictions file not found: " + preds_path);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto it = by_name.find(scene_name(j.at("image").get<std::string>()));
      if (it == by_name.end()) throw DatasetError("image not in the ground truth index");
      EvalPrediction p;
      for (const auto& q : j.at("polygon")) p.polygon.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
      p.text = j.value("text", "");
      p.score = j.at("score").get<double>();
      images[it->second].preds.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw DatasetError(preds_path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return images;
}

int cmd_eval(const RunConfig& config, const std::string& gt, const std::string& preds,
             const std::string& out_dir, std::ostream& out) {
  const EvalReport report = evaluate(load_eval_inputs(gt, preds), config.iou_thresh);
  ensure_dir(out_dir);
  echo_config(out_dir, config);
  write_text(fs::path(out_dir) / "report.json", report.to_json() + "\n");
  write_text(fs::path(out_dir) / "report.txt", report.to_table());
  out << report.to_table();
  return kOk;
}

int cmd_verify(bool quick, std::ostream& out) {
  using namespace verify;
  const int seeds = quick ? 10 : 100;
  const std::vector<std::function<SuiteResult()>> suites = {
      [&] { return op_gradient_suite(seeds); },
      [&] { return model_gradient_suite(seeds); },
      [&] { return deform_oracle_suite(quick ? 10 : 50); },
      [&] { return hungarian_oracle_suite(quick ? 100 : 1000, quick ? 20 : 200); },
      [&] { return iou_oracle_suite(quick ? 50 : 500); },
      [&] { return center_predictor_suite(quick ? 10 : 50); },
  };
  bool all = true;
  for (const auto& suite : suites) {
    const SuiteResult r = suite();
    all &= r.passed;
    char line[96];
    std::snprintf(line, sizeof line, "%-4s %-28s %7.2fs  ", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                  r.seconds);
    out << line << r.detail << "\n" << std::flush;
  }
  return all ? kOk : kVerifyFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hlspot: hyper-local deformable text spotting on map images"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  std::string config_path, preset = "micro", out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  app.add_option("--config", config_path, "JSON config file (sections model, train, synthmap, eval)");
  app.add_option("--preset", preset, "base settings")->check(CLI::IsMember({"micro", "paper"}));
  app.add_option("--seed", seed, "seed for generation, initialization and shuffling");
  app.add_option("--threads", threads, "worker threads (default: HLSPOT_THREADS or all)");

  auto* gen = app.add_subcommand("generate", "render synthetic map scenes with annotations");
  int scenes = 10;
  gen->add_option("--scenes", scenes, "number of scenes");
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  auto* tr = app.add_subcommand("train", "train a spotter on a dataset");
  std::string data, init, checkpoint;
  std::optional<int> iterations;
  tr->add_option("--data", data, "dataset directory (annotations.jsonl)")->required();
  tr->add_option("--out", out_dir, "run directory")->required();
  tr->add_option("--init", init, "start from this checkpoint");
  tr->add_option("--iterations", iterations, "override train.iterations");

  auto* ft = app.add_subcommand("finetune", "iterative center acceptance + finetuning");
  bool withhold = false;
  ft->add_option("--data", data, "dataset directory")->required();
  ft->add_option("--checkpoint", checkpoint, "pretrained checkpoint")->required();
  ft->add_option("--out", out_dir, "run directory")->required();
  ft->add_flag("--withhold-centers", withhold, "ignore annotated character centers");

  auto* inf = app.add_subcommand("infer", "spot words in PNG images");
  std::vector<std::string> images;
  bool debug = false;
  std::optional<double> threshold;
  inf->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  inf->add_option("--out", out_dir, "output directory")->required();
  inf->add_option("--data", data, "also spot every image of this dataset");
  inf->add_option("--threshold", threshold, "score threshold (default from the checkpoint)");
  inf->add_flag("--debug-sampling", debug, "dump and draw character sampling locations");
  inf->add_option("images", images, "PNG files");

  auto* ev = app.add_subcommand("eval", "score predictions against a dataset");
  std::string preds;
  ev->add_option("--gt", data, "ground-truth dataset directory")->required();
  ev->add_option("--preds", preds, "predictions JSONL")->required();
  ev->add_option("--out", out_dir, "report directory")->required();

  auto* ver = app.add_subcommand("verify", "run the gradient and oracle check suites");
  bool quick = false;
  ver->add_flag("--quick", quick, "smaller sample counts");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (threads > 0) kernels::set_num_threads(threads);
    else kernels::threads_from_env();
    RunConfig config = RunConfig::preset(preset);
    if (!config_path.empty()) config.merge_file(config_path);
    if (seed) {
      config.seed = *seed;
      config.train.seed = *seed;
    }
    if (iterations) config.train.iterations = *iterations;
    config.model.validate();
    config.train.validate();

    if (*gen) return cmd_generate(config, scenes, out_dir, out);
    if (*tr) return cmd_train(config, data, out_dir, init, out);
    if (*ft) return cmd_finetune(config, data, checkpoint, out_dir, withhold, out);
    if (*inf) return cmd_infer(checkpoint, images, data, out_dir, debug, threshold, out);
    if (*ev) return cmd_eval(config, data, preds, out_dir, out);
    if (*ver) return cmd_verify(quick, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    // Missing files, corrupt checkpoints, malformed annotations.
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace hlspot::cli
