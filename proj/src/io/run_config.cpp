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

#include "hlspot/run_config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hlspot {

using nlohmann::json;

RunConfig RunConfig::micro() {
  RunConfig c;
  c.model = ModelConfig::micro();
  c.train.lr = 1e-3;
  c.train.iterations = 2000;
  c.train.decay_step = 1500;
  c.train.batch_size = 2;
  c.train.log_interval = 10;
  c.train.snapshot_interval = 500;
  c.synthmap.width = c.synthmap.height = 128;
  c.synthmap.features.max_features = 3;
  c.synthmap.features.max_word_len = 6;
  c.synthmap.scene.n_boundary = c.model.n_boundary;
  c.synthmap.scene.max_text_len = c.model.max_text_len;
  c.synthmap.scene.collision_iou = 0.0;
  return c;
}

RunConfig RunConfig::paper() {
  RunConfig c;
  c.model = ModelConfig::paper();
  c.train = TrainConfig::paper();
  c.synthmap.width = c.synthmap.height = 512;
  c.synthmap.features.max_features = 12;
  c.synthmap.features.max_word_len = 12;
  c.synthmap.scene.n_boundary = c.model.n_boundary;
  c.synthmap.scene.max_text_len = c.model.max_text_len;
  return c;
}

RunConfig RunConfig::preset(const std::string& name) {
  if (name == "micro") return micro();
  if (name == "paper") return paper();
  throw ConfigError("unknown preset '" + name + "' (expected micro or paper)");
}

namespace {

json rules_json(const CartographicRules& rules) {
  json out = json::object();
  for (const auto& [cls, r] : rules.rules) {
    json j{{"stroke", r.stroke}, {"width", r.width}};
    j["fill"] = r.fill ? json(*r.fill) : json(nullptr);
    out[feature_class_name(cls)] = j;
  }
  return out;
}

json to_doc(const RunConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  const auto& g = c.synthmap;
  json doc;
  doc["seed"] = c.seed;
  doc["model"] = {{"d_model", m.d_model},
                  {"n_heads", m.n_heads},
                  {"n_levels", m.n_levels},
                  {"n_points", m.n_points},
                  {"n_enc_layers", m.n_enc_layers},
                  {"n_dec_layers", m.n_dec_layers},
                  {"n_queries", m.n_queries},
                  {"n_boundary", m.n_boundary},
                  {"max_text_len", m.max_text_len},
                  {"vocab_size", m.vocab_size},
                  {"ffn_dim", m.ffn_dim},
                  {"backbone_width", m.backbone_width},
                  {"hld_off", m.hld_off},
                  {"hlr_off", m.hlr_off},
                  {"hlpe_off", m.hlpe_off},
                  {"raw_center_attention", m.raw_center_attention},
                  {"score_threshold", m.score_threshold}};
  doc["train"] = {{"lr", t.lr},
                  {"decay_factor", t.decay_factor},
                  {"decay_step", t.decay_step},
                  {"iterations", t.iterations},
                  {"batch_size", t.batch_size},
                  {"snapshot_interval", t.snapshot_interval},
                  {"log_interval", t.log_interval},
                  {"grad_clip", t.grad_clip},
                  {"augment", t.augment},
                  {"scale_min", t.scale_min},
                  {"scale_max", t.scale_max},
                  {"max_rounds", t.max_rounds},
                  {"stability_tol", t.stability_tol},
                  {"finetune_lr", t.finetune_lr},
                  {"finetune_iterations", t.finetune_iterations}};
  doc["synthmap"] = {{"width", g.width},
                     {"height", g.height},
                     {"k_styles", g.k_styles},
                     {"min_features", g.features.min_features},
                     {"max_features", g.features.max_features},
                     {"min_word_len", g.features.min_word_len},
                     {"max_word_len", g.features.max_word_len},
                     {"polygon_fraction", g.features.polygon_fraction},
                     {"n_boundary", g.scene.n_boundary},
                     {"max_text_len", g.scene.max_text_len},
                     {"font_min", g.scene.font_min},
                     {"font_max", g.scene.font_max},
                     {"letter_spacing_max", g.scene.letter_spacing_max},
                     {"slant_max", g.scene.slant_max},
                     {"collision_iou", g.scene.collision_iou},
                     {"rules", rules_json(g.scene.rules)}};
  doc["eval"] = {{"iou_thresh", c.iou_thresh}};
  return doc;
}

void from_doc(const json& doc, RunConfig& c) {
  c.seed = doc.at("seed").get<std::uint64_t>();
  const json& m = doc.at("model");
  auto& mc = c.model;
  mc.d_model = m.at("d_model");
  mc.n_heads = m.at("n_heads");
  mc.n_levels = m.at("n_levels");
  mc.n_points = m.at("n_points");
  mc.n_enc_layers = m.at("n_enc_layers");
  mc.n_dec_layers = m.at("n_dec_layers");
  mc.n_queries = m.at("n_queries");
  mc.n_boundary = m.at("n_boundary");
  mc.max_text_len = m.at("max_text_len");
  mc.vocab_size = m.at("vocab_size");
  mc.ffn_dim = m.at("ffn_dim");
  mc.backbone_width = m.at("backbone_width");
  mc.hld_off = m.at("hld_off");
  mc.hlr_off = m.at("hlr_off");
  mc.hlpe_off = m.at("hlpe_off");
  mc.raw_center_attention = m.at("raw_center_attention");
  mc.score_threshold = m.at("score_threshold");

  const json& t = doc.at("train");
  auto& tc = c.train;
  tc.lr = t.at("lr");
  tc.decay_factor = t.at("decay_factor");
  tc.decay_step = t.at("decay_step");
  tc.iterations = t.at("iterations");
  tc.batch_size = t.at("batch_size");
  tc.snapshot_interval = t.at("snapshot_interval");
  tc.log_interval = t.at("log_interval");
  tc.grad_clip = t.at("grad_clip");
  tc.augment = t.at("augment");
  tc.scale_min = t.at("scale_min");
  tc.scale_max = t.at("scale_max");
  tc.max_rounds = t.at("max_rounds");
  tc.stability_tol = t.at("stability_tol");
  tc.finetune_lr = t.at("finetune_lr");
  tc.finetune_iterations = t.at("finetune_iterations");
  tc.seed = c.seed;

  const json& g = doc.at("synthmap");
  auto& gc = c.synthmap;
  gc.width = g.at("width");
  gc.height = g.at("height");
  gc.k_styles = g.at("k_styles");
  gc.features.min_features = g.at("min_features");
  gc.features.max_features = g.at("max_features");
  gc.features.min_word_len = g.at("min_word_len");
  gc.features.max_word_len = g.at("max_word_len");
  gc.features.polygon_fraction = g.at("polygon_fraction");
  gc.scene.n_boundary = g.at("n_boundary");
  gc.scene.max_text_len = g.at("max_text_len");
  gc.scene.font_min = g.at("font_min");
  gc.scene.font_max = g.at("font_max");
  gc.scene.letter_spacing_max = g.at("letter_spacing_max");
  gc.scene.slant_max = g.at("slant_max");
  gc.scene.collision_iou = g.at("collision_iou");
  gc.scene.rules = CartographicRules::from_json(g.at("rules").dump());

  c.iou_thresh = doc.at("eval").at("iou_thresh");
}

bool same_kind(const json& a, const json& b) {
  if (a.is_null()) return true;
  if (a.is_number()) return b.is_number();
  return a.type() == b.type();
}

// Overlays `patch` onto `base`; every key of `patch` must exist in `base`.
void merge(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config " + (path.empty() ? "root" : path) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, where);
    } else if (!same_kind(slot, value)) {
      throw ConfigError("config key '" + where + "' expects " + std::string(slot.type_name()) +
                        ", got " + value.type_name());
    } else {
      slot = value;
    }
  }
}

}  // namespace

std::string RunConfig::to_json() const { return to_doc(*this).dump(2); }

void RunConfig::merge_json(const std::string& text) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  json doc = to_doc(*this);
  merge(doc, patch, "");
  try {
    from_doc(doc, *this);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream text;
  text << in.rdbuf();
  try {
    merge_json(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace hlspot
