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

#include "hlspot/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace hlspot {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json points_json(std::span<const Point> pts) {
  json out = json::array();
  for (const auto& p : pts) out.push_back({p.x, p.y});
  return out;
}

std::vector<Point> points_from(const json& j) {
  std::vector<Point> out;
  for (const auto& p : j) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

json to_json(const TextInstance& inst) {
  json j;
  j["polygon"] = points_json(inst.polygon.points());
  j["text"] = inst.transcription;
  j["char_centers"] = inst.centers_available ? points_json(inst.char_centers) : json::array();
  j["dont_care"] = inst.dont_care;
  return j;
}

TextInstance from_json(const json& j) {
  TextInstance inst;
  inst.polygon = BoundaryPolygon(points_from(j.at("polygon")));
  inst.transcription = j.at("text").get<std::string>();
  inst.char_centers = points_from(j.value("char_centers", json::array()));
  inst.centers_available = !inst.char_centers.empty();
  inst.dont_care = j.value("dont_care", false);
  return inst;
}

std::string scene_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", id);
  return buf;
}

}  // namespace

bool is_all_numeric(const std::string& text) {
  return !text.empty() &&
         std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string instance_to_json(const TextInstance& instance) { return to_json(instance).dump(); }

TextInstance instance_from_json(const std::string& text) { return from_json(json::parse(text)); }

AnnotatedImage write_scene(const std::string& dir, int id, const MapScene& scene) {
  const std::string stem = scene_stem(id);
  write_png((fs::path(dir) / (stem + ".png")).string(), scene.raster);
  json doc;
  doc["image"] = stem + ".png";
  doc["width"] = scene.width;
  doc["height"] = scene.height;
  doc["instances"] = json::array();
  for (const auto& a : scene.annotations) doc["instances"].push_back(to_json(a));
  std::ofstream out(fs::path(dir) / (stem + ".json"));
  if (!out) throw DatasetError("cannot write annotations into " + dir);
  out << doc.dump(2) << "\n";
  return {stem + ".png", scene.width, scene.height, scene.annotations};
}

void write_index(const std::string& dir, const std::vector<AnnotatedImage>& images) {
  std::ofstream out(fs::path(dir) / "annotations.jsonl");
  if (!out) throw DatasetError("cannot write " + (fs::path(dir) / "annotations.jsonl").string());
  for (const auto& im : images) {
    json line;
    line["image"] = im.image;
    line["width"] = im.width;
    line["height"] = im.height;
    line["instances"] = json::array();
    for (const auto& inst : im.instances) line["instances"].push_back(to_json(inst));
    out << line.dump() << "\n";
  }
}

std::vector<AnnotatedImage> read_index(const std::string& dir) {
  const fs::path path = fs::path(dir) / "annotations.jsonl";
  std::ifstream in(path);
  if (!in) throw DatasetError("dataset index not found: " + path.string());
  std::vector<AnnotatedImage> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      AnnotatedImage im;
      im.image = j.at("image").get<std::string>();
      im.width = j.at("width").get<int>();
      im.height = j.at("height").get<int>();
      for (const auto& inst : j.at("instances")) {
        TextInstance t = from_json(inst);
        if (is_all_numeric(t.transcription)) t.dont_care = true;
        im.instances.push_back(std::move(t));
      }
      out.push_back(std::move(im));
    } catch (const std::exception& e) {
      throw DatasetError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

TextInstance normalize_instance(const TextInstance& instance, int width, int height) {
  TextInstance out = instance;
  std::vector<Point> pts;
  for (const auto& p : instance.polygon.points()) pts.push_back({p.x / width, p.y / height});
  out.polygon = BoundaryPolygon(std::move(pts));
  for (auto& c : out.char_centers) c = {c.x / width, c.y / height};
  return out;
}

TextInstance denormalize_instance(const TextInstance& instance, int width, int height) {
  TextInstance out = instance;
  std::vector<Point> pts;
  for (const auto& p : instance.polygon.points()) pts.push_back({p.x * width, p.y * height});
  out.polygon = BoundaryPolygon(std::move(pts));
  for (auto& c : out.char_centers) c = {c.x * width, c.y * height};
  return out;
}

std::vector<AnnotatedImage> withhold_centers(std::vector<AnnotatedImage> images) {
  for (auto& im : images)
    for (auto& inst : im.instances) {
      inst.char_centers.clear();
      inst.centers_available = false;
    }
  return images;
}

}  // namespace hlspot
