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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "hlspot/synthmap.hpp"
#include "hlspot/tensor.hpp"

namespace hlspot {

using nlohmann::json;

const char* feature_class_name(FeatureClass c) {
  switch (c) {
    case FeatureClass::kRoad: return "road";
    case FeatureClass::kRiver: return "river";
    case FeatureClass::kRailway: return "railway";
    case FeatureClass::kLake: return "lake";
    case FeatureClass::kArea: return "area";
  }
  return "?";
}

FeatureClass parse_feature_class(const std::string& name) {
  for (auto c : {FeatureClass::kRoad, FeatureClass::kRiver, FeatureClass::kRailway,
                 FeatureClass::kLake, FeatureClass::kArea})
    if (name == feature_class_name(c)) return c;
  throw ContractError("unknown feature class '" + name + "'");
}

bool GeoFeature::valid() const {
  if (kind == FeatureKind::kLine) return vertices.size() >= 2;
  return vertices.size() >= 3 && is_simple_polygon(vertices);
}

std::vector<GeoFeature> read_geojson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const json doc = json::parse(in);
  std::vector<GeoFeature> out;
  const auto& features = doc.at("features");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    try {
      GeoFeature g;
      const std::string type = f.at("geometry").at("type");
      const auto& coords = f.at("geometry").at("coordinates");
      const json* ring = nullptr;
      if (type == "LineString") {
        g.kind = FeatureKind::kLine;
        ring = &coords;
      } else if (type == "Polygon") {
        g.kind = FeatureKind::kPolygon;
        ring = &coords.at(0);
      } else {
        throw std::runtime_error("unsupported geometry " + type);
      }
      for (const auto& p : *ring) g.vertices.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      if (g.kind == FeatureKind::kPolygon && g.vertices.size() > 1 &&
          g.vertices.front().x == g.vertices.back().x && g.vertices.front().y == g.vertices.back().y)
        g.vertices.pop_back();
      const auto& props = f.at("properties");
      g.name = props.value("name", "");
      g.feature_class = parse_feature_class(props.value("class", "road"));
      if (!g.valid()) throw std::runtime_error("invalid geometry");
      out.push_back(std::move(g));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": feature " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

CartographicRules CartographicRules::defaults() {
  CartographicRules r;
  r.rules[FeatureClass::kRoad] = {{168, 72, 48}, 2.5, std::nullopt};
  r.rules[FeatureClass::kRiver] = {{70, 120, 190}, 3.0, std::nullopt};
  r.rules[FeatureClass::kRailway] = {{60, 60, 60}, 1.5, std::nullopt};
  r.rules[FeatureClass::kLake] = {{70, 120, 190}, 1.5, std::array<std::uint8_t, 3>{170, 200, 225}};
  r.rules[FeatureClass::kArea] = {{110, 140, 90}, 1.0, std::array<std::uint8_t, 3>{200, 220, 180}};
  return r;
}

CartographicRules CartographicRules::from_json(const std::string& text) {
  CartographicRules r = defaults();
  const json doc = json::parse(text);
  for (const auto& [key, value] : doc.items()) {
    RenderRule& rule = r.rules[parse_feature_class(key)];
    for (const auto& [field, v] : value.items()) {
      if (field == "stroke") rule.stroke = v.get<std::array<std::uint8_t, 3>>();
      else if (field == "width") rule.width = v.get<double>();
      else if (field == "fill")
        rule.fill = v.is_null() ? std::nullopt
                                : std::optional(v.get<std::array<std::uint8_t, 3>>());
      else throw ContractError("unknown cartographic rule field '" + field + "'");
    }
  }
  return r;
}

namespace {

// Max-composited coverage buffer, blended once so overlapping strokes of
// the same mark do not darken twice.
class Coverage {
 public:
  Coverage(int w, int h) : w_(w), h_(h), a_(static_cast<std::size_t>(w) * h, 0.0) {}

  void segment(Point p, Point q, double width) {
    const double r = width / 2.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(p.x, q.x) - r - 1)));
    const int x1 = std::min(w_ - 1, static_cast<int>(std::ceil(std::max(p.x, q.x) + r + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(p.y, q.y) - r - 1)));
    const int y1 = std::min(h_ - 1, static_cast<int>(std::ceil(std::max(p.y, q.y) + r + 1)));
    const double dx = q.x - p.x, dy = q.y - p.y, len2 = dx * dx + dy * dy;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double t = len2 > 0 ? ((px - p.x) * dx + (py - p.y) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double d = std::hypot(px - (p.x + t * dx), py - (p.y + t * dy));
        const double a = std::clamp(r + 0.5 - d, 0.0, 1.0);
        auto& cell = a_[static_cast<std::size_t>(y) * w_ + x];
        cell = std::max(cell, a);
      }
  }

  void polyline(std::span<const Point> line, double width, bool closed = false) {
    for (std::size_t i = 1; i < line.size(); ++i) segment(line[i - 1], line[i], width);
    if (closed && line.size() > 2) segment(line.back(), line.front(), width);
  }

  void fill(std::span<const Point> ring) {
    const Box b = bounding_box(ring);
    for (int y = std::max(0, static_cast<int>(b.y0)); y <= std::min(h_ - 1, static_cast<int>(b.y1)); ++y)
      for (int x = std::max(0, static_cast<int>(b.x0)); x <= std::min(w_ - 1, static_cast<int>(b.x1)); ++x)
        if (point_in_polygon({x + 0.5, y + 0.5}, ring)) a_[static_cast<std::size_t>(y) * w_ + x] = 1.0;
  }

  void composite(Image& image, std::array<std::uint8_t, 3> color, double opacity) const {
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        const double a = a_[static_cast<std::size_t>(y) * w_ + x];
        if (a > 0) image.blend(x, y, color, a * opacity);
      }
  }

 private:
  int w_, h_;
  std::vector<double> a_;
};

std::vector<Point> offset_polyline(std::span<const Point> line, double dist) {
  std::vector<Point> out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    Point acc{0, 0};
    for (std::size_t s : {i == 0 ? 0 : i - 1, std::min(i, line.size() - 2)}) {
      const double dx = line[s + 1].x - line[s].x, dy = line[s + 1].y - line[s].y;
      const double len = std::hypot(dx, dy);
      if (len > 0) {
        acc.x += dy / len;
        acc.y += -dx / len;
      }
    }
    const double len = std::hypot(acc.x, acc.y);
    out.push_back(len > 0 ? Point{line[i].x + dist * acc.x / len, line[i].y + dist * acc.y / len}
                          : line[i]);
  }
  return out;
}

void draw_label(Image& image, const std::vector<GlyphBox>& glyphs, const LabelStyle& style,
                std::array<std::uint8_t, 3> color) {
  const auto& atlas = GlyphAtlas::standard();
  Coverage cov(image.width, image.height);
  for (const auto& g : glyphs) {
    if (g.c == ' ') continue;
    const double a = g.angle_deg * std::numbers::pi / 180.0;
    const Point t{std::cos(a), std::sin(a)}, down{-t.y, t.x};
    auto map = [&](Point u) {
      const double ux = 0.15 + 0.7 * u.x, uy = 0.12 + 0.76 * u.y;
      const double lx = (ux - 0.5) * g.width + style.slant * (0.5 - uy) * g.height;
      const double ly = (uy - 0.5) * g.height;
      return Point{g.center.x + t.x * lx + down.x * ly, g.center.y + t.y * lx + down.y * ly};
    };
    for (const auto& stroke : atlas.strokes(g.c)) {
      std::vector<Point> pts;
      for (const auto& p : stroke) pts.push_back(map(p));
      cov.polyline(pts, style.stroke_width);
    }
  }
  cov.composite(image, color, 1.0);
}

// Real character centers plus inclusion checks used by the generator.
bool annotation_valid(const TextInstance& inst, int width, int height) {
  const auto pts = inst.polygon.points();
  for (const auto& p : pts)
    if (p.x < 0 || p.y < 0 || p.x > width || p.y > height) return false;
  if (!is_simple_polygon(pts)) return false;
  for (std::size_t i = 0; i < inst.transcription.size(); ++i)
    if (!point_in_polygon(inst.char_centers[i], pts)) return false;
  return true;
}

}  // namespace

MapScene compose_scene(const std::vector<GeoFeature>& features, const StyleProfile& style,
                       std::uint64_t seed, int width, int height, const SceneOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MapScene scene;
  scene.width = width;
  scene.height = height;
  scene.features = features;
  scene.style = style;
  scene.raster = Image(width, height, {235, 225, 200});

  // Background: cells drawn with replacement from the profile.
  if (!style.cells.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, style.cells.size() - 1);
    for (int cy = 0; cy * kCellSize < height; ++cy)
      for (int cx = 0; cx * kCellSize < width; ++cx) {
        const Cell& cell = style.cells[pick(rng)];
        for (int y = 0; y < kCellSize && cy * kCellSize + y < height; ++y)
          for (int x = 0; x < kCellSize && cx * kCellSize + x < width; ++x)
            std::copy_n(cell.begin() + (y * kCellSize + x) * 3, 3,
                        scene.raster.at(cx * kCellSize + x, cy * kCellSize + y));
      }
  }

  for (const auto& f : features) {
    const auto it = options.rules.rules.find(f.feature_class);
    const RenderRule rule = it != options.rules.rules.end() ? it->second : RenderRule{};
    if (f.kind == FeatureKind::kPolygon && rule.fill) {
      Coverage fill(width, height);
      fill.fill(f.vertices);
      fill.composite(scene.raster, *rule.fill, 0.7);
    }
    Coverage stroke(width, height);
    stroke.polyline(f.vertices, rule.width, f.kind == FeatureKind::kPolygon);
    stroke.composite(scene.raster, rule.stroke, 1.0);
  }

  for (const auto& f : features) {
    LabelStyle ls;
    ls.font_scale = options.font_min + (options.font_max - options.font_min) * unit(rng);
    ls.letter_spacing = options.letter_spacing_max * unit(rng);
    ls.word_spacing = ls.font_scale * (0.4 + 0.3 * unit(rng));
    ls.slant = options.slant_max * (2 * unit(rng) - 1);
    ls.stroke_width = 1.2 + 0.8 * unit(rng);
    const std::array<std::uint8_t, 3> ink{static_cast<std::uint8_t>(20 + 40 * unit(rng)),
                                          static_cast<std::uint8_t>(20 + 30 * unit(rng)),
                                          static_cast<std::uint8_t>(20 + 30 * unit(rng))};
    if (f.name.empty()) continue;

    std::optional<LabelPlacement> placed;
    if (f.kind == FeatureKind::kLine) {
      // Read left to right, set beside the stroke.
      std::vector<Point> line = f.vertices;
      if (line.back().x < line.front().x) std::reverse(line.begin(), line.end());
      const auto it = options.rules.rules.find(f.feature_class);
      const double half = it != options.rules.rules.end() ? it->second.width / 2 : 1.0;
      line = offset_polyline(line, ls.font_scale / 2 + half + 1.0);
      placed = place_label_on_line(line, f.name, ls, options.n_boundary, options.max_text_len);
    } else {
      placed = place_label_on_polygon(f.vertices, f.name, ls, options.n_boundary,
                                      options.max_text_len);
    }
    if (!placed || !annotation_valid(placed->instance, width, height)) continue;
    bool collides = false;
    for (const auto& other : scene.annotations)
      if (polygon_iou(other.polygon, placed->instance.polygon) > options.collision_iou) {
        collides = true;
        break;
      }
    if (collides) continue;
    draw_label(scene.raster, placed->glyphs, ls, ink);
    scene.annotations.push_back(placed->instance);
    scene.glyphs.push_back(placed->glyphs);
  }
  return scene;
}

// ---------------------------------------------------------------------------

namespace {

const char* const kGazetteer[] = {
    "OAK",     "ELM",     "MILL",    "LAKE",    "POND",    "CREEK",   "RIVER",   "HILL",
    "PARK",    "BAY",     "FORD",    "GLEN",    "MOOR",    "WOOD",    "FARM",    "BROOK",
    "RIDGE",   "VALE",    "MARSH",   "DALE",    "PINE",    "CEDAR",   "MAPLE",   "BIRCH",
    "ASH",     "WILLOW",  "HAVEN",   "PORT",    "DOCK",    "QUAY",    "FORT",    "TOWER",
    "CROSS",   "BRIDGE",  "STONE",   "FIELD",   "GROVE",   "HEATH",   "KNOLL",   "MEADOW",
    "SPRING",  "WELLS",   "NORTH",   "SOUTH",   "EAST",    "WEST",    "UPPER",   "LOWER",
    "SALEM",   "DOVER",   "TROY",    "AVON",    "ESSEX",   "YORK",    "BATH",    "LEEDS",
    "ELGIN",   "OSAGE",   "OMAHA",   "TULSA",   "PERU",    "PARIS",   "ROME",    "VIENNA",
    "LIMA",    "CAIRO",   "DELHI",   "OSLO",    "BERN",    "RIGA",    "KIEV",    "BONN",
    "STREET",  "AVENUE",  "ROAD",    "LANE",    "DRIVE",   "COURT",   "PLACE",   "TRAIL",
    "CANAL",   "HARBOR",  "ISLAND",  "POINT",   "CAPE",    "SOUND",   "INLET",   "MESA",
    "BUTTE",   "GULCH",   "CANYON",  "SUMMIT",  "PASS",    "GAP",     "FALLS",   "RAPIDS",
    "CHURCH",  "SCHOOL",  "MARKET",  "DEPOT",   "STATION", "MINE",    "QUARRY",  "KILN",
    "HARLEM",  "QUEENS",  "BRONX",   "ALBANY",  "FULTON",  "HUDSON",  "WARREN",  "MONROE",
    "JACKSON", "LINCOLN", "GRANT",   "SHERMAN", "CLAY",    "POLK",    "TYLER",   "ADAMS",
    "ZION",    "JORDAN",  "EDEN",    "SHARON",  "BETHEL",  "CANAAN",  "GOSHEN",  "HEBRON",
};

std::vector<Point> curve(std::mt19937_64& rng, int width, int height, double bend, double wiggle) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Point c{width * (0.3 + 0.4 * unit(rng)), height * (0.25 + 0.5 * unit(rng))};
  // Mostly gentle slopes; some steep ones populate the rotated slices.
  double theta = (unit(rng) < 0.7 ? 35.0 : 85.0) * (2 * unit(rng) - 1) * std::numbers::pi / 180.0;
  const double len = std::min(width, height) * (1.0 + 0.5 * unit(rng));
  const double kappa = bend * (2 * unit(rng) - 1);
  const double phase = 2 * std::numbers::pi * unit(rng);
  std::vector<Point> out;
  constexpr int kVertices = 16;
  for (int i = 0; i < kVertices; ++i) {
    const double t = static_cast<double>(i) / (kVertices - 1) - 0.5;
    const double u = t * len;
    const double v = (kappa * (t * t - 1.0 / 12.0) + wiggle * std::sin(4 * t * std::numbers::pi + phase)) * len;
    out.push_back({c.x + u * std::cos(theta) - v * std::sin(theta),
                   c.y + u * std::sin(theta) + v * std::cos(theta)});
  }
  return out;
}

std::vector<Point> blob(std::mt19937_64& rng, int width, int height, bool rectangular) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Point c{width * (0.3 + 0.4 * unit(rng)), height * (0.3 + 0.4 * unit(rng))};
  const double rx = width * (0.2 + 0.15 * unit(rng)), ry = height * (0.1 + 0.1 * unit(rng));
  const double theta = 25.0 * (2 * unit(rng) - 1) * std::numbers::pi / 180.0;
  std::vector<Point> local;
  if (rectangular) {
    local = {{-rx, -ry}, {rx, -ry}, {rx, ry}, {-rx, ry}};
  } else {
    for (int i = 0; i < 24; ++i) {
      const double a = 2 * std::numbers::pi * i / 24;
      local.push_back({rx * std::cos(a), ry * std::sin(a)});
    }
  }
  std::vector<Point> out;
  for (const auto& p : local)
    out.push_back({c.x + p.x * std::cos(theta) - p.y * std::sin(theta),
                   c.y + p.x * std::sin(theta) + p.y * std::cos(theta)});
  return out;
}

}  // namespace

std::vector<GeoFeature> random_features(std::uint64_t seed, int width, int height,
                                        const FeatureOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::string> names;
  for (const char* w : kGazetteer) {
    const int len = static_cast<int>(std::string(w).size());
    if (len >= options.min_word_len && len <= options.max_word_len) names.push_back(w);
  }
  if (names.empty()) throw ContractError("no gazetteer word fits the requested length range");
  const int count = std::uniform_int_distribution<int>(options.min_features, options.max_features)(rng);
  std::vector<GeoFeature> out;
  for (int i = 0; i < count; ++i) {
    GeoFeature f;
    f.name = names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
    if (unit(rng) < options.polygon_fraction) {
      f.kind = FeatureKind::kPolygon;
      const bool rect = unit(rng) < 0.5;
      f.feature_class = rect ? FeatureClass::kArea : FeatureClass::kLake;
      f.vertices = blob(rng, width, height, rect);
    } else {
      f.kind = FeatureKind::kLine;
      const double r = unit(rng);
      if (r < 0.5) {
        f.feature_class = FeatureClass::kRoad;
        f.vertices = curve(rng, width, height, 0.25, 0.0);
      } else if (r < 0.8) {
        f.feature_class = FeatureClass::kRiver;
        f.vertices = curve(rng, width, height, 0.2, 0.03);
      } else {
        f.feature_class = FeatureClass::kRailway;
        f.vertices = curve(rng, width, height, 0.1, 0.0);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

MapScene generate_scene(const GeneratorOptions& options,
                        const std::vector<StyleProfile>& profiles, std::uint64_t seed,
                        int index) {
  if (profiles.empty()) throw ContractError("generate_scene: no style profiles");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint64_t, 3> seeds;
  seq.generate(seeds.begin(), seeds.end());
  const auto& style = profiles[seeds[0] % profiles.size()];
  const auto features = random_features(seeds[1], options.width, options.height, options.features);
  return compose_scene(features, style, seeds[2], options.width, options.height, options.scene);
}

std::vector<std::string> check_scene(const MapScene& scene, int max_text_len) {
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < scene.annotations.size(); ++i) {
    const auto& a = scene.annotations[i];
    const std::string tag = "annotation " + std::to_string(i) + " ('" + a.transcription + "'): ";
    const auto pts = a.polygon.points();
    if (!is_simple_polygon(pts)) problems.push_back(tag + "polygon is not simple");
    for (const auto& p : pts)
      if (p.x < 0 || p.y < 0 || p.x > scene.width || p.y > scene.height) {
        problems.push_back(tag + "polygon leaves the raster");
        break;
      }
    if (static_cast<int>(a.transcription.size()) > max_text_len)
      problems.push_back(tag + "transcription longer than the slot count");
    if (static_cast<int>(a.char_centers.size()) != max_text_len)
      problems.push_back(tag + "center count differs from the slot count");
    if (i < scene.glyphs.size() && scene.glyphs[i].size() != a.transcription.size())
      problems.push_back(tag + "glyph count differs from transcription length");
    for (std::size_t c = 0; c < a.transcription.size() && c < a.char_centers.size(); ++c)
      if (!point_in_polygon(a.char_centers[c], pts)) {
        problems.push_back(tag + "center " + std::to_string(c) + " outside polygon");
        break;
      }
  }
  return problems;
}

}  // namespace hlspot
