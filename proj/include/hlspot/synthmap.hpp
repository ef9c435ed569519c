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

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hlspot/geometry.hpp"
#include "hlspot/image.hpp"

namespace hlspot {

enum class FeatureKind { kLine, kPolygon };
enum class FeatureClass { kRoad, kRiver, kRailway, kLake, kArea };

const char* feature_class_name(FeatureClass c);
/// Throws ContractError on unknown names.
FeatureClass parse_feature_class(const std::string& name);

/// A named map feature in scene pixel coordinates.
struct GeoFeature {
  FeatureKind kind = FeatureKind::kLine;
  std::vector<Point> vertices;
  FeatureClass feature_class = FeatureClass::kRoad;
  std::string name;

  /// Lines need >= 2 vertices, polygons >= 3 forming a simple ring.
  bool valid() const;
};

/// Reads the LineString / Polygon subset of GeoJSON (properties `name`,
/// `class`). Throws std::runtime_error with the offending feature index.
std::vector<GeoFeature> read_geojson(const std::string& path);

// ---------------------------------------------------------------------------
// Glyphs and label placement

/// Stroke skeletons for A-Z and 0-9 in a unit box (x right, y down).
class GlyphAtlas {
 public:
  static const GlyphAtlas& standard();
  bool supports(char c) const;
  /// Polylines of `c`; throws ContractError when unsupported.
  const std::vector<std::vector<Point>>& strokes(char c) const;

 private:
  GlyphAtlas();
  std::map<char, std::vector<std::vector<Point>>> glyphs_;
};

struct LabelStyle {
  double font_scale = 14.0;     // glyph box height in pixels
  double letter_spacing = 1.0;  // pixels between consecutive boxes
  double word_spacing = 6.0;    // advance of a space
  double aspect = 0.6;          // glyph box width / height
  double slant = 0.0;           // horizontal shear of strokes
  double stroke_width = 1.6;    // pixels

  double glyph_advance(char c) const;
};

/// One placed character: an oriented box.
struct GlyphBox {
  char c = ' ';
  Point center;
  double angle_deg = 0.0;  // direction of the local tangent
  double width = 0.0, height = 0.0;
  /// top-left, top-right, bottom-right, bottom-left (text frame)
  std::array<Point, 4> corners() const;
};

struct LabelPlacement {
  std::vector<GlyphBox> glyphs;
  TextInstance instance;  // pixel coordinates, centers tail-filled to M
};

/// Places `text` centered along `polyline`, each glyph rotated to the local
/// tangent. nullopt when the polyline is too short or the text exceeds M.
std::optional<LabelPlacement> place_label_on_line(std::span<const Point> polyline,
                                                  const std::string& text,
                                                  const LabelStyle& style, int n_boundary,
                                                  int max_text_len);

/// Places `text` just inside the longest low-curvature run of the polygon
/// boundary, reading left to right.
std::optional<LabelPlacement> place_label_on_polygon(std::span<const Point> polygon,
                                                     const std::string& text,
                                                     const LabelStyle& style, int n_boundary,
                                                     int max_text_len);

// ---------------------------------------------------------------------------
// Background style

struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

inline constexpr int kCellSize = 8;
using Cell = std::array<std::uint8_t, kCellSize * kCellSize * 3>;

struct StyleProfile {
  int id = 0;
  std::vector<Cell> cells;
  std::array<double, 3> mean{};
  std::array<double, 9> covariance{};
};

/// Every 8x8 cell (on the image grid) intersecting a text rectangle grown by
/// `buffer` pixels. Cells are returned in row-major grid order.
std::vector<Cell> extract_background_cells(const Image& image, std::span<const Rect> text_regions,
                                           int buffer = 8);

struct KMeansResult {
  std::vector<int> assignments;
  std::vector<std::vector<double>> centroids;
  std::vector<double> sse_history;  // after each Lloyd iteration
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding; at most 100 iterations.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed);
double kmeans_sse(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& assignments,
                  const std::vector<std::vector<double>>& centroids);

struct StyleSample {
  Image image;
  std::vector<Rect> text_regions;
};

/// Two-stage clustering: k=2 over cell mean colors (lighter cluster is
/// background), then k_styles over background cells.
std::vector<StyleProfile> build_style_profiles(std::span<const StyleSample> samples, int k_styles,
                                               std::uint64_t seed);

/// Procedural stand-ins for scanned map backgrounds: paper-like noise in a
/// few hues with dark text-like marks, plus the rectangles of those marks.
std::vector<StyleSample> procedural_style_samples(std::uint64_t seed, int count = 3);

// ---------------------------------------------------------------------------
// Scenes

struct RenderRule {
  std::array<std::uint8_t, 3> stroke{};
  double width = 2.0;
  std::optional<std::array<std::uint8_t, 3>> fill;
};

/// Class -> stroke color / width / fill.
struct CartographicRules {
  std::map<FeatureClass, RenderRule> rules;
  static CartographicRules defaults();
  /// JSON object {"road": {"stroke": [r,g,b], "width": w, "fill": [r,g,b]}, ...}
  static CartographicRules from_json(const std::string& text);
};

struct SceneOptions {
  int n_boundary = 8;
  int max_text_len = 12;
  double font_min = 11.0, font_max = 15.0;
  double letter_spacing_max = 2.0;
  double slant_max = 0.15;
  /// Labels overlapping an earlier label with IoU above this are dropped.
  double collision_iou = 0.1;
  CartographicRules rules = CartographicRules::defaults();
};

struct MapScene {
  int width = 0, height = 0;
  std::vector<GeoFeature> features;
  StyleProfile style;
  Image raster;
  std::vector<TextInstance> annotations;  // pixel coordinates
  std::vector<std::vector<GlyphBox>> glyphs;  // per annotation
};

MapScene compose_scene(const std::vector<GeoFeature>& features, const StyleProfile& style,
                       std::uint64_t seed, int width, int height,
                       const SceneOptions& options = {});

struct FeatureOptions {
  int min_features = 1, max_features = 3;
  int min_word_len = 3, max_word_len = 6;
  double polygon_fraction = 0.3;
};

/// Random roads / rivers / railways / lakes with names from a built-in
/// gazetteer, scaled to the canvas.
std::vector<GeoFeature> random_features(std::uint64_t seed, int width, int height,
                                        const FeatureOptions& options = {});

struct GeneratorOptions {
  int width = 128, height = 128;
  int k_styles = 3;
  FeatureOptions features;
  SceneOptions scene;
};

/// Scene `index` of the dataset seeded by `seed`; independent of any other
/// index, so scenes can be produced in parallel.
MapScene generate_scene(const GeneratorOptions& options,
                        const std::vector<StyleProfile>& profiles, std::uint64_t seed,
                        int index);

/// Annotation invariant violations (empty when valid): centers inside the
/// polygon, simple polygon, glyph count == transcription length, bounds.
std::vector<std::string> check_scene(const MapScene& scene, int max_text_len);

}  // namespace hlspot
