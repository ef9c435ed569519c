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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "hlspot/dataset.hpp"
#include "hlspot/synthmap.hpp"
#include "hlspot/tensor.hpp"

namespace hlspot {
namespace {

double wrap_deg(double d) {
  while (d > 180) d -= 360;
  while (d <= -180) d += 360;
  return d;
}

std::vector<Point> arc(Point c, double r, double t0, double t1, int segments) {
  std::vector<Point> pts;
  for (int i = 0; i <= segments; ++i) {
    const double t = t0 + (t1 - t0) * i / segments;
    pts.push_back({c.x + r * std::cos(t), c.y + r * std::sin(t)});
  }
  return pts;
}

std::vector<Point> rect(Point c, double w, double h, double deg) {
  const double a = deg * std::numbers::pi / 180;
  std::vector<Point> out;
  for (auto [u, v] : {std::pair{-w / 2, -h / 2}, {w / 2, -h / 2}, {w / 2, h / 2}, {-w / 2, h / 2}})
    out.push_back({c.x + u * std::cos(a) - v * std::sin(a), c.y + u * std::sin(a) + v * std::cos(a)});
  return out;
}

TEST(LabelOnLine, StraightLineEvenSpacing) {
  LabelStyle style;
  std::vector<Point> line{{10, 50}, {200, 50}};
  auto placed = place_label_on_line(line, "RIVER", style, 8, 12);
  ASSERT_TRUE(placed);
  const auto& g = placed->glyphs;
  ASSERT_EQ(g.size(), 5u);
  const double step = style.glyph_advance('R') + style.letter_spacing;
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(g[k].angle_deg, 0.0, 1e-9);
    if (k) {
      EXPECT_NEAR(g[k].center.x - g[k - 1].center.x, step, 1e-9);
    }
  }
  EXPECT_EQ(placed->instance.transcription, "RIVER");
  EXPECT_EQ(placed->instance.polygon.size(), 8u);
  EXPECT_EQ(placed->instance.char_centers.size(), 12u);
}

TEST(LabelOnLine, ReversedLineMirrorsPlacement) {
  LabelStyle style;
  std::vector<Point> line{{10, 40}, {80, 55}, {160, 50}};
  std::vector<Point> rev(line.rbegin(), line.rend());
  auto fwd = place_label_on_line(line, "MILL", style, 8, 12);
  auto bwd = place_label_on_line(rev, "MILL", style, 8, 12);
  ASSERT_TRUE(fwd && bwd);
  // Centered placement: glyph k forward sits where glyph n-1-k sits
  // backward, running the opposite way.
  const std::size_t n = fwd->glyphs.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& a = fwd->glyphs[k];
    const auto& b = bwd->glyphs[n - 1 - k];
    EXPECT_NEAR(a.center.x, b.center.x, 1e-9);
    EXPECT_NEAR(a.center.y, b.center.y, 1e-9);
    EXPECT_NEAR(std::abs(wrap_deg(a.angle_deg - b.angle_deg)), 180.0, 1e-9);
  }
}

TEST(LabelOnLine, QuarterCircleFollowsTangent) {
  LabelStyle style;
  const Point c{100, 100};
  auto line = arc(c, 80, 0, std::numbers::pi / 2, 400);
  auto placed = place_label_on_line(line, "CREEK", style, 8, 12);
  ASSERT_TRUE(placed);
  for (const auto& g : placed->glyphs) {
    const double t = std::atan2(g.center.y - c.y, g.center.x - c.x);
    const double tangent = std::atan2(std::cos(t), -std::sin(t)) * 180 / std::numbers::pi;
    EXPECT_NEAR(wrap_deg(g.angle_deg - tangent), 0.0, 1.0) << g.c;
  }
}

TEST(LabelOnLine, TooShortIsSkipped) {
  LabelStyle style;
  std::vector<Point> line{{0, 0}, {20, 0}};
  EXPECT_FALSE(place_label_on_line(line, "LONGWORD", style, 8, 12));
  EXPECT_FALSE(place_label_on_line(std::vector<Point>{{0, 0}, {500, 0}}, "TOOLONGFORM", style, 8,
                                   6));
}

TEST(LabelOnPolygon, AxisAlignedRectangleUsesTopEdge) {
  LabelStyle style;
  auto poly = rect({100, 100}, 160, 60, 0);
  auto placed = place_label_on_polygon(poly, "LAKE", style, 8, 12);
  ASSERT_TRUE(placed);
  for (const auto& g : placed->glyphs) {
    EXPECT_NEAR(std::abs(wrap_deg(g.angle_deg)), 0.0, 1e-6);
    EXPECT_LT(g.center.y, 100.0);  // upper half of the lake
  }
}

TEST(LabelOnPolygon, RotatedRectangleMatchesRotation) {
  LabelStyle style;
  for (double deg : {12.0, 25.0, -20.0}) {
    auto placed = place_label_on_polygon(rect({120, 120}, 170, 50, deg), "POND", style, 8, 12);
    ASSERT_TRUE(placed) << deg;
    for (const auto& g : placed->glyphs) EXPECT_NEAR(wrap_deg(g.angle_deg), deg, 1.0) << deg;
  }
}

TEST(LabelOnPolygon, TinyPolygonSkipped) {
  LabelStyle style;
  EXPECT_FALSE(place_label_on_polygon(rect({10, 10}, 6, 4, 0), "LAKE", style, 8, 12));
}

TEST(BackgroundCells, BufferedRectangleCount) {
  Image img(64, 64, {200, 200, 200});
  std::vector<Rect> regions{{24, 24, 40, 40}};
  EXPECT_EQ(extract_background_cells(img, regions).size(), 16u);
}

TEST(BackgroundCells, MatchesGridEnumeration) {
  Image img(64, 48);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 60);
  for (int trial = 0; trial < 20; ++trial) {
    Rect r{u(rng), u(rng) * 0.75, 0, 0};
    r.x1 = r.x0 + 1 + u(rng) / 4;
    r.y1 = r.y0 + 1 + u(rng) / 4;
    std::size_t expected = 0;
    for (int cy = 0; cy < 6; ++cy)
      for (int cx = 0; cx < 8; ++cx) {
        // A cell intersects when its open interior meets the grown rectangle.
        bool hx = cx * 8 < r.x1 + 8 && cx * 8 + 8 > r.x0 - 8;
        bool hy = cy * 8 < r.y1 + 8 && cy * 8 + 8 > r.y0 - 8;
        expected += hx && hy;
      }
    EXPECT_EQ(extract_background_cells(img, std::vector<Rect>{r}).size(), expected);
  }
}

TEST(BackgroundCells, NoRegionsAndWholeImage) {
  Image img(64, 32);
  EXPECT_TRUE(extract_background_cells(img, {}).empty());
  std::vector<Rect> all{{0, 0, 64, 32}};
  EXPECT_EQ(extract_background_cells(img, all).size(), 8u * 4u);
}

TEST(KMeans, SeparatedBlobs) {
  std::mt19937_64 rng(32);
  std::normal_distribution<double> n(0, 0.5);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 40; ++i) pts.push_back({10 + n(rng), 10 + n(rng), 200 + n(rng)});
  for (int i = 0; i < 40; ++i) pts.push_back({220 + n(rng), 30 + n(rng), 10 + n(rng)});
  auto r = kmeans(pts, 2, 5);
  for (int i = 1; i < 40; ++i) EXPECT_EQ(r.assignments[i], r.assignments[0]);
  for (int i = 41; i < 80; ++i) EXPECT_EQ(r.assignments[i], r.assignments[40]);
  EXPECT_NE(r.assignments[0], r.assignments[40]);
}

TEST(KMeans, IdenticalPointsSingleCluster) {
  std::vector<std::vector<double>> pts(10, {1.5, -2.0});
  auto r = kmeans(pts, 1, 0);
  EXPECT_EQ(r.centroids[0], (std::vector<double>{1.5, -2.0}));
}

TEST(KMeans, BeatsRandomAssignments) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> pts(50);
  for (auto& p : pts) p = {u(rng), u(rng)};
  auto r = kmeans(pts, 3, 7);
  const double best = kmeans_sse(pts, r.assignments, r.centroids);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> a(pts.size());
    for (auto& x : a) x = pick(rng);
    std::vector<std::vector<double>> c(3, {0, 0});
    std::vector<int> count(3, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      c[a[i]][0] += pts[i][0];
      c[a[i]][1] += pts[i][1];
      ++count[a[i]];
    }
    for (int k = 0; k < 3; ++k)
      if (count[k]) c[k] = {c[k][0] / count[k], c[k][1] / count[k]};
    EXPECT_LE(best, kmeans_sse(pts, a, c) + 1e-12);
  }
}

TEST(KMeans, SseNonIncreasing) {
  std::mt19937_64 rng(34);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> pts(300);
  for (auto& p : pts) p = {n(rng), n(rng), n(rng)};
  auto r = kmeans(pts, 6, 1);
  ASSERT_FALSE(r.sse_history.empty());
  for (std::size_t i = 1; i < r.sse_history.size(); ++i)
    EXPECT_LE(r.sse_history[i], r.sse_history[i - 1] + 1e-9);
}

TEST(KMeans, TooFewPointsIsContractError) {
  std::vector<std::vector<double>> pts(2, {0.0});
  EXPECT_THROW(kmeans(pts, 3, 0), ContractError);
}

// Paper color with dark horizontal strokes; the strokes' rectangles are the
// text regions.
StyleSample stroked_sample(std::array<std::uint8_t, 3> paper, std::uint64_t seed) {
  StyleSample s{Image(96, 96, paper), {}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jitter(-3, 3);
  for (auto& px : s.image.rgb) px = static_cast<std::uint8_t>(std::clamp(px + jitter(rng), 0, 255));
  for (int row : {20, 52, 80}) {
    for (int y = row; y < row + 4; ++y)
      for (int x = 16; x < 72; ++x) {
        auto* p = s.image.at(x, y);
        p[0] = p[1] = p[2] = 30;
      }
    s.text_regions.push_back({16, static_cast<double>(row), 72, static_cast<double>(row + 4)});
  }
  return s;
}

TEST(StyleProfiles, CreamBackgroundRecovered) {
  const std::array<std::uint8_t, 3> cream{238, 228, 196};
  std::vector<StyleSample> samples{stroked_sample(cream, 1)};
  auto profiles = build_style_profiles(samples, 1, 3);
  ASSERT_EQ(profiles.size(), 1u);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(profiles[0].mean[c], cream[c], 20.0);
}

TEST(StyleProfiles, SingleStyleHoldsAllBackgroundCells) {
  std::vector<StyleSample> samples{stroked_sample({238, 228, 196}, 2),
                                   stroked_sample({200, 220, 235}, 3)};
  auto one = build_style_profiles(samples, 1, 3);
  auto two = build_style_profiles(samples, 2, 3);
  ASSERT_EQ(one.size(), 1u);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(one[0].cells.size(), two[0].cells.size() + two[1].cells.size());
}

TEST(StyleProfiles, DistinctHuesSeparate) {
  std::vector<StyleSample> samples{stroked_sample({238, 228, 196}, 4),
                                   stroked_sample({190, 215, 240}, 5)};
  auto profiles = build_style_profiles(samples, 2, 9);
  ASSERT_EQ(profiles.size(), 2u);
  // One profile is warm (red > blue), the other cool, and no cell mixes in.
  auto warm = [](const Cell& c) {
    double r = 0, b = 0;
    for (std::size_t i = 0; i < c.size(); i += 3) r += c[i], b += c[i + 2];
    return r > b;
  };
  for (const auto& p : profiles) {
    ASSERT_FALSE(p.cells.empty());
    const bool w = warm(p.cells[0]);
    for (const auto& c : p.cells) EXPECT_EQ(warm(c), w);
  }
  EXPECT_NE(warm(profiles[0].cells[0]), warm(profiles[1].cells[0]));
}

class SceneTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto samples = procedural_style_samples(11);
    profiles_ = new std::vector<StyleProfile>(build_style_profiles(samples, 3, 11));
  }
  static void TearDownTestSuite() { delete profiles_; }
  static std::vector<StyleProfile>* profiles_;
};
std::vector<StyleProfile>* SceneTest::profiles_ = nullptr;

TEST_F(SceneTest, NoFeaturesIsPureBackground) {
  const auto& style = (*profiles_)[0];
  auto scene = compose_scene({}, style, 4, 64, 64);
  EXPECT_TRUE(scene.annotations.empty());
  std::set<Cell> known(style.cells.begin(), style.cells.end());
  std::vector<Rect> all{{0, 0, 64, 64}};
  for (const auto& c : extract_background_cells(scene.raster, all, 0)) EXPECT_TRUE(known.count(c));
}

TEST_F(SceneTest, SameSeedIsByteIdentical) {
  GeneratorOptions opt;
  auto a = generate_scene(opt, *profiles_, 99, 3);
  auto b = generate_scene(opt, *profiles_, 99, 3);
  EXPECT_EQ(a.raster.rgb, b.raster.rgb);
  ASSERT_EQ(a.annotations.size(), b.annotations.size());
  for (std::size_t i = 0; i < a.annotations.size(); ++i)
    EXPECT_EQ(instance_to_json(a.annotations[i]), instance_to_json(b.annotations[i]));
  auto c = generate_scene(opt, *profiles_, 100, 3);
  EXPECT_NE(a.raster.rgb, c.raster.rgb);
}

TEST_F(SceneTest, FiveFeatureScenesAreValid) {
  FeatureOptions fo;
  fo.min_features = fo.max_features = 5;
  int labelled = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto features = random_features(seed, 256, 256, fo);
    ASSERT_EQ(features.size(), 5u);
    auto scene = compose_scene(features, (*profiles_)[seed % profiles_->size()], seed, 256, 256);
    EXPECT_TRUE(check_scene(scene, 12).empty()) << check_scene(scene, 12)[0];
    labelled += static_cast<int>(scene.annotations.size());
    for (std::size_t i = 0; i < scene.annotations.size(); ++i) {
      const auto& a = scene.annotations[i];
      EXPECT_EQ(scene.glyphs[i].size(), a.transcription.size());
      for (std::size_t k = 0; k < a.transcription.size(); ++k)
        EXPECT_TRUE(point_in_polygon(a.char_centers[k], a.polygon.points()));
    }
  }
  EXPECT_GT(labelled, 40);
}

TEST_F(SceneTest, CheckerFlagsBrokenAnnotations) {
  auto scene = generate_scene(GeneratorOptions{}, *profiles_, 5, 0);
  ASSERT_FALSE(scene.annotations.empty());
  auto broken = scene;
  broken.annotations[0].char_centers[0] = {-50, -50};
  EXPECT_FALSE(check_scene(broken, 12).empty());
  broken = scene;
  broken.annotations[0].transcription += "X";
  EXPECT_FALSE(check_scene(broken, 12).empty());
}

TEST(Features, ReadGeojsonSubset) {
  const auto path = std::filesystem::temp_directory_path() / "hlspot_features.geojson";
  std::ofstream(path) << R"({"type": "FeatureCollection", "features": [
    {"type": "Feature", "properties": {"name": "MAIN", "class": "road"},
     "geometry": {"type": "LineString", "coordinates": [[0, 0], [50, 10]]}},
    {"type": "Feature", "properties": {"name": "LAKE", "class": "lake"},
     "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [9, 0], [9, 9], [0, 9], [0, 0]]]}}]})";
  auto f = read_geojson(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].kind, FeatureKind::kLine);
  EXPECT_EQ(f[0].name, "MAIN");
  EXPECT_EQ(f[1].kind, FeatureKind::kPolygon);
  EXPECT_EQ(f[1].feature_class, FeatureClass::kLake);
  EXPECT_EQ(f[1].vertices.size(), 4u);  // closing vertex dropped
  EXPECT_TRUE(f[1].valid());
}

TEST(Glyphs, EverySupportedCharacterHasStrokes) {
  const auto& atlas = GlyphAtlas::standard();
  for (char c = 'A'; c <= 'Z'; ++c) EXPECT_FALSE(atlas.strokes(c).empty()) << c;
  for (char c = '0'; c <= '9'; ++c) EXPECT_FALSE(atlas.strokes(c).empty()) << c;
  EXPECT_FALSE(atlas.supports('a'));
}

}  // namespace
}  // namespace hlspot
