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
#include <numbers>
#include <sstream>

#include "hlspot/synthmap.hpp"
#include "hlspot/tensor.hpp"

namespace hlspot {

namespace {

// Skeletons on a 4 x 6 grid (x right, y down); strokes separated by '|'.
const std::pair<char, const char*> kGlyphSource[] = {
    {'A', "0 6 2 0 4 6|1 4 3 4"},
    {'B', "0 6 0 0 3 0 4 1 4 2 3 3 0 3|3 3 4 4 4 5 3 6 0 6"},
    {'C', "4 1 3 0 1 0 0 1 0 5 1 6 3 6 4 5"},
    {'D', "0 0 0 6 3 6 4 5 4 1 3 0 0 0"},
    {'E', "4 0 0 0 0 6 4 6|0 3 3 3"},
    {'F', "4 0 0 0 0 6|0 3 3 3"},
    {'G', "4 1 3 0 1 0 0 1 0 5 1 6 3 6 4 5 4 3 2 3"},
    {'H', "0 0 0 6|4 0 4 6|0 3 4 3"},
    {'I', "1 0 3 0|2 0 2 6|1 6 3 6"},
    {'J', "4 0 4 5 3 6 1 6 0 5"},
    {'K', "0 0 0 6|4 0 0 4|1 3 4 6"},
    {'L', "0 0 0 6 4 6"},
    {'M', "0 6 0 0 2 3 4 0 4 6"},
    {'N', "0 6 0 0 4 6 4 0"},
    {'O', "1 0 3 0 4 1 4 5 3 6 1 6 0 5 0 1 1 0"},
    {'P', "0 6 0 0 3 0 4 1 4 2 3 3 0 3"},
    {'Q', "1 0 3 0 4 1 4 5 3 6 1 6 0 5 0 1 1 0|2 4 4 6"},
    {'R', "0 6 0 0 3 0 4 1 4 2 3 3 0 3|2 3 4 6"},
    {'S', "4 1 3 0 1 0 0 1 0 2 1 3 3 3 4 4 4 5 3 6 1 6 0 5"},
    {'T', "0 0 4 0|2 0 2 6"},
    {'U', "0 0 0 5 1 6 3 6 4 5 4 0"},
    {'V', "0 0 2 6 4 0"},
    {'W', "0 0 1 6 2 2 3 6 4 0"},
    {'X', "0 0 4 6|4 0 0 6"},
    {'Y', "0 0 2 3 4 0|2 3 2 6"},
    {'Z', "0 0 4 0 0 6 4 6"},
    {'0', "1 0 3 0 4 1 4 5 3 6 1 6 0 5 0 1 1 0|3 1 1 5"},
    {'1', "1 1 2 0 2 6|1 6 3 6"},
    {'2', "0 1 1 0 3 0 4 1 4 2 0 6 4 6"},
    {'3', "0 1 1 0 3 0 4 1 4 2 3 3 1 3|3 3 4 4 4 5 3 6 1 6 0 5"},
    {'4', "3 6 3 0 0 4 4 4"},
    {'5', "4 0 0 0 0 3 3 3 4 4 4 5 3 6 0 6"},
    {'6', "3 0 1 0 0 1 0 5 1 6 3 6 4 5 4 4 3 3 0 3"},
    {'7', "0 0 4 0 1 6"},
    {'8', "1 3 0 2 0 1 1 0 3 0 4 1 4 2 3 3 1 3 0 4 0 5 1 6 3 6 4 5 4 4 3 3"},
    {'9', "4 3 1 3 0 2 0 1 1 0 3 0 4 1 4 5 3 6 1 6"},
};

// Arc-length parameterized polyline.
class ArcLength {
 public:
  explicit ArcLength(std::span<const Point> line) : line_(line.begin(), line.end()) {
    cumulative_.push_back(0.0);
    for (std::size_t i = 1; i < line_.size(); ++i)
      cumulative_.push_back(cumulative_.back() + distance(line_[i - 1], line_[i]));
  }
  double length() const { return cumulative_.back(); }
  Point at(double s) const {
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t i = std::min<std::size_t>(it - cumulative_.begin(), line_.size() - 1);
    if (i == 0) i = 1;
    const double len = cumulative_[i] - cumulative_[i - 1];
    const double t = len > 0 ? (s - cumulative_[i - 1]) / len : 0.0;
    return {line_[i - 1].x + t * (line_[i].x - line_[i - 1].x),
            line_[i - 1].y + t * (line_[i].y - line_[i - 1].y)};
  }

 private:
  std::vector<Point> line_;
  std::vector<double> cumulative_;
};

}  // namespace

GlyphAtlas::GlyphAtlas() {
  for (const auto& [c, source] : kGlyphSource) {
    std::vector<std::vector<Point>> strokes;
    std::stringstream all(source);
    std::string part;
    while (std::getline(all, part, '|')) {
      std::stringstream in(part);
      std::vector<Point> stroke;
      double x, y;
      while (in >> x >> y) stroke.push_back({x / 4.0, y / 6.0});
      strokes.push_back(std::move(stroke));
    }
    glyphs_[c] = std::move(strokes);
  }
}

const GlyphAtlas& GlyphAtlas::standard() {
  static const GlyphAtlas atlas;
  return atlas;
}

bool GlyphAtlas::supports(char c) const { return glyphs_.count(c) > 0; }

const std::vector<std::vector<Point>>& GlyphAtlas::strokes(char c) const {
  const auto it = glyphs_.find(c);
  if (it == glyphs_.end()) throw ContractError(std::string("no glyph for '") + c + "'");
  return it->second;
}

double LabelStyle::glyph_advance(char c) const {
  return c == ' ' ? word_spacing : aspect * font_scale;
}

std::array<Point, 4> GlyphBox::corners() const {
  const double a = angle_deg * std::numbers::pi / 180.0;
  const Point t{std::cos(a), std::sin(a)};
  const Point down{-t.y, t.x};
  auto corner = [&](double sx, double sy) {
    return Point{center.x + t.x * sx * width / 2 + down.x * sy * height / 2,
                 center.y + t.y * sx * width / 2 + down.y * sy * height / 2};
  };
  return {corner(-1, -1), corner(1, -1), corner(1, 1), corner(-1, 1)};
}

std::optional<LabelPlacement> place_label_on_line(std::span<const Point> polyline,
                                                  const std::string& text,
                                                  const LabelStyle& style, int n_boundary,
                                                  int max_text_len) {
  if (text.empty() || static_cast<int>(text.size()) > max_text_len || polyline.size() < 2)
    return std::nullopt;
  const auto& atlas = GlyphAtlas::standard();
  for (char c : text)
    if (c != ' ' && !atlas.supports(c)) return std::nullopt;

  const ArcLength arc(polyline);
  double required = style.letter_spacing * static_cast<double>(text.size() - 1);
  for (char c : text) required += style.glyph_advance(c);
  if (required > arc.length() || required <= 0) return std::nullopt;

  LabelPlacement placement;
  double s = (arc.length() - required) / 2.0;
  for (char c : text) {
    const double adv = style.glyph_advance(c);
    const double mid = s + adv / 2.0;
    // The chord across the glyph's extent; on a circle it is exactly
    // parallel to the tangent at the glyph center.
    const Point a = arc.at(mid - adv / 2.0), b = arc.at(mid + adv / 2.0);
    GlyphBox box;
    box.c = c;
    box.center = arc.at(mid);
    box.angle_deg = std::atan2(b.y - a.y, b.x - a.x) * 180.0 / std::numbers::pi;
    box.width = adv;
    box.height = style.font_scale;
    placement.glyphs.push_back(box);
    s += adv + style.letter_spacing;
  }

  std::vector<Point> top, bottom;
  for (const auto& g : placement.glyphs) {
    const auto k = g.corners();
    top.push_back(k[0]);
    top.push_back(k[1]);
  }
  for (auto it = placement.glyphs.rbegin(); it != placement.glyphs.rend(); ++it) {
    const auto k = it->corners();
    bottom.push_back(k[2]);
    bottom.push_back(k[3]);
  }
  auto ring = resample_polyline(top, n_boundary / 2);
  const auto lower = resample_polyline(bottom, n_boundary / 2);
  ring.insert(ring.end(), lower.begin(), lower.end());

  TextInstance& inst = placement.instance;
  inst.polygon = BoundaryPolygon(std::move(ring));
  inst.transcription = text;
  for (const auto& g : placement.glyphs) inst.char_centers.push_back(g.center);
  inst.centers_available = true;
  inst.char_centers = char_center_targets(inst, max_text_len);
  return placement;
}

std::optional<LabelPlacement> place_label_on_polygon(std::span<const Point> polygon,
                                                     const std::string& text,
                                                     const LabelStyle& style, int n_boundary,
                                                     int max_text_len) {
  const std::size_t n = polygon.size();
  if (n < 3) return std::nullopt;
  constexpr double kMaxTurnDeg = 45.0;

  // Turning angle at vertex i (between edge i-1 and edge i).
  std::vector<double> turn(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = polygon[(i + n - 1) % n], b = polygon[i], c = polygon[(i + 1) % n];
    const double h1 = std::atan2(b.y - a.y, b.x - a.x), h2 = std::atan2(c.y - b.y, c.x - b.x);
    double d = std::abs(h2 - h1) * 180.0 / std::numbers::pi;
    if (d > 180.0) d = 360.0 - d;
    turn[i] = d;
  }

  // Longest window of consecutive edges whose total turning stays small.
  std::vector<Point> best;
  double best_len = 0.0, best_y = 0.0;
  for (std::size_t start = 0; start < n; ++start) {
    std::vector<Point> run{polygon[start]};
    double turned = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      const std::size_t to = (start + e + 1) % n;
      if (e > 0) {
        turned += turn[(start + e) % n];
        if (turned > kMaxTurnDeg) break;
      }
      run.push_back(polygon[to]);
      const double len = polyline_length(run);
      double mean_y = 0.0;
      for (const auto& p : run) mean_y += p.y;
      mean_y /= static_cast<double>(run.size());
      if (len > best_len + 1e-9 || (std::abs(len - best_len) <= 1e-9 && mean_y < best_y - 1e-9)) {
        best = run;
        best_len = len;
        best_y = mean_y;
      }
    }
  }
  if (best.size() < 2) return std::nullopt;
  if (best.back().x < best.front().x) std::reverse(best.begin(), best.end());

  // Shift the run inwards by half a glyph plus a small gap.
  const double shift = style.font_scale / 2.0 + 1.0;
  auto normal_at = [&](std::size_t i) {
    Point acc{0, 0};
    for (std::size_t s : {i == 0 ? 0 : i - 1, std::min(i, best.size() - 2)}) {
      const double dx = best[s + 1].x - best[s].x, dy = best[s + 1].y - best[s].y;
      const double len = std::hypot(dx, dy);
      if (len > 0) {
        acc.x += -dy / len;
        acc.y += dx / len;
      }
    }
    const double len = std::hypot(acc.x, acc.y);
    return len > 0 ? Point{acc.x / len, acc.y / len} : Point{0, 0};
  };
  const Point n0 = normal_at(0);
  const Point probe{(best[0].x + best[1].x) / 2 + n0.x * 1e-3 * (1 + best_len),
                    (best[0].y + best[1].y) / 2 + n0.y * 1e-3 * (1 + best_len)};
  const double sign = point_in_polygon(probe, polygon) ? 1.0 : -1.0;
  std::vector<Point> inner;
  for (std::size_t i = 0; i < best.size(); ++i) {
    const Point nv = normal_at(i);
    inner.push_back({best[i].x + sign * shift * nv.x, best[i].y + sign * shift * nv.y});
  }
  return place_label_on_line(inner, text, style, n_boundary, max_text_len);
}

}  // namespace hlspot
