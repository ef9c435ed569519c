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

#include <span>
#include <string>
#include <vector>

namespace hlspot {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline Point midpoint(Point a, Point b) { return {(a.x + b.x) / 2, (a.y + b.y) / 2}; }
double distance(Point a, Point b);

/// Axis-aligned rectangle, min/max corners.
struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

/// Word outline: N/2 points along the top curve (left to right) followed by
/// N/2 points along the bottom curve (right to left).
class BoundaryPolygon {
 public:
  BoundaryPolygon() = default;
  /// Throws ContractError unless N is even, N >= 4 and all values are finite.
  explicit BoundaryPolygon(std::vector<Point> points);

  std::span<const Point> points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  std::span<const Point> top() const { return std::span(points_).first(points_.size() / 2); }
  std::span<const Point> bottom() const { return std::span(points_).subspan(points_.size() / 2); }

 private:
  std::vector<Point> points_;
};

/// Ground-truth or predicted word.
struct TextInstance {
  BoundaryPolygon polygon;
  std::string transcription;
  std::vector<Point> char_centers;
  bool centers_available = false;
  bool dont_care = false;
};

/// Shoelace area; positive for counter-clockwise rings in a y-up frame.
double signed_area(std::span<const Point> ring);
Box bounding_box(std::span<const Point> ring);
/// Even-odd rule; points on the boundary may land on either side.
bool point_in_polygon(Point p, std::span<const Point> ring);
/// True when no two non-adjacent edges touch and adjacent edges only share
/// their common vertex.
bool is_simple_polygon(std::span<const Point> ring);

/// Area of the intersection of two convex polygons (any orientation).
double convex_intersection_area(std::span<const Point> a, std::span<const Point> b);
/// Exact intersection area of two closed rings, weighting by winding number
/// (the true overlap area for simple polygons).
double intersection_area(std::span<const Point> a, std::span<const Point> b);

/// area(a & b) / area(a | b); 0 when either ring is degenerate.
double polygon_iou(std::span<const Point> a, std::span<const Point> b);
double polygon_iou(const BoundaryPolygon& a, const BoundaryPolygon& b);

/// Angle of the first-to-last top-curve chord against the x axis, folded
/// into [0, 90] degrees. Zero-length chords give 0.
double rotation_angle(const BoundaryPolygon& polygon);
double rotation_angle(const TextInstance& instance);

/// N/2 midpoints between top point k and its opposite bottom point.
std::vector<Point> centerline(const BoundaryPolygon& polygon);
/// Midpoint of the last top-curve point and the first bottom-curve point.
Point centerline_tail(const BoundaryPolygon& polygon);

/// M center targets: the first |transcription| entries are the annotated
/// centers (the tail point when centers are unavailable), the rest are the
/// centerline tail. Throws ContractError when the word is longer than M.
std::vector<Point> char_center_targets(const TextInstance& instance, int max_len);

/// Resamples a polyline to `count` points evenly spaced by arc length.
std::vector<Point> resample_polyline(std::span<const Point> line, int count);
double polyline_length(std::span<const Point> line);

}  // namespace hlspot
