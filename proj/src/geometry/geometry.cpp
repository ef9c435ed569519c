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

#include "hlspot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hlspot/tensor.hpp"

namespace hlspot {

namespace {

// Orientation predicate tolerance; smaller |cross| counts as collinear.
constexpr double kCollinearEps = 1e-12;

inline double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline int orientation(Point o, Point a, Point b) {
  const double c = cross(o, a, b);
  if (c > kCollinearEps) return 1;
  if (c < -kCollinearEps) return -1;
  return 0;
}

inline bool on_segment(Point p, Point a, Point b) {
  return std::min(a.x, b.x) - kCollinearEps <= p.x &&
         p.x <= std::max(a.x, b.x) + kCollinearEps &&
         std::min(a.y, b.y) - kCollinearEps <= p.y &&
         p.y <= std::max(a.y, b.y) + kCollinearEps;
}

bool segments_touch(Point a, Point b, Point c, Point d) {
  const int o1 = orientation(a, b, c), o2 = orientation(a, b, d);
  const int o3 = orientation(c, d, a), o4 = orientation(c, d, b);
  if (o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0) return true;
  if (o1 == 0 && on_segment(c, a, b)) return true;
  if (o2 == 0 && on_segment(d, a, b)) return true;
  if (o3 == 0 && on_segment(a, c, d)) return true;
  if (o4 == 0 && on_segment(b, c, d)) return true;
  return false;
}

// Counter-clockwise copy of a convex ring.
std::vector<Point> ccw(std::span<const Point> ring) {
  std::vector<Point> out(ring.begin(), ring.end());
  if (signed_area(out) < 0) std::reverse(out.begin(), out.end());
  return out;
}

// Sutherland-Hodgman: clip `subject` by the half-plane left of edge a->b.
std::vector<Point> clip_half_plane(const std::vector<Point>& subject, Point a, Point b) {
  std::vector<Point> out;
  const std::size_t n = subject.size();
  if (n == 0) return out;
  out.reserve(n + 2);
  for (std::size_t i = 0; i < n; ++i) {
    const Point cur = subject[i];
    const Point prev = subject[(i + n - 1) % n];
    const double dc = cross(a, b, cur);
    const double dp = cross(a, b, prev);
    const bool cur_in = dc >= -kCollinearEps;
    const bool prev_in = dp >= -kCollinearEps;
    if (cur_in != prev_in) {
      const double t = dp / (dp - dc);
      out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
    }
    if (cur_in) out.push_back(cur);
  }
  return out;
}

}  // namespace

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

BoundaryPolygon::BoundaryPolygon(std::vector<Point> points) : points_(std::move(points)) {
  if (points_.size() < 4 || points_.size() % 2 != 0)
    throw ContractError("boundary polygon needs an even number (>= 4) of points, got " +
                        std::to_string(points_.size()));
  for (const auto& p : points_)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ContractError("boundary polygon has a non-finite coordinate");
}

double signed_area(std::span<const Point> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = ring[i], b = ring[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return twice / 2.0;
}

Box bounding_box(std::span<const Point> ring) {
  Box box{ring[0].x, ring[0].y, ring[0].x, ring[0].y};
  for (const auto& p : ring) {
    box.x0 = std::min(box.x0, p.x);
    box.y0 = std::min(box.y0, p.y);
    box.x1 = std::max(box.x1, p.x);
    box.y1 = std::max(box.y1, p.y);
  }
  return box;
}

bool point_in_polygon(Point p, std::span<const Point> ring) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point a = ring[i], b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

bool is_simple_polygon(std::span<const Point> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  if (std::abs(signed_area(ring)) <= kCollinearEps) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = ring[i], b = ring[(i + 1) % n];
    if (distance(a, b) <= kCollinearEps) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const Point c = ring[j], d = ring[(j + 1) % n];
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges may only meet at the shared vertex: reject folds.
        const Point shared = (j == i + 1) ? b : a;
        const Point other_i = (j == i + 1) ? a : b;
        const Point other_j = (j == i + 1) ? d : c;
        if (orientation(shared, other_i, other_j) == 0) {
          const double dot = (other_i.x - shared.x) * (other_j.x - shared.x) +
                             (other_i.y - shared.y) * (other_j.y - shared.y);
          if (dot > 0) return false;
        }
        continue;
      }
      if (segments_touch(a, b, c, d)) return false;
    }
  }
  return true;
}

double convex_intersection_area(std::span<const Point> a, std::span<const Point> b) {
  if (a.size() < 3 || b.size() < 3) return 0.0;
  std::vector<Point> subject = ccw(a);
  const std::vector<Point> clip = ccw(b);
  for (std::size_t i = 0; i < clip.size() && !subject.empty(); ++i)
    subject = clip_half_plane(subject, clip[i], clip[(i + 1) % clip.size()]);
  return std::abs(signed_area(subject));
}

double intersection_area(std::span<const Point> a, std::span<const Point> b) {
  // Fan triangulations from a[0] and b[0] decompose each ring's winding
  // number into signed triangle indicators; the overlap integral splits
  // into pairwise convex triangle intersections.
  if (a.size() < 3 || b.size() < 3) return 0.0;
  double total = 0.0;
  for (std::size_t i = 1; i + 1 < a.size(); ++i) {
    const Point ta[3] = {a[0], a[i], a[i + 1]};
    const double sa = signed_area(ta);
    if (std::abs(sa) <= kCollinearEps * kCollinearEps) continue;
    const Box ba = bounding_box(ta);
    for (std::size_t j = 1; j + 1 < b.size(); ++j) {
      const Point tb[3] = {b[0], b[j], b[j + 1]};
      const double sb = signed_area(tb);
      if (std::abs(sb) <= kCollinearEps * kCollinearEps) continue;
      const Box bb = bounding_box(tb);
      if (ba.x1 <= bb.x0 || bb.x1 <= ba.x0 || ba.y1 <= bb.y0 || bb.y1 <= ba.y0) continue;
      const double area = convex_intersection_area(ta, tb);
      total += (sa > 0) == (sb > 0) ? area : -area;
    }
  }
  const bool same = (signed_area(a) > 0) == (signed_area(b) > 0);
  return same ? total : -total;
}

double polygon_iou(std::span<const Point> a, std::span<const Point> b) {
  const double area_a = std::abs(signed_area(a));
  const double area_b = std::abs(signed_area(b));
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double inter = std::max(0.0, intersection_area(a, b));
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double polygon_iou(const BoundaryPolygon& a, const BoundaryPolygon& b) {
  return polygon_iou(a.points(), b.points());
}

double rotation_angle(const BoundaryPolygon& polygon) {
  const auto top = polygon.top();
  const Point first = top.front(), last = top.back();
  const double dx = last.x - first.x, dy = last.y - first.y;
  if (std::hypot(dx, dy) == 0.0) return 0.0;
  double deg = std::abs(std::atan2(dy, dx)) * 180.0 / std::numbers::pi;
  if (deg > 90.0) deg = 180.0 - deg;
  return deg;
}

double rotation_angle(const TextInstance& instance) {
  return rotation_angle(instance.polygon);
}

std::vector<Point> centerline(const BoundaryPolygon& polygon) {
  const auto pts = polygon.points();
  const std::size_t n = pts.size();
  std::vector<Point> line(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) line[k] = midpoint(pts[k], pts[n - 1 - k]);
  return line;
}

Point centerline_tail(const BoundaryPolygon& polygon) {
  const auto pts = polygon.points();
  return midpoint(pts[pts.size() / 2 - 1], pts[pts.size() / 2]);
}

std::vector<Point> char_center_targets(const TextInstance& instance, int max_len) {
  const int c = static_cast<int>(instance.transcription.size());
  if (c > max_len)
    throw ContractError("word '" + instance.transcription + "' has " + std::to_string(c) +
                        " characters, more than the " + std::to_string(max_len) + " slots");
  const Point tail = centerline_tail(instance.polygon);
  std::vector<Point> targets(max_len, tail);
  if (instance.centers_available) {
    const int known = std::min<int>(c, static_cast<int>(instance.char_centers.size()));
    for (int i = 0; i < known; ++i) targets[i] = instance.char_centers[i];
  }
  return targets;
}

double polyline_length(std::span<const Point> line) {
  double total = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) total += distance(line[i - 1], line[i]);
  return total;
}

std::vector<Point> resample_polyline(std::span<const Point> line, int count) {
  std::vector<Point> out;
  if (line.empty() || count <= 0) return out;
  if (count == 1 || line.size() == 1) return std::vector<Point>(count, line.front());
  const double total = polyline_length(line);
  std::size_t seg = 1;
  double walked = 0.0;
  for (int i = 0; i < count; ++i) {
    const double target = total * i / (count - 1);
    while (seg + 1 < line.size() && walked + distance(line[seg - 1], line[seg]) < target) {
      walked += distance(line[seg - 1], line[seg]);
      ++seg;
    }
    const double len = distance(line[seg - 1], line[seg]);
    const double t = len > 0 ? std::clamp((target - walked) / len, 0.0, 1.0) : 0.0;
    out.push_back({line[seg - 1].x + t * (line[seg].x - line[seg - 1].x),
                   line[seg - 1].y + t * (line[seg].y - line[seg - 1].y)});
  }
  out.back() = line.back();
  return out;
}

}  // namespace hlspot
