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
#include <limits>
#include <numbers>

#include "hlspot/synthmap.hpp"
#include "hlspot/tensor.hpp"

namespace hlspot {

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

int nearest(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<double> cell_mean(const Cell& cell) {
  std::vector<double> m(3, 0.0);
  for (std::size_t i = 0; i < cell.size(); ++i) m[i % 3] += cell[i];
  for (auto& v : m) v /= kCellSize * kCellSize;
  return m;
}

Cell read_cell(const Image& image, int cx, int cy) {
  Cell cell;
  for (int y = 0; y < kCellSize; ++y)
    for (int x = 0; x < kCellSize; ++x) {
      const std::uint8_t* p = image.at(cx * kCellSize + x, cy * kCellSize + y);
      std::copy(p, p + 3, cell.begin() + (y * kCellSize + x) * 3);
    }
  return cell;
}

}  // namespace

std::vector<Cell> extract_background_cells(const Image& image, std::span<const Rect> text_regions,
                                           int buffer) {
  const int gw = image.width / kCellSize, gh = image.height / kCellSize;
  std::vector<char> hit(static_cast<std::size_t>(gw) * gh, 0);
  for (const Rect& r : text_regions) {
    const double x0 = r.x0 - buffer, y0 = r.y0 - buffer, x1 = r.x1 + buffer, y1 = r.y1 + buffer;
    for (int cy = 0; cy < gh; ++cy)
      for (int cx = 0; cx < gw; ++cx) {
        const double cx0 = cx * kCellSize, cy0 = cy * kCellSize;
        if (cx0 < x1 && cx0 + kCellSize > x0 && cy0 < y1 && cy0 + kCellSize > y0)
          hit[static_cast<std::size_t>(cy) * gw + cx] = 1;
      }
  }
  std::vector<Cell> cells;
  for (int cy = 0; cy < gh; ++cy)
    for (int cx = 0; cx < gw; ++cx)
      if (hit[static_cast<std::size_t>(cy) * gw + cx]) cells.push_back(read_cell(image, cx, cy));
  return cells;
}

double kmeans_sse(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& assignments,
                  const std::vector<std::vector<double>>& centroids) {
  double sse = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    sse += squared_distance(points[i], centroids[assignments[i]]);
  return sse;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed) {
  if (k < 1) throw ContractError("kmeans: k must be positive");
  if (static_cast<int>(points.size()) < k)
    throw ContractError("kmeans: " + std::to_string(points.size()) + " points for k = " +
                        std::to_string(k));
  const std::size_t n = points.size(), dim = points[0].size();
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  KMeansResult r;
  r.centroids.push_back(points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(r.centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = squared_distance(points[i], r.centroids[nearest(points[i], r.centroids)]);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      std::discrete_distribution<std::size_t> dist(d2.begin(), d2.end());
      pick = dist(rng);
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    r.centroids.push_back(points[pick]);
  }

  r.assignments.assign(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest(points[i], r.centroids);
      if (c != r.assignments[i]) {
        r.assignments[i] = c;
        changed = true;
      }
    }
    r.sse_history.push_back(kmeans_sse(points, r.assignments, r.centroids));
    r.iterations = iter + 1;
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[r.assignments[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[r.assignments[i]][j] += points[i][j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) r.centroids[c][j] = sums[c][j] / counts[c];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // Reseed an empty cluster at the worst-served point.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = squared_distance(points[i], r.centroids[r.assignments[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      r.centroids[c] = points[far];
      r.assignments[far] = c;
    }
  }
  return r;
}

std::vector<StyleProfile> build_style_profiles(std::span<const StyleSample> samples, int k_styles,
                                               std::uint64_t seed) {
  if (samples.empty()) throw ContractError("build_style_profiles: no sample images");
  std::vector<Cell> cells;
  for (const auto& s : samples) {
    auto c = extract_background_cells(s.image, s.text_regions);
    cells.insert(cells.end(), c.begin(), c.end());
  }
  std::vector<std::vector<double>> means;
  for (const auto& c : cells) means.push_back(cell_mean(c));

  // Stage 1: foreground vs background; the lighter centroid is background.
  std::vector<int> background;
  if (means.size() >= 2) {
    const KMeansResult split = kmeans(means, 2, seed);
    auto brightness = [](const std::vector<double>& c) { return c[0] + c[1] + c[2]; };
    const int bg = brightness(split.centroids[1]) > brightness(split.centroids[0]) ? 1 : 0;
    for (std::size_t i = 0; i < means.size(); ++i)
      if (split.assignments[i] == bg) background.push_back(static_cast<int>(i));
  } else {
    for (std::size_t i = 0; i < means.size(); ++i) background.push_back(static_cast<int>(i));
  }

  // Stage 2: styles among background cells.
  std::vector<std::vector<double>> bg_means;
  for (int i : background) bg_means.push_back(means[i]);
  const KMeansResult styles = kmeans(bg_means, k_styles, seed + 1);
  std::vector<StyleProfile> profiles(k_styles);
  for (int s = 0; s < k_styles; ++s) profiles[s].id = s;
  for (std::size_t i = 0; i < background.size(); ++i)
    profiles[styles.assignments[i]].cells.push_back(cells[background[i]]);
  for (std::size_t i = 0; i < background.size(); ++i) {
    auto& p = profiles[styles.assignments[i]];
    for (int c = 0; c < 3; ++c) p.mean[c] += bg_means[i][c] / p.cells.size();
  }
  for (std::size_t i = 0; i < background.size(); ++i) {
    auto& p = profiles[styles.assignments[i]];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        p.covariance[a * 3 + b] +=
            (bg_means[i][a] - p.mean[a]) * (bg_means[i][b] - p.mean[b]) / p.cells.size();
  }
  return profiles;
}

std::vector<StyleSample> procedural_style_samples(std::uint64_t seed, int count) {
  static const std::array<std::array<double, 3>, 4> kPaper = {{
      {236, 226, 200},  // cream
      {218, 230, 206},  // pale green
      {214, 222, 232},  // blue-grey
      {228, 210, 182},  // tan
  }};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> grain(0.0, 3.0);
  std::vector<StyleSample> out;
  for (int s = 0; s < count; ++s) {
    const auto& base = kPaper[s % kPaper.size()];
    StyleSample sample;
    sample.image = Image(128, 128);
    // Low-frequency mottling plus grain.
    double fx[3], fy[3], ph[3];
    for (int w = 0; w < 3; ++w) {
      fx[w] = 0.02 + 0.06 * unit(rng);
      fy[w] = 0.02 + 0.06 * unit(rng);
      ph[w] = 2 * std::numbers::pi * unit(rng);
    }
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) {
        double shade = 0.0;
        for (int w = 0; w < 3; ++w) shade += 2.5 * std::sin(fx[w] * x + fy[w] * y + ph[w]);
        const double g = grain(rng);
        std::uint8_t* p = sample.image.at(x, y);
        for (int c = 0; c < 3; ++c)
          p[c] = static_cast<std::uint8_t>(std::clamp(base[c] + shade + g, 0.0, 255.0));
      }
    // Dark text-like marks inside a few rectangles.
    for (int r = 0; r < 5; ++r) {
      const double x0 = 8 + 90 * unit(rng), y0 = 8 + 100 * unit(rng);
      const Rect rect{x0, y0, x0 + 16 + 14 * unit(rng), y0 + 8 + 4 * unit(rng)};
      for (double x = rect.x0 + 1; x < rect.x1 - 1; x += 3)
        for (double y = rect.y0 + 1; y < rect.y1 - 1; y += 1)
          sample.image.blend(static_cast<int>(x), static_cast<int>(y), {40, 32, 28}, 0.9);
      sample.text_regions.push_back(rect);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace hlspot
