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

#include "hlspot/verify.hpp"

namespace hlspot::verify {

double naive_bilinear(const double* level, std::int64_t height, std::int64_t width,
                      std::int64_t channels, std::int64_t channel, double x, double y) {
  const double px = x * width - 0.5, py = y * height - 0.5;
  const double fx = std::floor(px), fy = std::floor(py);
  double acc = 0.0;
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const auto ix = static_cast<std::int64_t>(fx) + dx, iy = static_cast<std::int64_t>(fy) + dy;
      if (ix < 0 || iy < 0 || ix >= width || iy >= height) continue;
      const double wx = dx ? px - fx : 1 - (px - fx);
      const double wy = dy ? py - fy : 1 - (py - fy);
      acc += wx * wy * level[(iy * width + ix) * channels + channel];
    }
  return acc;
}

std::vector<double> naive_msdeform_attn(const DeformableAttention& attn, const Tensor& queries,
                                        std::span<const double> refs, const Memory& memory) {
  const std::int64_t T = queries.dim(0), d = queries.dim(1);
  const std::int64_t S = memory.tokens.dim(0), dm = memory.tokens.dim(1);
  const int H = attn.heads, L = attn.levels, K = attn.points;
  const std::int64_t dv = attn.value_proj.weight.dim(1), dh = dv / H;
  const auto q = queries.data(), mem = memory.tokens.data();

  auto dense = [](const Linear& lin, const double* x, std::int64_t in, std::int64_t out_i) {
    double s = lin.bias.defined() ? lin.bias.data()[out_i] : 0.0;
    const std::int64_t out = lin.weight.dim(1);
    for (std::int64_t c = 0; c < in; ++c) s += x[c] * lin.weight.data()[c * out + out_i];
    return s;
  };

  // W'_h x for every token.
  std::vector<double> value(S * dv);
  for (std::int64_t s = 0; s < S; ++s)
    for (std::int64_t j = 0; j < dv; ++j) value[s * dv + j] = dense(attn.value_proj, mem.data() + s * dm, dm, j);

  std::vector<double> out(T * attn.out.weight.dim(1));
  std::vector<double> heads_out(dv);
  for (std::int64_t t = 0; t < T; ++t) {
    const double* qt = q.data() + t * d;
    std::fill(heads_out.begin(), heads_out.end(), 0.0);
    for (int h = 0; h < H; ++h) {
      std::vector<double> logit(L * K);
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < L * K; ++j) {
        logit[j] = dense(attn.weights, qt, d, h * L * K + j);
        mx = std::max(mx, logit[j]);
      }
      double z = 0;
      for (auto& v : logit) z += (v = std::exp(v - mx));
      for (int l = 0; l < L; ++l) {
        const auto& lv = memory.levels[l];
        for (int k = 0; k < K; ++k) {
          const std::int64_t o = ((static_cast<std::int64_t>(h) * L + l) * K + k) * 2;
          const double x = refs[2 * t] + dense(attn.offsets, qt, d, o) / lv.width;
          const double y = refs[2 * t + 1] + dense(attn.offsets, qt, d, o + 1) / lv.height;
          const double a = logit[l * K + k] / z;
          for (std::int64_t c = 0; c < dh; ++c)
            heads_out[h * dh + c] +=
                a * naive_bilinear(value.data() + lv.start * dv, lv.height, lv.width, dv, h * dh + c, x, y);
        }
      }
    }
    const std::int64_t od = attn.out.weight.dim(1);
    for (std::int64_t j = 0; j < od; ++j) out[t * od + j] = dense(attn.out, heads_out.data(), dv, j);
  }
  return out;
}

MatchResult brute_force_assignment(const CostMatrix& cost) {
  const int rows = static_cast<int>(cost.size());
  const int cols = rows ? static_cast<int>(cost[0].size()) : 0;
  std::vector<int> current(rows), best;
  std::vector<bool> used(cols, false);
  double best_cost = std::numeric_limits<double>::infinity();
  // Depth-first in lexicographic order; only strictly better totals replace
  // the incumbent, so the first optimum found is the lexicographic minimum.
  std::function<void(int, double)> rec = [&](int r, double acc) {
    if (r == rows) {
      if (best.empty() || acc < best_cost - 1e-12 * std::max(1.0, std::abs(best_cost))) {
        best_cost = acc;
        best = current;
      }
      return;
    }
    for (int c = 0; c < cols; ++c) {
      if (used[c]) continue;
      used[c] = true;
      current[r] = c;
      rec(r + 1, acc + cost[r][c]);
      used[c] = false;
    }
  };
  rec(0, 0.0);
  MatchResult m;
  std::vector<bool> taken(cols, false);
  m.cost = 0;
  for (int r = 0; r < rows; ++r) {
    m.pairs.emplace_back(r, best[r]);
    taken[best[r]] = true;
    m.cost += cost[r][best[r]];
  }
  for (int c = 0; c < cols; ++c)
    if (!taken[c]) m.unmatched.push_back(c);
  return m;
}

namespace {

bool crossing_inside(double x, double y, std::span<const Point> ring) {
  bool in = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Point a = ring[i], b = ring[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

}  // namespace

double raster_iou(std::span<const Point> a, std::span<const Point> b, int resolution) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  for (auto ring : {a, b})
    for (const auto& p : ring) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
  long inter = 0, uni = 0;
  for (int iy = 0; iy < resolution; ++iy) {
    const double y = y0 + (iy + 0.5) * (y1 - y0) / resolution;
    for (int ix = 0; ix < resolution; ++ix) {
      const double x = x0 + (ix + 0.5) * (x1 - x0) / resolution;
      const bool ia = crossing_inside(x, y, a), ib = crossing_inside(x, y, b);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni ? static_cast<double>(inter) / uni : 0.0;
}

std::vector<Point> random_convex_polygon(std::mt19937_64& rng, int min_vertices,
                                         int max_vertices) {
  std::uniform_int_distribution<int> count(min_vertices, max_vertices);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = count(rng);
  const double cx = 0.3 + 0.4 * u(rng), cy = 0.3 + 0.4 * u(rng);
  const double rx = 0.1 + 0.3 * u(rng), ry = 0.1 + 0.3 * u(rng);
  const double tilt = 2 * std::numbers::pi * u(rng);
  std::vector<double> angles(n);
  for (auto& t : angles) t = 2 * std::numbers::pi * u(rng);
  std::sort(angles.begin(), angles.end());
  std::vector<Point> out;
  for (double t : angles) {
    const double ex = rx * std::cos(t), ey = ry * std::sin(t);
    out.push_back({cx + ex * std::cos(tilt) - ey * std::sin(tilt),
                   cy + ex * std::sin(tilt) + ey * std::cos(tilt)});
  }
  return out;
}

std::vector<double> naive_center_predictor(const SpotterModel::CenterPredictor& p,
                                           std::span<const double> char_q,
                                           std::span<const double> boundary_q,
                                           std::span<const double> pos_m,
                                           std::span<const double> pos_n, int q, int m, int n,
                                           int d, bool raw_attention) {
  auto apply = [](const Linear& lin, const std::vector<double>& x) {
    const auto in = lin.weight.dim(0), out = lin.weight.dim(1);
    std::vector<double> y(out);
    for (std::int64_t j = 0; j < out; ++j) {
      double s = lin.bias.defined() ? lin.bias.data()[j] : 0.0;
      for (std::int64_t c = 0; c < in; ++c) s += x[c] * lin.weight.data()[c * out + j];
      y[j] = s;
    }
    return y;
  };
  std::vector<double> out(static_cast<std::size_t>(q) * m * 2);
  for (int i = 0; i < q; ++i) {
    std::vector<std::vector<double>> keys(n), values(n);
    for (int b = 0; b < n; ++b) {
      std::vector<double> with_pos(d), plain(d);
      for (int c = 0; c < d; ++c) {
        const std::size_t at = (static_cast<std::size_t>(i) * n + b) * d + c;
        with_pos[c] = boundary_q[at] + pos_n[at];
        plain[c] = boundary_q[at];
      }
      keys[b] = apply(p.w_k, with_pos);
      values[b] = apply(p.w_v, plain);
    }
    for (int s = 0; s < m; ++s) {
      std::vector<double> x(d);
      for (int c = 0; c < d; ++c) {
        const std::size_t at = (static_cast<std::size_t>(i) * m + s) * d + c;
        x[c] = char_q[at] + pos_m[at];
      }
      const auto query = apply(p.w_q, x);
      std::vector<double> a(n);
      for (int b = 0; b < n; ++b) {
        double dot = 0;
        for (int c = 0; c < d; ++c) dot += query[c] * keys[b][c];
        a[b] = dot;
      }
      if (!raw_attention) {
        double mx = -std::numeric_limits<double>::infinity(), z = 0;
        for (auto& v : a) mx = std::max(mx, v / std::sqrt(static_cast<double>(d)));
        for (auto& v : a) z += (v = std::exp(v / std::sqrt(static_cast<double>(d)) - mx));
        for (auto& v : a) v /= z;
      }
      std::vector<double> ctx(d, 0.0);
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < d; ++c) ctx[c] += a[b] * values[b][c];
      std::vector<double> h = ctx;
      for (std::size_t l = 0; l < p.mlp.layers.size(); ++l) {
        h = apply(p.mlp.layers[l], h);
        if (l + 1 < p.mlp.layers.size())
          for (auto& v : h) v = std::max(0.0, v);
      }
      for (int k = 0; k < 2; ++k)
        out[(static_cast<std::size_t>(i) * m + s) * 2 + k] = 1.0 / (1.0 + std::exp(-h[k]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double grad_rel_err(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / scale;
}

GradCheck gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                    std::vector<Tensor> inputs, double eps) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(f(inputs));
  GradCheck r;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::vector<double> analytic =
        inputs[i].has_grad() ? std::vector<double>(inputs[i].grad().begin(), inputs[i].grad().end())
                             : std::vector<double>(inputs[i].numel(), 0.0);
    NoGradGuard no_grad;
    auto data = inputs[i].mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + eps;
      const double up = f(inputs).item();
      data[j] = saved - eps;
      const double down = f(inputs).item();
      data[j] = saved;
      const double err = grad_rel_err(analytic[j], (up - down) / (2 * eps));
      if (err > r.max_rel_err) {
        r.max_rel_err = err;
        r.worst = "input " + std::to_string(i) + ", element " + std::to_string(j);
      }
    }
  }
  return r;
}

GradCheck gradcheck_params(const std::function<Tensor()>& loss, TensorMap& params,
                           std::mt19937_64& rng, int directions, int coordinates, double eps) {
  std::vector<std::pair<std::string, Tensor>> list;
  for (auto& [name, t] : params)
    if (t.requires_grad()) {
      t.zero_grad();
      list.emplace_back(name, t);
    }
  backward(loss());
  auto grad_of = [](const Tensor& t, std::size_t j) { return t.has_grad() ? t.grad()[j] : 0.0; };

  GradCheck r;
  NoGradGuard no_grad;
  auto note = [&](double err, const std::string& what) {
    if (err > r.max_rel_err) {
      r.max_rel_err = err;
      r.worst = what;
    }
  };
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < directions; ++k) {
    std::vector<std::vector<double>> dir;
    double norm = 0;
    for (auto& [name, t] : list) {
      auto& v = dir.emplace_back(t.numel());
      for (auto& x : v) {
        x = normal(rng);
        norm += x * x;
      }
    }
    norm = std::sqrt(norm);
    double analytic = 0;
    for (std::size_t p = 0; p < list.size(); ++p)
      for (std::size_t j = 0; j < dir[p].size(); ++j) {
        dir[p][j] /= norm;
        analytic += grad_of(list[p].second, j) * dir[p][j];
      }
    auto shift = [&](double s) {
      for (std::size_t p = 0; p < list.size(); ++p) {
        auto data = list[p].second.mutable_data();
        for (std::size_t j = 0; j < data.size(); ++j) data[j] += s * dir[p][j];
      }
    };
    shift(eps);
    const double up = loss().item();
    shift(-2 * eps);
    const double down = loss().item();
    shift(eps);
    note(grad_rel_err(analytic, (up - down) / (2 * eps)), "direction " + std::to_string(k));
  }
  for (int k = 0; k < coordinates && !list.empty(); ++k) {
    auto& [name, t] = list[std::uniform_int_distribution<std::size_t>(0, list.size() - 1)(rng)];
    const auto j = std::uniform_int_distribution<std::size_t>(0, t.numel() - 1)(rng);
    auto data = t.mutable_data();
    const double saved = data[j];
    data[j] = saved + eps;
    const double up = loss().item();
    data[j] = saved - eps;
    const double down = loss().item();
    data[j] = saved;
    note(grad_rel_err(grad_of(t, j), (up - down) / (2 * eps)), name + "[" + std::to_string(j) + "]");
  }
  return r;
}

}  // namespace hlspot::verify
