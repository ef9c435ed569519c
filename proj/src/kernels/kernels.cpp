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

#include "hlspot/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hlspot::kernels {

namespace {

int g_threads = 1;

// Below this many multiply-adds a kernel stays on the calling thread.
constexpr std::int64_t kParallelWork = 1 << 15;

struct Corners {
  std::int64_t index[4];
  double weight[4];
  double dweight_dx[4];
  double dweight_dy[4];
  bool valid[4];
};

// Bilinear corners of a normalized location on one level, zero padded.
inline Corners bilinear_corners(const LevelShape& level, double lx, double ly) {
  const double width = static_cast<double>(level.width);
  const double height = static_cast<double>(level.height);
  const double px = std::clamp(lx * width - 0.5, -2.0, width + 1.0);
  const double py = std::clamp(ly * height - 0.5, -2.0, height + 1.0);
  const double x0f = std::floor(px);
  const double y0f = std::floor(py);
  const double fx = px - x0f;
  const double fy = py - y0f;
  const auto x0 = static_cast<std::int64_t>(x0f);
  const auto y0 = static_cast<std::int64_t>(y0f);

  Corners c{};
  const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
  c.weight[0] = (1.0 - fx) * (1.0 - fy);
  c.weight[1] = fx * (1.0 - fy);
  c.weight[2] = (1.0 - fx) * fy;
  c.weight[3] = fx * fy;
  c.dweight_dx[0] = -(1.0 - fy) * width;
  c.dweight_dx[1] = (1.0 - fy) * width;
  c.dweight_dx[2] = -fy * width;
  c.dweight_dx[3] = fy * width;
  c.dweight_dy[0] = -(1.0 - fx) * height;
  c.dweight_dy[1] = -fx * height;
  c.dweight_dy[2] = (1.0 - fx) * height;
  c.dweight_dy[3] = fx * height;
  for (int i = 0; i < 4; ++i) {
    c.valid[i] = xs[i] >= 0 && xs[i] < level.width && ys[i] >= 0 &&
                 ys[i] < level.height;
    c.index[i] = level.start + ys[i] * level.width + xs[i];
  }
  return c;
}

inline std::int64_t level_count(const DeformDims& d) {
  return static_cast<std::int64_t>(d.levels.size());
}

// Forward for one (query, head) pair.
inline void deform_forward_one(const DeformDims& d, const double* value,
                               const double* loc, const double* attn,
                               double* out, std::int64_t q, std::int64_t h) {
  const std::int64_t nl = level_count(d);
  const std::int64_t dh = d.head_dim;
  double* o = out + (q * d.heads + h) * dh;
  std::fill(o, o + dh, 0.0);
  for (std::int64_t l = 0; l < nl; ++l) {
    for (std::int64_t k = 0; k < d.points; ++k) {
      const std::int64_t s = ((q * d.heads + h) * nl + l) * d.points + k;
      const double a = attn[s];
      const Corners c = bilinear_corners(d.levels[l], loc[2 * s], loc[2 * s + 1]);
      for (int i = 0; i < 4; ++i) {
        if (!c.valid[i]) continue;
        const double coef = a * c.weight[i];
        const double* v = value + (c.index[i] * d.heads + h) * dh;
        for (std::int64_t ch = 0; ch < dh; ++ch) o[ch] += coef * v[ch];
      }
    }
  }
}

// Location and attention-weight gradients for one (query, head) pair.
inline void deform_backward_point_grads(const DeformDims& d,
                                        const double* value, const double* loc,
                                        const double* attn,
                                        const double* grad_out,
                                        double* grad_loc, double* grad_attn,
                                        std::int64_t q, std::int64_t h) {
  const std::int64_t nl = level_count(d);
  const std::int64_t dh = d.head_dim;
  const double* go = grad_out + (q * d.heads + h) * dh;
  for (std::int64_t l = 0; l < nl; ++l) {
    for (std::int64_t k = 0; k < d.points; ++k) {
      const std::int64_t s = ((q * d.heads + h) * nl + l) * d.points + k;
      const double a = attn[s];
      const Corners c = bilinear_corners(d.levels[l], loc[2 * s], loc[2 * s + 1]);
      double ga = 0.0, gx = 0.0, gy = 0.0;
      for (int i = 0; i < 4; ++i) {
        if (!c.valid[i]) continue;
        const double* v = value + (c.index[i] * d.heads + h) * dh;
        double dot = 0.0;
        for (std::int64_t ch = 0; ch < dh; ++ch) dot += go[ch] * v[ch];
        ga += c.weight[i] * dot;
        gx += c.dweight_dx[i] * dot;
        gy += c.dweight_dy[i] * dot;
      }
      if (grad_attn) grad_attn[s] += ga;
      if (grad_loc) {
        grad_loc[2 * s] += a * gx;
        grad_loc[2 * s + 1] += a * gy;
      }
    }
  }
}

// Value gradient contributions of one (query, head) pair.
inline void deform_backward_value(const DeformDims& d, const double* loc,
                                  const double* attn, const double* grad_out,
                                  double* grad_value, std::int64_t q,
                                  std::int64_t h) {
  const std::int64_t nl = level_count(d);
  const std::int64_t dh = d.head_dim;
  const double* go = grad_out + (q * d.heads + h) * dh;
  for (std::int64_t l = 0; l < nl; ++l) {
    for (std::int64_t k = 0; k < d.points; ++k) {
      const std::int64_t s = ((q * d.heads + h) * nl + l) * d.points + k;
      const double a = attn[s];
      const Corners c = bilinear_corners(d.levels[l], loc[2 * s], loc[2 * s + 1]);
      for (int i = 0; i < 4; ++i) {
        if (!c.valid[i]) continue;
        const double coef = a * c.weight[i];
        double* gv = grad_value + (c.index[i] * d.heads + h) * dh;
        for (std::int64_t ch = 0; ch < dh; ++ch) gv[ch] += coef * go[ch];
      }
    }
  }
}

inline std::int64_t deform_work(const DeformDims& d) {
  return d.queries * d.heads * level_count(d) * d.points * 4 * d.head_dim;
}

}  // namespace

void set_num_threads(int n) { g_threads = std::max(1, n); }

int num_threads() { return g_threads; }

int threads_from_env() {
  if (const char* env = std::getenv("HLSPOT_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) set_num_threads(n);
    } catch (...) {
    }
  }
  return g_threads;
}

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

void deform_sample_forward(const DeformDims& dims,
                           std::span<const double> value,
                           std::span<const double> loc,
                           std::span<const double> attn,
                           std::span<double> out) {
  for (std::int64_t q = 0; q < dims.queries; ++q)
    for (std::int64_t h = 0; h < dims.heads; ++h)
      deform_forward_one(dims, value.data(), loc.data(), attn.data(),
                         out.data(), q, h);
}

void deform_sample_backward(const DeformDims& dims,
                            std::span<const double> value,
                            std::span<const double> loc,
                            std::span<const double> attn,
                            std::span<const double> grad_out,
                            std::span<double> grad_value,
                            std::span<double> grad_loc,
                            std::span<double> grad_attn) {
  double* gl = grad_loc.empty() ? nullptr : grad_loc.data();
  double* ga = grad_attn.empty() ? nullptr : grad_attn.data();
  for (std::int64_t q = 0; q < dims.queries; ++q) {
    for (std::int64_t h = 0; h < dims.heads; ++h) {
      if (gl || ga)
        deform_backward_point_grads(dims, value.data(), loc.data(),
                                    attn.data(), grad_out.data(), gl, ga, q, h);
      if (!grad_value.empty())
        deform_backward_value(dims, loc.data(), attn.data(), grad_out.data(),
                              grad_value.data(), q, h);
    }
  }
}

}  // namespace serial

void gemm_nn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate) {
  if (g_threads <= 1 || m * k * n < kParallelWork || m < 2) {
    serial::gemm_nn(a, b, c, m, k, n, accumulate);
    return;
  }
#pragma omp parallel for schedule(static) num_threads(g_threads)
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n) {
  if (g_threads <= 1 || m * k * n < kParallelWork || m < 2) {
    serial::gemm_tn(a, b, c, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static) num_threads(g_threads)
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n) {
  if (g_threads <= 1 || m * k * n < kParallelWork || m < 2) {
    serial::gemm_nt(a, b, c, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static) num_threads(g_threads)
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

void deform_sample_forward(const DeformDims& dims,
                           std::span<const double> value,
                           std::span<const double> loc,
                           std::span<const double> attn,
                           std::span<double> out) {
  if (g_threads <= 1 || deform_work(dims) < kParallelWork) {
    serial::deform_sample_forward(dims, value, loc, attn, out);
    return;
  }
  const std::int64_t pairs = dims.queries * dims.heads;
#pragma omp parallel for schedule(static) num_threads(g_threads)
  for (std::int64_t i = 0; i < pairs; ++i)
    deform_forward_one(dims, value.data(), loc.data(), attn.data(), out.data(),
                       i / dims.heads, i % dims.heads);
}

void deform_sample_backward(const DeformDims& dims,
                            std::span<const double> value,
                            std::span<const double> loc,
                            std::span<const double> attn,
                            std::span<const double> grad_out,
                            std::span<double> grad_value,
                            std::span<double> grad_loc,
                            std::span<double> grad_attn) {
  if (g_threads <= 1 || deform_work(dims) < kParallelWork) {
    serial::deform_sample_backward(dims, value, loc, attn, grad_out,
                                   grad_value, grad_loc, grad_attn);
    return;
  }
  double* gl = grad_loc.empty() ? nullptr : grad_loc.data();
  double* ga = grad_attn.empty() ? nullptr : grad_attn.data();
  const std::int64_t pairs = dims.queries * dims.heads;
  if (gl || ga) {
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (std::int64_t i = 0; i < pairs; ++i)
      deform_backward_point_grads(dims, value.data(), loc.data(), attn.data(),
                                  grad_out.data(), gl, ga, i / dims.heads,
                                  i % dims.heads);
  }
  if (!grad_value.empty()) {
    // Heads own disjoint channel slices of the value gradient; within a head
    // the query order matches the serial scatter.
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (std::int64_t h = 0; h < dims.heads; ++h)
      for (std::int64_t q = 0; q < dims.queries; ++q)
        deform_backward_value(dims, loc.data(), attn.data(), grad_out.data(),
                              grad_value.data(), q, h);
  }
}

void im2col(const double* image, std::int64_t channels, std::int64_t height,
            std::int64_t width, std::int64_t kernel, std::int64_t stride,
            std::int64_t pad, double* cols) {
  const std::int64_t out_h = (height + 2 * pad - kernel) / stride + 1;
  const std::int64_t out_w = (width + 2 * pad - kernel) / stride + 1;
  const std::int64_t rows = channels * kernel * kernel;
#pragma omp parallel for schedule(static) num_threads(g_threads) if (g_threads > 1 && rows * out_h * out_w >= kParallelWork)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t c = r / (kernel * kernel);
    const std::int64_t ky = (r / kernel) % kernel;
    const std::int64_t kx = r % kernel;
    double* dst = cols + r * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const std::int64_t iy = oy * stride - pad + ky;
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const std::int64_t ix = ox * stride - pad + kx;
        dst[oy * out_w + ox] =
            (iy >= 0 && iy < height && ix >= 0 && ix < width)
                ? image[(c * height + iy) * width + ix]
                : 0.0;
      }
    }
  }
}

void col2im(const double* cols, std::int64_t channels, std::int64_t height,
            std::int64_t width, std::int64_t kernel, std::int64_t stride,
            std::int64_t pad, double* image) {
  const std::int64_t out_h = (height + 2 * pad - kernel) / stride + 1;
  const std::int64_t out_w = (width + 2 * pad - kernel) / stride + 1;
  // Channels own disjoint image planes.
#pragma omp parallel for schedule(static) num_threads(g_threads) if (g_threads > 1 && channels * kernel * kernel * out_h * out_w >= kParallelWork)
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t ky = 0; ky < kernel; ++ky) {
      for (std::int64_t kx = 0; kx < kernel; ++kx) {
        const double* src = cols + ((c * kernel + ky) * kernel + kx) * out_h * out_w;
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          for (std::int64_t ox = 0; ox < out_w; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= width) continue;
            image[(c * height + iy) * width + ix] += src[oy * out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace hlspot::kernels
