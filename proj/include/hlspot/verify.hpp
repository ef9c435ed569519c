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

// Independent reference implementations used to check the library: plain
// loops instead of fused kernels, brute force instead of clever algorithms.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hlspot/geometry.hpp"
#include "hlspot/matching.hpp"
#include "hlspot/model.hpp"

namespace hlspot::verify {

// ---------------------------------------------------------------------------
// Oracles

/// Bilinear read of channel-last level data [H, W, C] at normalized (x, y),
/// pixel centers at (i + 0.5) / W, zero outside.
double naive_bilinear(const double* level, std::int64_t height, std::int64_t width,
                      std::int64_t channels, std::int64_t channel, double x, double y);

/// Multi-scale deformable attention written as nested loops over queries,
/// heads, levels and points, reading the module's weights directly.
/// Returns [T, d] row-major.
std::vector<double> naive_msdeform_attn(const DeformableAttention& attn, const Tensor& queries,
                                        std::span<const double> refs, const Memory& memory);

/// Minimum-cost assignment by enumerating every injective map rows -> cols;
/// the lexicographically smallest optimal assignment wins.
MatchResult brute_force_assignment(const CostMatrix& cost);

/// IoU of two rings estimated by point sampling a res x res grid over their
/// joint bounding box.
double raster_iou(std::span<const Point> a, std::span<const Point> b, int resolution = 512);

/// Random convex polygon: sorted angles on a jittered ellipse.
std::vector<Point> random_convex_polygon(std::mt19937_64& rng, int min_vertices = 3,
                                         int max_vertices = 8);

/// Character-center predictor evaluated with explicit loops.
///   char_q [Q, M, d], boundary_q [Q, N, d], pos_m [Q, M, d], pos_n [Q, N, d]
/// Returns [Q, M, 2].
std::vector<double> naive_center_predictor(const SpotterModel::CenterPredictor& p,
                                           std::span<const double> char_q,
                                           std::span<const double> boundary_q,
                                           std::span<const double> pos_m,
                                           std::span<const double> pos_n, int q, int m, int n,
                                           int d, bool raw_attention);

// ---------------------------------------------------------------------------
// Finite differences

struct GradCheck {
  double max_rel_err = 0.0;
  std::string worst;  // "input i, element j"
};

/// Relative error |a - n| / max(|a|, |n|, kGradFloor); gradients smaller
/// than the floor are effectively compared in absolute terms.
inline constexpr double kGradFloor = 1e-3;
double grad_rel_err(double analytic, double numeric);

/// Central differences on every element of every input of a scalar f.
GradCheck gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                    std::vector<Tensor> inputs, double eps = 1e-6);

/// Directional check of a scalar loss over a parameter set: `directions`
/// random unit directions plus `coordinates` single parameters.
GradCheck gradcheck_params(const std::function<Tensor()>& loss, TensorMap& params,
                           std::mt19937_64& rng, int directions, int coordinates,
                           double eps = 1e-6);

// ---------------------------------------------------------------------------
// Suites (shared by the acceptance binary and `hlspot verify`)

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

inline constexpr double kOpGradTol = 1e-4;
inline constexpr double kModelGradTol = 1e-3;
inline constexpr double kDeformTol = 1e-12;
inline constexpr double kIouTol = 1e-2;

/// Every differentiable op on `seeds` random draws.
SuiteResult op_gradient_suite(int seeds);
/// Whole gradcheck-preset loss on `seeds` random models and scenes.
SuiteResult model_gradient_suite(int seeds);
SuiteResult deform_oracle_suite(int configs);
SuiteResult hungarian_oracle_suite(int n5, int n6);
SuiteResult iou_oracle_suite(int pairs);
SuiteResult center_predictor_suite(int configs);

}  // namespace hlspot::verify
