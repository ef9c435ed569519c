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

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hlspot/kernels.hpp"

namespace hlspot {

/// Operand shapes do not satisfy an op's shape rule.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation precondition (non-scalar loss, c > M, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl;

// One recorded operation. The backward rule receives the gradient of the
// node's output and accumulates into the gradients of `inputs`.
struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(std::span<const double>)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major f64 tensor with reverse-mode gradient tracking. Copies
/// share storage; ops never mutate their inputs.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  /// Size of `axis`; negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const double> data() const;
  /// Writable storage. Only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  void set_requires_grad(bool value);
  void zero_grad();
  bool is_leaf() const;

  double item() const;
  double operator[](std::int64_t flat_index) const;
  double at(std::initializer_list<std::int64_t> index) const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  static Tensor from_impl(std::shared_ptr<detail::TensorImpl> impl);

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording for its lifetime (per thread).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Reverse pass from a single-element loss. Leaf gradients accumulate
/// across calls; intermediate gradients are recomputed each call.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Linear algebra

/// a[..., p, q] x b[..., q, r]. Leading dims of `a` and `b` must agree, or `b`
/// may be a plain matrix shared by every batch of `a`.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] * weight[in, out] + bias[out]; `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor sigmoid(const Tensor& x);
/// log(x / (1 - x)) with x clamped to [kInverseSigmoidEps, 1 - eps].
Tensor inverse_sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);

inline constexpr double kInverseSigmoidEps = 1e-6;
inline constexpr double kLayerNormEps = 1e-5;

// ---------------------------------------------------------------------------
// Normalization

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, int axis);
/// Normalizes the last axis, then applies gamma/beta (both [D], may be
/// undefined for the pre-affine result).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// ---------------------------------------------------------------------------
// Shape and indexing

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor transpose(const Tensor& x, int axis_a, int axis_b);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
/// Rows of x along axis 0.
Tensor index_select(const Tensor& x, std::span<const std::int64_t> rows);
/// table[V, D] -> [n, D].
Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids);
/// Repeats x along a new leading axis: [...] -> [count, ...].
Tensor expand_leading(const Tensor& x, std::int64_t count);

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over `axis`, which is removed from the shape.
Tensor mean_axis(const Tensor& x, int axis);

// ---------------------------------------------------------------------------
// Spatial

/// Reads map[C, H, W] at normalized (x, y) with bilinear interpolation; texels
/// outside the map read as zero. `point` is a [2] tensor.
Tensor bilinear_sample(const Tensor& map, const Tensor& point);

/// Fused multi-scale deformable sampling, see kernels::deform_sample_forward.
/// value [S, H, dh], loc [T, H, L, K, 2], attn [T, H, L, K] -> [T, H * dh].
Tensor deform_sample(const Tensor& value,
                     const std::vector<kernels::LevelShape>& levels,
                     const Tensor& loc, const Tensor& attn);

/// x[C, H, W] conv weight[O, C, k, k] (+ bias[O]) -> [O, Ho, Wo].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::int64_t stride, std::int64_t pad);

// ---------------------------------------------------------------------------
// Losses (each returns an unnormalized scalar sum)

/// Sigmoid focal loss of logits[n] against 0/1 targets.
Tensor sigmoid_focal_loss(const Tensor& logits, std::span<const double> targets,
                          double alpha, double gamma);
/// Softmax cross-entropy of logits[n, V] against class ids.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets);
/// Sum of (1 - gIoU) between boxes[n, 4] (cx, cy, w, h) and fixed targets.
Tensor giou_loss(const Tensor& boxes, std::span<const double> targets);

}  // namespace hlspot
