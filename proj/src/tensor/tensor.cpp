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

#include "hlspot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace hlspot {

namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::span<double> TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::from_impl(std::shared_ptr<detail::TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape()));
  return impl_->shape[axis];
}

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(impl_->data.size());
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

std::span<const double> Tensor::grad() const { return impl_->grad; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }
bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
void Tensor::zero_grad() { impl_->grad.clear(); }
bool Tensor::is_leaf() const { return impl_->node == nullptr; }

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::operator[](std::int64_t flat_index) const {
  return impl_->data.at(static_cast<std::size_t>(flat_index));
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<int>(index.size()) != rank())
    throw DimensionError("index rank mismatch for " + shape_str(shape()));
  std::int64_t flat = 0;
  int axis = 0;
  for (auto i : index) {
    const auto d = impl_->shape[axis++];
    if (i < 0 || i >= d) throw DimensionError("index out of range");
    flat = flat * d + i;
  }
  return impl_->data[flat];
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward() needs a single-element loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
  using detail::TensorImpl;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node_impl, next] = stack.back();
    const auto& node = node_impl->node;
    if (node && next < node->inputs.size()) {
      TensorImpl* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second)
        stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node_impl);
    stack.pop_back();
  }

  for (TensorImpl* t : order)
    if (t->node) t->grad.assign(t->data.size(), 0.0);
  loss.impl()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (t->node && t->node->backward) t->node->backward(t->grad);
  }
}

// ---------------------------------------------------------------------------
// Op plumbing

namespace {

using ImplPtr = std::shared_ptr<detail::TensorImpl>;
using BackwardFn = std::function<void(std::span<const double>)>;

bool tracks(std::initializer_list<const Tensor*> inputs) {
  if (!t_grad_enabled) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

Tensor make_leaf(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor::from_impl(std::move(impl));
}

void attach(Tensor& out, std::initializer_list<const Tensor*> inputs,
            BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  for (const Tensor* t : inputs)
    if (t->defined()) node->inputs.push_back(t->impl());
  node->backward = std::move(fn);
  out.impl()->requires_grad = true;
  out.impl()->node = std::move(node);
}

// Gradient sink for an input, empty when the input does not need one.
std::span<double> sink(const ImplPtr& impl) {
  if (!impl || !impl->requires_grad) return {};
  return impl->grad_buffer();
}

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw DimensionError("axis out of range for rank " + std::to_string(rank));
  return axis;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class F, class G>
Tensor unary(const Tensor& x, F&& forward, G&& derivative) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  Tensor result = make_leaf(x.shape(), std::move(out));
  if (tracks({&x})) {
    ImplPtr xi = x.impl();
    std::weak_ptr<detail::TensorImpl> wo = result.impl();
    attach(result, {&x}, [xi, wo, derivative](std::span<const double> g) {
      auto gx = sink(xi);
      if (gx.empty()) return;
      auto o = wo.lock();
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * derivative(xi->data[i], o->data[i]);
    });
  }
  return result;
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw DimensionError("matmul needs rank >= 2, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const std::int64_t p = a.dim(-2), q = a.dim(-1);
  const std::int64_t q2 = b.dim(-2), r = b.dim(-1);
  const bool shared_b = b.rank() == 2;
  Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  if (q != q2 || (!shared_b && lead_a != lead_b))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const std::int64_t batch = shape_numel(lead_a);
  Shape out_shape = lead_a;
  out_shape.push_back(p);
  out_shape.push_back(r);
  std::vector<double> out(batch * p * r);
  if (shared_b) {
    kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), batch * p, q,
                     r, false);
  } else {
    for (std::int64_t i = 0; i < batch; ++i)
      kernels::gemm_nn(a.data().data() + i * p * q,
                       b.data().data() + i * q * r, out.data() + i * p * r, p,
                       q, r, false);
  }
  Tensor result = make_leaf(std::move(out_shape), std::move(out));
  if (tracks({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    attach(result, {&a, &b},
           [ai, bi, batch, p, q, r, shared_b](std::span<const double> g) {
             auto ga = sink(ai);
             auto gb = sink(bi);
             if (shared_b) {
               if (!ga.empty())
                 kernels::gemm_nt(g.data(), bi->data.data(), ga.data(),
                                  batch * p, r, q);
               if (!gb.empty())
                 kernels::gemm_tn(ai->data.data(), g.data(), gb.data(), q,
                                  batch * p, r);
               return;
             }
             for (std::int64_t i = 0; i < batch; ++i) {
               if (!ga.empty())
                 kernels::gemm_nt(g.data() + i * p * r,
                                  bi->data.data() + i * q * r,
                                  ga.data() + i * p * q, p, r, q);
               if (!gb.empty())
                 kernels::gemm_tn(ai->data.data() + i * p * q,
                                  g.data() + i * p * r, gb.data() + i * q * r,
                                  q, p, r);
             }
           });
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(0))
    throw DimensionError("linear: input " + shape_str(x.shape()) +
                         " incompatible with weight " +
                         shape_str(weight.shape()));
  const std::int64_t in = weight.dim(0), outd = weight.dim(1);
  if (bias.defined() && (bias.numel() != outd))
    throw DimensionError("linear: bias " + shape_str(bias.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
  const std::int64_t rows = x.numel() / in;
  std::vector<double> out(rows * outd);
  kernels::gemm_nn(x.data().data(), weight.data().data(), out.data(), rows, in,
                   outd, false);
  if (bias.defined()) {
    const auto bd = bias.data();
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < outd; ++j) out[i * outd + j] += bd[j];
  }
  Shape shape = x.shape();
  shape.back() = outd;
  Tensor result = make_leaf(std::move(shape), std::move(out));
  if (tracks({&x, &weight, &bias})) {
    ImplPtr xi = x.impl(), wi = weight.impl(), bi = bias.impl();
    attach(result, {&x, &weight, &bias},
           [xi, wi, bi, rows, in, outd](std::span<const double> g) {
             auto gx = sink(xi);
             auto gw = sink(wi);
             auto gb = sink(bi);
             if (!gx.empty())
               kernels::gemm_nt(g.data(), wi->data.data(), gx.data(), rows,
                                outd, in);
             if (!gw.empty())
               kernels::gemm_tn(xi->data.data(), g.data(), gw.data(), in, rows,
                                outd);
             if (!gb.empty())
               for (std::int64_t i = 0; i < rows; ++i)
                 for (std::int64_t j = 0; j < outd; ++j)
                   gb[j] += g[i * outd + j];
           });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor result = make_leaf(a.shape(), std::move(out));
  if (tracks({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    attach(result, {&a, &b}, [ai, bi](std::span<const double> g) {
      for (auto s : {sink(ai), sink(bi)})
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
    });
  }
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor result = make_leaf(a.shape(), std::move(out));
  if (tracks({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    attach(result, {&a, &b}, [ai, bi](std::span<const double> g) {
      auto ga = sink(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      auto gb = sink(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor result = make_leaf(a.shape(), std::move(out));
  if (tracks({&a, &b})) {
    ImplPtr ai = a.impl(), bi = b.impl();
    attach(result, {&a, &b}, [ai, bi](std::span<const double> g) {
      auto ga = sink(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bi->data[i];
      auto gb = sink(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ai->data[i];
    });
  }
  return result;
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

namespace {
constexpr double kSigLo = kInverseSigmoidEps, kSigHi = 1.0 - kInverseSigmoidEps;
}  // namespace

Tensor inverse_sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        const double c = std::clamp(v, kSigLo, kSigHi);
        return std::log(c / (1.0 - c));
      },
      [](double v, double) {
        if (v < kSigLo || v > kSigHi) return 0.0;
        return 1.0 / (v * (1.0 - v));
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------------------
// Normalization

Tensor softmax(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.rank());
  const auto& s = x.shape();
  const std::int64_t n = s[axis];
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= s[i];
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t j = 0; j < inner; ++j) {
      const std::int64_t base = o * n * inner + j;
      double mx = in[base];
      for (std::int64_t k = 1; k < n; ++k) mx = std::max(mx, in[base + k * inner]);
      double total = 0.0;
      for (std::int64_t k = 0; k < n; ++k) {
        const double e = std::exp(in[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::int64_t k = 0; k < n; ++k) out[base + k * inner] /= total;
    }
  }
  Tensor result = make_leaf(s, std::move(out));
  if (tracks({&x})) {
    ImplPtr xi = x.impl();
    std::weak_ptr<detail::TensorImpl> wo = result.impl();
    attach(result, {&x}, [xi, wo, outer, inner, n](std::span<const double> g) {
      auto gx = sink(xi);
      if (gx.empty()) return;
      const auto& y = wo.lock()->data;
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t j = 0; j < inner; ++j) {
          const std::int64_t base = o * n * inner + j;
          double dot = 0.0;
          for (std::int64_t k = 0; k < n; ++k)
            dot += g[base + k * inner] * y[base + k * inner];
          for (std::int64_t k = 0; k < n; ++k)
            gx[base + k * inner] += y[base + k * inner] * (g[base + k * inner] - dot);
        }
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  const std::int64_t d = x.dim(-1);
  if ((gamma.defined() && gamma.numel() != d) || (beta.defined() && beta.numel() != d))
    throw DimensionError("layer_norm: affine parameters do not match " +
                         shape_str(x.shape()));
  const std::int64_t rows = x.numel() / d;
  const auto in = x.data();
  std::vector<double> xhat(in.size()), inv_std(rows), out(in.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double m = 0.0;
    for (std::int64_t i = 0; i < d; ++i) m += row[i];
    m /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t i = 0; i < d; ++i) var += (row[i] - m) * (row[i] - m);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::int64_t i = 0; i < d; ++i) {
      const double h = (row[i] - m) * inv_std[r];
      xhat[r * d + i] = h;
      out[r * d + i] = h * (gamma.defined() ? gamma[i] : 1.0) +
                       (beta.defined() ? beta[i] : 0.0);
    }
  }
  Tensor result = make_leaf(x.shape(), std::move(out));
  if (tracks({&x, &gamma, &beta})) {
    ImplPtr xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    attach(result, {&x, &gamma, &beta},
           [xi, gi, bi, rows, d, xhat = std::move(xhat),
            inv_std = std::move(inv_std)](std::span<const double> g) {
             auto gx = sink(xi);
             auto gg = sink(gi);
             auto gb = sink(bi);
             std::vector<double> gh(d);
             for (std::int64_t r = 0; r < rows; ++r) {
               const double* grow = g.data() + r * d;
               const double* hrow = xhat.data() + r * d;
               for (std::int64_t i = 0; i < d; ++i) {
                 if (!gg.empty()) gg[i] += grow[i] * hrow[i];
                 if (!gb.empty()) gb[i] += grow[i];
               }
               if (gx.empty()) continue;
               double mean_gh = 0.0, mean_ghh = 0.0;
               for (std::int64_t i = 0; i < d; ++i) {
                 gh[i] = grow[i] * (gi ? gi->data[i] : 1.0);
                 mean_gh += gh[i];
                 mean_ghh += gh[i] * hrow[i];
               }
               mean_gh /= static_cast<double>(d);
               mean_ghh /= static_cast<double>(d);
               for (std::int64_t i = 0; i < d; ++i)
                 gx[r * d + i] += inv_std[r] * (gh[i] - mean_gh - hrow[i] * mean_ghh);
             }
           });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Shape and indexing

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw DimensionError("reshape: more than one -1");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[infer] = x.numel() / known;
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  Tensor result = make_leaf(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (tracks({&x})) {
    ImplPtr xi = x.impl();
    attach(result, {&x}, [xi](std::span<const double> g) {
      auto gx = sink(xi);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  const int r = x.rank();
  if (static_cast<int>(order.size()) != r)
    throw DimensionError("permute: order rank mismatch for " + shape_str(x.shape()));
  std::vector<bool> used(r, false);
  for (int o : order) {
    if (o < 0 || o >= r || used[o]) throw DimensionError("permute: invalid order");
    used[o] = true;
  }
  const auto& s = x.shape();
  std::vector<std::int64_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * s[i + 1];
  Shape out_shape(r);
  std::vector<std::int64_t> src_stride(r);
  for (int i = 0; i < r; ++i) {
    out_shape[i] = s[order[i]];
    src_stride[i] = in_stride[order[i]];
  }
  const std::int64_t n = x.numel();
  // Source offset of each output element.
  std::vector<std::int64_t> src(n);
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t off = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    src[i] = off;
    for (int a = r - 1; a >= 0; --a) {
      if (++idx[a] < out_shape[a]) {
        off += src_stride[a];
        break;
      }
      off -= src_stride[a] * (out_shape[a] - 1);
      idx[a] = 0;
    }
  }
  std::vector<double> out(n);
  const auto in = x.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = in[src[i]];
  Tensor result = make_leaf(std::move(out_shape), std::move(out));
  if (tracks({&x})) {
    ImplPtr xi = x.impl();
    attach(result, {&x}, [xi, src = std::move(src)](std::span<const double> g) {
      auto gx = sink(xi);
      if (gx.empty()) return;
      for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[i];
    });
  }
  return result;
}

Tensor transpose(const Tensor& x, int axis_a, int axis_b) {
  axis_a = normalize_axis(axis_a, x.rank());
  axis_b = normalize_axis(axis_b, x.rank());
  std::vector<int> order(x.rank());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[axis_a], order[axis_b]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const int r = parts[0].rank();
  axis = normalize_axis(axis, r);
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw DimensionError("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && p.shape()[i] != parts[0].shape()[i])
        throw DimensionError("concat: shape mismatch " + shape_str(p.shape()) +
                             " vs " + shape_str(parts[0].shape()));
    out_shape[axis] += p.shape()[axis];
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[i];
  const std::int64_t out_row = out_shape[axis] * inner;
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::int64_t> offsets;
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t block = p.shape()[axis] * inner;
    offsets.push_back(offset);
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(p.data().data() + o * block, block,
                  out.data() + o * out_row + offset);
    offset += block;
  }
  Tensor result = make_leaf(std::move(out_shape), std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || tracks({&p});
  if (any) {
    auto node = std::make_shared<detail::Node>();
    std::vector<ImplPtr> impls;
    std::vector<std::int64_t> blocks;
    for (const auto& p : parts) {
      impls.push_back(p.impl());
      blocks.push_back(p.shape()[axis] * inner);
    }
    node->inputs = impls;
    node->backward = [impls, blocks, offsets, outer, out_row](std::span<const double> g) {
      for (std::size_t k = 0; k < impls.size(); ++k) {
        auto gp = sink(impls[k]);
        if (gp.empty()) continue;
        for (std::int64_t o = 0; o < outer; ++o)
          for (std::int64_t i = 0; i < blocks[k]; ++i)
            gp[o * blocks[k] + i] += g[o * out_row + offsets[k] + i];
      }
    };
    result.impl()->requires_grad = true;
    result.impl()->node = std::move(node);
  }
  return result;
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, x.rank());
  const auto& s = x.shape();
  if (start < 0 || length < 0 || start + length > s[axis])
    throw DimensionError("slice out of range for " + shape_str(s));
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::int64_t in_row = s[axis] * inner, out_row = length * inner;
  std::vector<double> out(outer * out_row);
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(x.data().data() + o * in_row + start * inner, out_row,
                out.data() + o * out_row);
  Tensor result = make_leaf(std::move(out_shape), std::move(out));
  if (tracks({&x})) {
    ImplPtr xi = x.impl();
    const std::int64_t off = start * inner;
    attach(result, {&x}, [xi, outer, in_row, out_row, off](std::span<const double> g) {
      auto gx = sink(xi);
      if (gx.empty()) return;
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < out_row; ++i)
          gx[o * in_row + off + i] += g[o * out_row + i];
    });
  }
  return result;
}

Tensor index_select(const Tensor& x, std::span<const std::int64_t> rows) {
  if (x.rank() < 1) throw DimensionError("index_select on a rank-0 tensor");
  const std::int64_t n = x.dim(0);
  const std::int64_t width = n ? x.numel() / n : 0;
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<std::int64_t>(rows.size());
  std::vector<double> out(rows.size() * width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n)
      throw DimensionError("index_select: row " + std::to_string(rows[i]) +
                           " out of range for " + shape_str(x.shape()));
    std::copy_n(x.data().data() + rows[i] * width, width, out.data() + i * width);
  }
  Tensor result = make_leaf(std::move(out_shape), std::move(out));
  if (tracks({&x})) {
    ImplPtr xi = x.impl();
    std::vector<std::int64_t> idx(rows.begin(), rows.end());
    attach(result, {&x}, [xi, idx = std::move(idx), width](std::span<const double> g) {
      auto gx = sink(xi);
      if (gx.empty()) return;
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::int64_t j = 0; j < width; ++j) gx[idx[i] * width + j] += g[i * width + j];
    });
  }
  return result;
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids) {
  if (table.rank() != 2)
    throw DimensionError("embedding table must be [V, D], got " + shape_str(table.shape()));
  return index_select(table, ids);
}

Tensor expand_leading(const Tensor& x, std::int64_t count) {
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin(), count);
  const std::int64_t n = x.numel();
  std::vector<double> out(count * n);
  for (std::int64_t c = 0; c < count; ++c)
    std::copy_n(x.data().data(), n, out.data() + c * n);
  Tensor result = make_leaf(std::move(out_shape), std::move(out));
  if (tracks({&x})) {
    ImplPtr xi = x.impl();
    attach(result, {&x}, [xi, count, n](std::span<const double> g) {
      auto gx = sink(xi);
      if (gx.empty()) return;
      for (std::int64_t c = 0; c < count; ++c)
        for (std::int64_t i = 0; i < n; ++i) gx[i] += g[c * n + i];
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = make_leaf({1}, {total});
  if (tracks({&x})) {
    ImplPtr xi = x.impl();
    attach(result, {&x}, [xi](std::span<const double> g) {
      auto gx = sink(xi);
      for (auto& v : gx) v += g[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_axis(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.rank());
  const auto& s = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= s[i];
  const std::int64_t n = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + axis);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  const auto in = x.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t k = 0; k < n; ++k)
      for (std::int64_t j = 0; j < inner; ++j)
        out[o * inner + j] += in[(o * n + k) * inner + j];
  for (auto& v : out) v /= static_cast<double>(n);
  Tensor result = make_leaf(std::move(out_shape), std::move(out));
  if (tracks({&x})) {
    ImplPtr xi = x.impl();
    attach(result, {&x}, [xi, outer, inner, n](std::span<const double> g) {
      auto gx = sink(xi);
      if (gx.empty()) return;
      const double inv = 1.0 / static_cast<double>(n);
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t k = 0; k < n; ++k)
          for (std::int64_t j = 0; j < inner; ++j)
            gx[(o * n + k) * inner + j] += g[o * inner + j] * inv;
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Spatial

Tensor bilinear_sample(const Tensor& map, const Tensor& point) {
  if (map.rank() != 3 || point.numel() != 2)
    throw DimensionError("bilinear_sample needs map [C,H,W] and a 2-vector, got " +
                         shape_str(map.shape()) + " and " + shape_str(point.shape()));
  const std::int64_t c = map.dim(0), h = map.dim(1), w = map.dim(2);
  const double px = point[0] * static_cast<double>(w) - 0.5;
  const double py = point[1] * static_cast<double>(h) - 0.5;
  const double x0f = std::floor(px), y0f = std::floor(py);
  const double fx = px - x0f, fy = py - y0f;
  const auto x0 = static_cast<std::int64_t>(std::clamp(x0f, -2.0, static_cast<double>(w) + 1));
  const auto y0 = static_cast<std::int64_t>(std::clamp(y0f, -2.0, static_cast<double>(h) + 1));
  struct Tap {
    std::int64_t x, y;
    double weight, dx, dy;
  };
  const Tap taps[4] = {
      {x0, y0, (1 - fx) * (1 - fy), -(1 - fy), -(1 - fx)},
      {x0 + 1, y0, fx * (1 - fy), (1 - fy), -fx},
      {x0, y0 + 1, (1 - fx) * fy, -fy, (1 - fx)},
      {x0 + 1, y0 + 1, fx * fy, fy, fx},
  };
  auto inside = [&](const Tap& t) { return t.x >= 0 && t.x < w && t.y >= 0 && t.y < h; };
  std::vector<double> out(c, 0.0);
  const auto m = map.data();
  for (const Tap& t : taps) {
    if (!inside(t)) continue;
    for (std::int64_t ch = 0; ch < c; ++ch)
      out[ch] += t.weight * m[(ch * h + t.y) * w + t.x];
  }
  Tensor result = make_leaf({c}, std::move(out));
  if (tracks({&map, &point})) {
    ImplPtr mi = map.impl(), pi = point.impl();
    std::vector<Tap> live;
    for (const Tap& t : taps)
      if (inside(t)) live.push_back(t);
    attach(result, {&map, &point},
           [mi, pi, live, c, h, w](std::span<const double> g) {
             auto gm = sink(mi);
             auto gp = sink(pi);
             for (const Tap& t : live) {
               double dot = 0.0;
               for (std::int64_t ch = 0; ch < c; ++ch) {
                 const std::int64_t at = (ch * h + t.y) * w + t.x;
                 if (!gm.empty()) gm[at] += t.weight * g[ch];
                 dot += g[ch] * mi->data[at];
               }
               if (!gp.empty()) {
                 gp[0] += dot * t.dx * static_cast<double>(w);
                 gp[1] += dot * t.dy * static_cast<double>(h);
               }
             }
           });
  }
  return result;
}

Tensor deform_sample(const Tensor& value,
                     const std::vector<kernels::LevelShape>& levels,
                     const Tensor& loc, const Tensor& attn) {
  if (value.rank() != 3 || loc.rank() != 5 || attn.rank() != 4)
    throw DimensionError("deform_sample: expected value [S,H,dh], loc [T,H,L,K,2], attn [T,H,L,K]");
  const std::int64_t t = loc.dim(0), heads = loc.dim(1), nl = loc.dim(2),
                     k = loc.dim(3);
  std::int64_t total = 0;
  for (const auto& lv : levels) total += lv.height * lv.width;
  if (value.dim(1) != heads || nl != static_cast<std::int64_t>(levels.size()) ||
      loc.dim(4) != 2 || attn.shape() != Shape{t, heads, nl, k} ||
      value.dim(0) != total)
    throw DimensionError("deform_sample: inconsistent shapes value " +
                         shape_str(value.shape()) + ", loc " + shape_str(loc.shape()) +
                         ", attn " + shape_str(attn.shape()));
  const std::int64_t dh = value.dim(2);
  auto level_copy = std::make_shared<std::vector<kernels::LevelShape>>(levels);
  kernels::DeformDims dims{t, heads, dh, k, *level_copy};
  std::vector<double> out(t * heads * dh);
  kernels::deform_sample_forward(dims, value.data(), loc.data(), attn.data(), out);
  Tensor result = make_leaf({t, heads * dh}, std::move(out));
  if (tracks({&value, &loc, &attn})) {
    ImplPtr vi = value.impl(), li = loc.impl(), ai = attn.impl();
    attach(result, {&value, &loc, &attn},
           [vi, li, ai, level_copy, t, heads, dh, k](std::span<const double> g) {
             kernels::DeformDims d{t, heads, dh, k, *level_copy};
             kernels::deform_sample_backward(d, vi->data, li->data, ai->data, g,
                                             sink(vi), sink(li), sink(ai));
           });
  }
  return result;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::int64_t stride, std::int64_t pad) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != x.dim(0) ||
      weight.dim(2) != weight.dim(3))
    throw DimensionError("conv2d: input " + shape_str(x.shape()) +
                         " incompatible with weight " + shape_str(weight.shape()));
  const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::int64_t o = weight.dim(0), k = weight.dim(2);
  const std::int64_t oh = (h + 2 * pad - k) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw DimensionError("conv2d: empty output");
  const std::int64_t ck = c * k * k, hw = oh * ow;
  auto cols = std::make_shared<std::vector<double>>(ck * hw);
  kernels::im2col(x.data().data(), c, h, w, k, stride, pad, cols->data());
  std::vector<double> out(o * hw);
  kernels::gemm_nn(weight.data().data(), cols->data(), out.data(), o, ck, hw, false);
  if (bias.defined())
    for (std::int64_t i = 0; i < o; ++i)
      for (std::int64_t j = 0; j < hw; ++j) out[i * hw + j] += bias[i];
  Tensor result = make_leaf({o, oh, ow}, std::move(out));
  if (tracks({&x, &weight, &bias})) {
    ImplPtr xi = x.impl(), wi = weight.impl(), bi = bias.impl();
    attach(result, {&x, &weight, &bias},
           [xi, wi, bi, cols, c, h, w, o, k, stride, pad, ck, hw](std::span<const double> g) {
             auto gw = sink(wi);
             if (!gw.empty()) kernels::gemm_nt(g.data(), cols->data(), gw.data(), o, hw, ck);
             auto gb = sink(bi);
             if (!gb.empty())
               for (std::int64_t i = 0; i < o; ++i)
                 for (std::int64_t j = 0; j < hw; ++j) gb[i] += g[i * hw + j];
             auto gx = sink(xi);
             if (!gx.empty()) {
               std::vector<double> gcols(ck * hw, 0.0);
               kernels::gemm_tn(wi->data.data(), g.data(), gcols.data(), ck, o, hw);
               kernels::col2im(gcols.data(), c, h, w, k, stride, pad, gx.data());
             }
           });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

inline double softplus(double v) {
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

inline double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid_focal_loss(const Tensor& logits, std::span<const double> targets,
                          double alpha, double gamma) {
  if (static_cast<std::int64_t>(targets.size()) != logits.numel())
    throw DimensionError("sigmoid_focal_loss: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(logits.shape()));
  const auto x = logits.data();
  const std::size_t n = targets.size();
  std::vector<double> grad(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = stable_sigmoid(x[i]);
    const double q = stable_sigmoid(-x[i]);  // 1 - p
    const double log_p = -softplus(-x[i]);
    const double log_q = -softplus(x[i]);
    const double t = targets[i];
    const double qg = std::pow(q, gamma), pg = std::pow(p, gamma);
    const double pos = alpha * qg * (-log_p);
    const double neg = (1.0 - alpha) * pg * (-log_q);
    total += t * pos + (1.0 - t) * neg;
    const double dpos = alpha * qg * (gamma * p * log_p - q);
    const double dneg = (1.0 - alpha) * pg * (-gamma * q * log_q + p);
    grad[i] = t * dpos + (1.0 - t) * dneg;
  }
  Tensor result = make_leaf({1}, {total});
  if (tracks({&logits})) {
    ImplPtr li = logits.impl();
    attach(result, {&logits}, [li, grad = std::move(grad)](std::span<const double> g) {
      auto gl = sink(li);
      for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g[0] * grad[i];
    });
  }
  return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(targets.size()))
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) +
                         " vs " + std::to_string(targets.size()) + " targets");
  const std::int64_t n = logits.dim(0), v = logits.dim(1);
  const auto x = logits.data();
  std::vector<double> probs(n * v);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * v;
    if (targets[i] < 0 || targets[i] >= v)
      throw DimensionError("cross_entropy: class id out of range");
    double mx = row[0];
    for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[targets[i]];
    for (std::int64_t j = 0; j < v; ++j) probs[i * v + j] = std::exp(row[j] - lse);
  }
  Tensor result = make_leaf({1}, {total});
  if (tracks({&logits})) {
    ImplPtr li = logits.impl();
    std::vector<std::int64_t> tg(targets.begin(), targets.end());
    attach(result, {&logits},
           [li, probs = std::move(probs), tg = std::move(tg), v](std::span<const double> g) {
             auto gl = sink(li);
             if (gl.empty()) return;
             for (std::size_t i = 0; i < tg.size(); ++i)
               for (std::int64_t j = 0; j < v; ++j)
                 gl[i * v + j] += g[0] * (probs[i * v + j] - (j == tg[i] ? 1.0 : 0.0));
           });
  }
  return result;
}

Tensor giou_loss(const Tensor& boxes, std::span<const double> targets) {
  if (boxes.rank() != 2 || boxes.dim(1) != 4 ||
      static_cast<std::int64_t>(targets.size()) != boxes.numel())
    throw DimensionError("giou_loss: boxes " + shape_str(boxes.shape()) +
                         " vs " + std::to_string(targets.size()) + " target values");
  const std::int64_t n = boxes.dim(0);
  const auto b = boxes.data();
  std::vector<double> grad(n * 4, 0.0);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* p = b.data() + 4 * i;
    const double* t = targets.data() + 4 * i;
    const double px1 = p[0] - 0.5 * p[2], px2 = p[0] + 0.5 * p[2];
    const double py1 = p[1] - 0.5 * p[3], py2 = p[1] + 0.5 * p[3];
    const double tx1 = t[0] - 0.5 * t[2], tx2 = t[0] + 0.5 * t[2];
    const double ty1 = t[1] - 0.5 * t[3], ty2 = t[1] + 0.5 * t[3];
    const double iw = std::min(px2, tx2) - std::max(px1, tx1);
    const double ih = std::min(py2, ty2) - std::max(py1, ty1);
    const bool overlap = iw > 0 && ih > 0;
    const double inter = overlap ? iw * ih : 0.0;
    const double ap = (px2 - px1) * (py2 - py1);
    const double at = (tx2 - tx1) * (ty2 - ty1);
    const double uni = ap + at - inter;
    const double cw = std::max(px2, tx2) - std::min(px1, tx1);
    const double ch = std::max(py2, ty2) - std::min(py1, ty1);
    const double encl = cw * ch;
    if (uni <= 0 || encl <= 0) continue;
    const double giou = inter / uni - (encl - uni) / encl;
    total += 1.0 - giou;

    // d giou = dI/U - I/U^2 dU + dU/C - U/C^2 dC with U = Ap + At - I.
    const double d_i = 1.0 / uni + inter / (uni * uni) - 1.0 / encl;
    const double d_ap = -inter / (uni * uni) + 1.0 / encl;
    const double d_c = -uni / (encl * encl);
    double g_x1 = 0, g_x2 = 0, g_y1 = 0, g_y2 = 0;
    // Pred area.
    g_x1 -= d_ap * (py2 - py1);
    g_x2 += d_ap * (py2 - py1);
    g_y1 -= d_ap * (px2 - px1);
    g_y2 += d_ap * (px2 - px1);
    if (overlap) {
      if (px2 <= tx2) g_x2 += d_i * ih;
      if (px1 >= tx1) g_x1 -= d_i * ih;
      if (py2 <= ty2) g_y2 += d_i * iw;
      if (py1 >= ty1) g_y1 -= d_i * iw;
    }
    if (px2 >= tx2) g_x2 += d_c * ch;
    if (px1 <= tx1) g_x1 -= d_c * ch;
    if (py2 >= ty2) g_y2 += d_c * cw;
    if (py1 <= ty1) g_y1 -= d_c * cw;
    // Loss is 1 - giou.
    grad[4 * i + 0] = -(g_x1 + g_x2);
    grad[4 * i + 1] = -(g_y1 + g_y2);
    grad[4 * i + 2] = -0.5 * (g_x2 - g_x1);
    grad[4 * i + 3] = -0.5 * (g_y2 - g_y1);
  }
  Tensor result = make_leaf({1}, {total});
  if (tracks({&boxes})) {
    ImplPtr bi = boxes.impl();
    attach(result, {&boxes}, [bi, grad = std::move(grad)](std::span<const double> g) {
      auto gb = sink(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * grad[i];
    });
  }
  return result;
}

}  // namespace hlspot
