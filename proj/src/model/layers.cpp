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

#include <cmath>
#include <numbers>

#include "hlspot/model.hpp"

namespace hlspot {

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

Tensor FeedForward::operator()(const Tensor& x) const {
  return norm(add(x, contract(relu(expand(x)))));
}

Tensor MultiHeadAttention::operator()(const Tensor& q, const Tensor& k,
                                      const Tensor& v) const {
  const std::int64_t batch = q.dim(0), tq = q.dim(1), tk = k.dim(1), d = q.dim(2);
  const std::int64_t dh = d / heads;
  auto split = [&](const Tensor& x, std::int64_t t) {
    // [B, t, d] -> [B * H, t, dh]
    return reshape(permute(reshape(x, {batch, t, heads, dh}), {0, 2, 1, 3}),
                   {batch * heads, t, dh});
  };
  const Tensor qh = split(query(q), tq);
  const Tensor kh = split(key(k), tk);
  const Tensor vh = split(value(v), tk);
  const Tensor scores = scale(matmul(qh, transpose(kh, 1, 2)),
                              1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor ctx = matmul(softmax(scores, -1), vh);
  const Tensor merged = reshape(permute(reshape(ctx, {batch, heads, tq, dh}), {0, 2, 1, 3}),
                                {batch, tq, d});
  return out(merged);
}

Tensor DeformableAttention::project_values(const Memory& memory) const {
  const std::int64_t s = memory.tokens.dim(0), d = memory.tokens.dim(1);
  return reshape(value_proj(memory.tokens), {s, heads, d / heads});
}

Tensor DeformableAttention::operator()(const Tensor& queries,
                                       std::span<const double> refs,
                                       const Tensor& values, const Memory& memory,
                                       SamplingRecord* record) const {
  const std::int64_t t = queries.dim(0);
  const std::int64_t per_query = static_cast<std::int64_t>(heads) * levels * points;
  if (static_cast<std::int64_t>(refs.size()) != 2 * t)
    throw DimensionError("deformable attention: " + std::to_string(refs.size() / 2) +
                         " reference points for " + std::to_string(t) + " queries");
  if (static_cast<int>(memory.levels.size()) != levels)
    throw DimensionError("deformable attention: memory has " +
                         std::to_string(memory.levels.size()) + " levels, expected " +
                         std::to_string(levels));

  // Offsets are expressed in pixels of each level.
  std::vector<double> level_scale(per_query * 2 * t), base(per_query * 2 * t);
  for (std::int64_t i = 0; i < t; ++i) {
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t l = 0; l < levels; ++l) {
        for (std::int64_t k = 0; k < points; ++k) {
          const std::int64_t s = (((i * heads + h) * levels + l) * points + k) * 2;
          level_scale[s] = 1.0 / static_cast<double>(memory.levels[l].width);
          level_scale[s + 1] = 1.0 / static_cast<double>(memory.levels[l].height);
          base[s] = refs[2 * i];
          base[s + 1] = refs[2 * i + 1];
        }
      }
    }
  }
  const Shape loc_shape{t, heads, levels, points, 2};
  const Tensor raw_offsets = reshape(offsets(queries), loc_shape);
  const Tensor loc = add(mul(raw_offsets, Tensor(loc_shape, std::move(level_scale))),
                         Tensor(loc_shape, std::move(base)));
  const Tensor attn = reshape(
      softmax(reshape(weights(queries), {t, heads, static_cast<std::int64_t>(levels) * points}), -1),
      {t, heads, levels, points});
  if (record) {
    record->base.assign(refs.begin(), refs.end());
    record->locations.assign(loc.data().begin(), loc.data().end());
    record->weights.assign(attn.data().begin(), attn.data().end());
  }
  return out(deform_sample(values, memory.levels, loc, attn));
}

// ---------------------------------------------------------------------------

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (tensors_.count(name)) throw ContractError("duplicate parameter " + name);
  t.set_requires_grad(true);
  tensors_.emplace(name, t);
  return t;
}

Tensor ParamStore::uniform(const std::string& name, Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng_);
  return add(name, Tensor(std::move(shape), std::move(values)));
}

Tensor ParamStore::constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

Tensor ParamStore::xavier(const std::string& name, std::int64_t fan_in, std::int64_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform(name, {fan_in, fan_out}, bound);
}

Linear ParamStore::linear(const std::string& name, std::int64_t in, std::int64_t out,
                          bool bias) {
  Linear l;
  l.weight = xavier(name + ".weight", in, out);
  if (bias) l.bias = constant(name + ".bias", {out}, 0.0);
  return l;
}

LayerNorm ParamStore::layer_norm(const std::string& name, std::int64_t dim) {
  return {constant(name + ".gamma", {dim}, 1.0), constant(name + ".beta", {dim}, 0.0)};
}

Mlp ParamStore::mlp(const std::string& name, std::int64_t in, std::int64_t hidden,
                    std::int64_t out, int layers) {
  Mlp m;
  for (int i = 0; i < layers; ++i) {
    const std::int64_t a = i == 0 ? in : hidden;
    const std::int64_t b = i + 1 == layers ? out : hidden;
    m.layers.push_back(linear(name + "." + std::to_string(i), a, b));
  }
  return m;
}

// ---------------------------------------------------------------------------

std::vector<double> sine_embedding(Point p, int d_model) {
  const int per_axis = d_model / 2;
  std::vector<double> out(d_model);
  const double coords[2] = {p.y, p.x};
  for (int axis = 0; axis < 2; ++axis) {
    for (int j = 0; j < per_axis; ++j) {
      const double freq = std::pow(10000.0, 2.0 * (j / 2) / static_cast<double>(per_axis));
      const double v = 2.0 * std::numbers::pi * coords[axis] / freq;
      out[axis * per_axis + j] = (j % 2 == 0) ? std::sin(v) : std::cos(v);
    }
  }
  return out;
}

Tensor sine_embedding_table(std::span<const double> points, int d_model) {
  const std::int64_t count = static_cast<std::int64_t>(points.size() / 2);
  std::vector<double> values;
  values.reserve(count * d_model);
  for (std::int64_t i = 0; i < count; ++i) {
    const auto e = sine_embedding({points[2 * i], points[2 * i + 1]}, d_model);
    values.insert(values.end(), e.begin(), e.end());
  }
  return Tensor({count, d_model}, std::move(values));
}

}  // namespace hlspot
