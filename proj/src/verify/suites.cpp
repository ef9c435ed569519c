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

#include <chrono>
#include <cmath>
#include <sstream>

#include "hlspot/verify.hpp"

namespace hlspot::verify {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor rand_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Values in [lo, hi] but at least `gap` away from zero (keeps kinks away
// from the finite-difference stencil).
Tensor rand_away_from_zero(std::mt19937_64& rng, Shape shape, double gap) {
  Tensor t = rand_tensor(rng, std::move(shape));
  for (auto& x : t.mutable_data())
    if (std::abs(x) < gap) x = x < 0 ? x - gap : x + gap;
  return t;
}

// Reduces any op output to a scalar with fixed random weights.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, rand_tensor(rng, y.shape())));
}

struct OpCase {
  const char* name;
  std::function<GradCheck(std::mt19937_64&)> run;
};

std::vector<OpCase> op_cases() {
  using V = const std::vector<Tensor>&;
  auto unary = [](const char* name, Tensor (*op)(const Tensor&), double lo, double hi) {
    return OpCase{name, [=](std::mt19937_64& rng) {
                    const auto s = rng();
                    return gradcheck([=](V x) { return weighted_sum(op(x[0]), s); },
                                     {rand_tensor(rng, {3, 4}, lo, hi)});
                  }};
  };
  std::vector<OpCase> cases = {
      {"matmul",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(matmul(x[0], x[1]), s); },
                          {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {2, 4, 2})});
       }},
      {"matmul_shared",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(matmul(x[0], x[1]), s); },
                          {rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {4, 5})});
       }},
      {"linear",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(linear(x[0], x[1], x[2]), s); },
                          {rand_tensor(rng, {3, 4}), rand_tensor(rng, {4, 5}), rand_tensor(rng, {5})});
       }},
      {"add",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(add(x[0], x[1]), s); },
                          {rand_tensor(rng, {3, 4}), rand_tensor(rng, {3, 4})});
       }},
      {"sub",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(sub(x[0], x[1]), s); },
                          {rand_tensor(rng, {3, 4}), rand_tensor(rng, {3, 4})});
       }},
      {"mul",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(mul(x[0], x[1]), s); },
                          {rand_tensor(rng, {3, 4}), rand_tensor(rng, {3, 4})});
       }},
      {"scale",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(add_scalar(scale(x[0], -1.7), 0.3), s); },
                          {rand_tensor(rng, {3, 4})});
       }},
      unary("sigmoid", sigmoid, -3, 3),
      unary("inverse_sigmoid", inverse_sigmoid, 0.05, 0.95),
      unary("exp", exp, -2, 2),
      unary("log", log, 0.3, 2),
      {"relu",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(relu(x[0]), s); },
                          {rand_away_from_zero(rng, {3, 4}, 0.01)});
       }},
      {"abs",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(abs(x[0]), s); },
                          {rand_away_from_zero(rng, {3, 4}, 0.01)});
       }},
      {"softmax",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         const int axis = std::uniform_int_distribution<int>(-1, 2)(rng);
         return gradcheck([=](V x) { return weighted_sum(softmax(x[0], axis), s); },
                          {rand_tensor(rng, {2, 3, 4}, -2, 2)});
       }},
      {"layer_norm",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(layer_norm(x[0], x[1], x[2]), s); },
                          {rand_tensor(rng, {3, 5}), rand_tensor(rng, {5}), rand_tensor(rng, {5})});
       }},
      {"reshape_permute",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck(
             [=](V x) { return weighted_sum(permute(reshape(x[0], {2, 3, 4}), {2, 0, 1}), s); },
             {rand_tensor(rng, {6, 4})});
       }},
      {"transpose",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(transpose(x[0], 0, 2), s); },
                          {rand_tensor(rng, {2, 3, 4})});
       }},
      {"concat_slice",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck(
             [=](V x) { return weighted_sum(slice(concat({x[0], x[1]}, 1), 1, 1, 4), s); },
             {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 2})});
       }},
      {"index_select",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         const std::vector<std::int64_t> rows{2, 0, 2, 1};
         return gradcheck([=](V x) { return weighted_sum(index_select(x[0], rows), s); },
                          {rand_tensor(rng, {3, 4})});
       }},
      {"embedding_lookup",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         const std::vector<std::int64_t> ids{4, 1, 1, 0};
         return gradcheck([=](V x) { return weighted_sum(embedding_lookup(x[0], ids), s); },
                          {rand_tensor(rng, {5, 3})});
       }},
      {"expand_leading",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         return gradcheck([=](V x) { return weighted_sum(expand_leading(x[0], 3), s); },
                          {rand_tensor(rng, {2, 2})});
       }},
      {"reductions",
       [](std::mt19937_64& rng) {
         return gradcheck(
             [](V x) {
               return add(add(sum(x[0]), scale(mean(x[0]), 3.0)),
                          weighted_sum(mean_axis(x[0], 1), 99));
             },
             {rand_tensor(rng, {2, 3, 4})});
       }},
      {"bilinear_sample",
       [](std::mt19937_64& rng) {
         return gradcheck([](V x) { return weighted_sum(bilinear_sample(x[0], x[1]), 7); },
                          {rand_tensor(rng, {2, 4, 5}), rand_tensor(rng, {2}, 0.05, 0.95)});
       }},
      {"deform_sample",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         const std::vector<kernels::LevelShape> levels{{3, 4, 0}, {2, 2, 12}};
         return gradcheck(
             [=](V x) { return weighted_sum(deform_sample(x[0], levels, x[1], x[2]), s); },
             {rand_tensor(rng, {16, 2, 3}), rand_tensor(rng, {3, 2, 2, 2, 2}, -0.1, 1.1),
              rand_tensor(rng, {3, 2, 2, 2}, 0, 1)});
       }},
      {"conv2d",
       [](std::mt19937_64& rng) {
         const auto s = rng();
         const int stride = std::uniform_int_distribution<int>(1, 2)(rng);
         return gradcheck(
             [=](V x) { return weighted_sum(conv2d(x[0], x[1], x[2], stride, 1), s); },
             {rand_tensor(rng, {2, 5, 6}), rand_tensor(rng, {3, 2, 3, 3}), rand_tensor(rng, {3})});
       }},
      {"sigmoid_focal_loss",
       [](std::mt19937_64& rng) {
         const std::vector<double> targets{1, 0, 0, 1, 0, 0};
         return gradcheck(
             [=](V x) { return sigmoid_focal_loss(x[0], targets, 0.25, 2.0); },
             {rand_tensor(rng, {6}, -3, 3)});
       }},
      {"cross_entropy",
       [](std::mt19937_64& rng) {
         const std::vector<std::int64_t> targets{0, 4, 2, 4};
         return gradcheck([=](V x) { return cross_entropy(x[0], targets); },
                          {rand_tensor(rng, {4, 5}, -2, 2)});
       }},
      {"giou_loss",
       [](std::mt19937_64& rng) {
         std::uniform_real_distribution<double> c(0.3, 0.7), wh(0.1, 0.4);
         std::vector<double> boxes, targets;
         for (int i = 0; i < 3; ++i)
           for (auto* v : {&boxes, &targets}) {
             v->push_back(c(rng));
             v->push_back(c(rng));
             v->push_back(wh(rng));
             v->push_back(wh(rng));
           }
         return gradcheck([=](V x) { return giou_loss(x[0], targets); },
                          {Tensor({3, 4}, boxes)});
       }},
  };
  return cases;
}

// Word rectangle with N boundary points and optional centers (normalized).
TextInstance random_instance(std::mt19937_64& rng, const ModelConfig& c, const Vocabulary& vocab,
                             bool centers) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x0 = 0.1 + 0.4 * u(rng), y0 = 0.1 + 0.5 * u(rng);
  const double w = 0.2 + 0.3 * u(rng), h = 0.1 + 0.2 * u(rng);
  std::vector<Point> top, pts;
  const int half = c.n_boundary / 2;
  for (int k = 0; k < half; ++k) pts.push_back({x0 + w * k / (half - 1), y0});
  for (int k = 0; k < half; ++k) pts.push_back({x0 + w * (half - 1 - k) / (half - 1), y0 + h});
  TextInstance t;
  t.polygon = BoundaryPolygon(pts);
  const int len = std::uniform_int_distribution<int>(1, c.max_text_len)(rng);
  for (int k = 0; k < len; ++k)
    t.transcription.push_back(vocab.symbols()[rng() % vocab.symbols().size()]);
  if (centers) {
    for (int k = 0; k < len; ++k) t.char_centers.push_back({x0 + w * (k + 0.5) / len, y0 + h / 2});
    t.centers_available = true;
    t.char_centers = char_center_targets(t, c.max_text_len);
  }
  return t;
}

}  // namespace

SuiteResult op_gradient_suite(int seeds) {
  const auto t0 = Clock::now();
  SuiteResult r{"op gradients", true, "", 0};
  double worst = 0;
  std::string where;
  const auto cases = op_cases();
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    for (const auto& c : cases) {
      const GradCheck g = c.run(rng);
      if (g.max_rel_err > worst) {
        worst = g.max_rel_err;
        where = std::string(c.name) + " seed " + std::to_string(seed) + " " + g.worst;
      }
    }
  }
  r.passed = worst < kOpGradTol;
  std::ostringstream msg;
  msg << cases.size() << " ops x " << seeds << " seeds, max rel err " << worst;
  if (!where.empty()) msg << " (" << where << ")";
  r.detail = msg.str();
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult model_gradient_suite(int seeds) {
  const auto t0 = Clock::now();
  SuiteResult r{"model gradient", true, "", 0};
  double worst = 0;
  std::string where;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(5000 + seed);
    const ModelConfig cfg = ModelConfig::gradcheck();
    SpotterModel model(cfg, rng());
    // Move zero-initialized heads off zero so every path carries gradient.
    std::normal_distribution<double> jitter(0.0, 0.05);
    for (auto& [name, t] : model.parameters())
      for (auto& v : t.mutable_data()) v += jitter(rng);
    const Tensor image = rand_tensor(rng, {3, 32, 32}, -2, 2);
    std::vector<TextInstance> gts;
    const int count = std::uniform_int_distribution<int>(1, cfg.n_queries)(rng);
    for (int i = 0; i < count; ++i) gts.push_back(random_instance(rng, cfg, model.vocabulary(), i % 2 == 0));
    const MatchWeights w;
    // Perturbed passes replay the detached values of the base pass.
    DetachedValues pinned;
    model.forward(image, nullptr, &pinned);
    auto loss = [&] {
      return total_loss(model.forward(image, nullptr, nullptr, &pinned), gts, model.vocabulary(), w)
          .total;
    };
    const GradCheck g = gradcheck_params(loss, model.parameters(), rng, 10, 40);
    if (g.max_rel_err > worst) {
      worst = g.max_rel_err;
      where = "seed " + std::to_string(seed) + " " + g.worst;
    }
  }
  r.passed = worst < kModelGradTol;
  std::ostringstream msg;
  msg << seeds << " seeds, max rel err " << worst;
  if (!where.empty()) msg << " (" << where << ")";
  r.detail = msg.str();
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult deform_oracle_suite(int configs) {
  const auto t0 = Clock::now();
  SuiteResult r{"deformable attention oracle", true, "", 0};
  double worst = 0;
  for (int cfg = 0; cfg < configs; ++cfg) {
    std::mt19937_64 rng(9000 + cfg);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const int H = pick(1, 3), L = pick(1, 3), K = pick(1, 4), dh = pick(1, 4), T = pick(1, 5);
    const int d = H * dh;
    ParamStore store(rng());
    DeformableAttention attn;
    attn.heads = H;
    attn.levels = L;
    attn.points = K;
    attn.value_proj = store.linear("v", d, d, false);
    attn.offsets = store.linear("o", d, static_cast<std::int64_t>(H) * L * K * 2);
    attn.weights = store.linear("w", d, static_cast<std::int64_t>(H) * L * K);
    attn.out = store.linear("out", d, d);
    for (auto* lin : {&attn.offsets, &attn.weights, &attn.out})
      lin->bias = rand_tensor(rng, lin->bias.shape());
    Memory memory;
    std::int64_t start = 0;
    for (int l = 0; l < L; ++l) {
      const int h = pick(1, 6), w = pick(1, 6);
      memory.levels.push_back({h, w, start});
      start += static_cast<std::int64_t>(h) * w;
    }
    memory.tokens = rand_tensor(rng, {start, d});
    const Tensor queries = rand_tensor(rng, {T, d});
    std::vector<double> refs(2 * T);
    std::uniform_real_distribution<double> u(-0.1, 1.1);
    for (auto& v : refs) v = u(rng);

    const Tensor got = attn(queries, refs, attn.project_values(memory), memory);
    const auto want = naive_msdeform_attn(attn, queries, refs, memory);
    double scale = 1.0;
    for (double v : want) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < want.size(); ++i)
      worst = std::max(worst, std::abs(got.data()[i] - want[i]) / scale);
  }
  r.passed = worst <= kDeformTol;
  std::ostringstream msg;
  msg << configs << " configs, max scaled abs err " << worst;
  r.detail = msg.str();
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult hungarian_oracle_suite(int n5, int n6) {
  const auto t0 = Clock::now();
  SuiteResult r{"hungarian oracle", true, "", 0};
  int cost_mismatch = 0, assignment_mismatch = 0, total = 0;
  double worst = 0;
  std::mt19937_64 rng(31337);
  for (int size : {5, 6}) {
    const int count = size == 5 ? n5 : n6;
    for (int i = 0; i < count; ++i, ++total) {
      // Every other matrix uses small integers so that ties are common.
      const bool ties = i % 2 == 1;
      CostMatrix cost(size, std::vector<double>(size));
      for (auto& row : cost)
        for (auto& v : row)
          v = ties ? static_cast<double>(rng() % 4) : std::uniform_real_distribution<double>(0, 1)(rng);
      const MatchResult got = hungarian(cost);
      const MatchResult want = brute_force_assignment(cost);
      const double err = std::abs(got.cost - want.cost);
      worst = std::max(worst, err);
      if (err > 1e-9) ++cost_mismatch;
      if (got.pairs != want.pairs) ++assignment_mismatch;
    }
  }
  r.passed = cost_mismatch == 0 && assignment_mismatch == 0;
  std::ostringstream msg;
  msg << total << " matrices (" << n5 << " 5x5, " << n6 << " 6x6): " << cost_mismatch
      << " cost mismatches (max err " << worst << "), " << assignment_mismatch
      << " tie-break mismatches";
  r.detail = msg.str();
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult iou_oracle_suite(int pairs) {
  const auto t0 = Clock::now();
  SuiteResult r{"polygon IoU oracle", true, "", 0};
  std::mt19937_64 rng(4242);
  std::vector<std::pair<std::vector<Point>, std::vector<Point>>> cases;
  for (int i = 0; i < pairs; ++i) {
    auto a = random_convex_polygon(rng);
    cases.emplace_back(std::move(a), random_convex_polygon(rng));
  }
  double worst = 0;
#pragma omp parallel for reduction(max : worst) schedule(dynamic)
  for (int i = 0; i < pairs; ++i) {
    const auto& [a, b] = cases[i];
    worst = std::max(worst, std::abs(polygon_iou(a, b) - raster_iou(a, b)));
  }
  r.passed = worst <= kIouTol;
  std::ostringstream msg;
  msg << pairs << " convex pairs at 512x512, max abs err " << worst;
  r.detail = msg.str();
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult center_predictor_suite(int configs) {
  const auto t0 = Clock::now();
  SuiteResult r{"center predictor oracle", true, "", 0};
  double worst = 0;
  for (int i = 0; i < configs; ++i) {
    std::mt19937_64 rng(777 + i);
    ModelConfig c = ModelConfig::gradcheck();
    c.d_model = 8 * std::uniform_int_distribution<int>(1, 2)(rng);
    c.n_boundary = 2 * std::uniform_int_distribution<int>(2, 4)(rng);
    c.max_text_len = std::uniform_int_distribution<int>(1, 5)(rng);
    c.n_queries = std::uniform_int_distribution<int>(1, 3)(rng);
    c.raw_center_attention = i % 2 == 1;
    c.hlpe_off = i % 4 == 2;
    SpotterModel model(c, rng());
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (auto& [name, t] : model.parameters())
      for (auto& v : t.mutable_data()) v += jitter(rng);

    DecoderState state;
    const int Q = c.n_queries, M = c.max_text_len, N = c.n_boundary, d = c.d_model;
    state.boundary_queries = rand_tensor(rng, {Q, N, d});
    state.char_queries = rand_tensor(rng, {Q, M, d});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int q = 0; q < Q; ++q) state.proposal_centers.push_back({u(rng), u(rng)});
    state.boundary_refs.resize(static_cast<std::size_t>(Q) * N * 2);
    state.char_refs.resize(static_cast<std::size_t>(Q) * M * 2);
    for (auto& v : state.boundary_refs) v = u(rng);
    for (auto& v : state.char_refs) v = u(rng);

    // Positional inputs rebuilt independently from the sine embedding.
    std::vector<double> pos_n, pos_m;
    const auto slot = model.char_slot_embedding().data();
    for (int q = 0; q < Q; ++q) {
      for (int b = 0; b < N; ++b) {
        const std::size_t at = (static_cast<std::size_t>(q) * N + b) * 2;
        const Point p = c.hlpe_off ? state.proposal_centers[q]
                                   : Point{state.boundary_refs[at], state.boundary_refs[at + 1]};
        const auto e = sine_embedding(p, d);
        pos_n.insert(pos_n.end(), e.begin(), e.end());
      }
      for (int s = 0; s < M; ++s) {
        const std::size_t at = (static_cast<std::size_t>(q) * M + s) * 2;
        const Point p = c.hlpe_off ? state.proposal_centers[q]
                                   : Point{state.char_refs[at], state.char_refs[at + 1]};
        const auto e = sine_embedding(p, d);
        for (int k = 0; k < d; ++k) pos_m.push_back(e[k] + slot[s * d + k]);
      }
    }
    const auto want = naive_center_predictor(
        model.center_predictor(0), state.char_queries.data(), state.boundary_queries.data(), pos_m,
        pos_n, Q, M, N, d, c.raw_center_attention);
    const Tensor got = model.char_center_predictor(0, state);
    for (std::size_t k = 0; k < want.size(); ++k)
      worst = std::max(worst, std::abs(got.data()[k] - want[k]));
  }
  r.passed = worst <= 1e-12;
  std::ostringstream msg;
  msg << configs << " configs, max abs err " << worst;
  r.detail = msg.str();
  r.seconds = seconds_since(t0);
  return r;
}

}  // namespace hlspot::verify
