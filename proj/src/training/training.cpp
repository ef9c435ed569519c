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

#include "hlspot/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace hlspot {

namespace fs = std::filesystem;

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.lr = 1e-4;
  c.iterations = 400000;
  c.decay_step = 300000;
  c.batch_size = 8;
  c.snapshot_interval = 10000;
  c.log_interval = 100;
  c.augment = true;
  c.grad_clip = 0.1;
  c.finetune_iterations = 20000;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("train config: " + what); };
  if (!(lr > 0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(finetune_lr > 0)) fail("finetune_lr must be positive");
  if (!(decay_factor > 0 && decay_factor <= 1)) fail("decay_factor must be in (0, 1]");
  if (decay_step <= 0) fail("decay_step must be positive");
  if (iterations < 0 || finetune_iterations < 0) fail("iteration counts must be >= 0");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (snapshot_interval < 0) fail("snapshot_interval must be >= 0");
  if (log_interval <= 0) fail("log_interval must be positive");
  if (grad_clip < 0) fail("grad_clip must be >= 0");
  if (!(scale_min > 0 && scale_min <= scale_max)) fail("need 0 < scale_min <= scale_max");
  if (max_rounds <= 0) fail("max_rounds must be positive");
  if (!(stability_tol >= 0)) fail("stability_tol must be >= 0");
}

double learning_rate(double base, const TrainConfig& config, int iter) {
  return base * std::pow(config.decay_factor, iter / config.decay_step);
}

// ---------------------------------------------------------------------------
// Data

Sample make_sample(const std::string& name, const Image& image,
                   const std::vector<TextInstance>& pixel_instances) {
  Sample s;
  s.name = name;
  s.image = image_to_tensor(image.rgb, image.width, image.height);
  for (const auto& inst : pixel_instances)
    s.instances.push_back(normalize_instance(inst, image.width, image.height));
  return s;
}

std::vector<Sample> load_samples(const std::string& dir, const std::vector<AnnotatedImage>& index) {
  std::vector<Sample> out;
  out.reserve(index.size());
  for (const auto& entry : index) {
    const std::string path = (fs::path(dir) / entry.image).string();
    Image image;
    try {
      image = read_png(path);
    } catch (const ImageIoError& e) {
      throw DatasetError(e.what());
    }
    if (image.width != entry.width || image.height != entry.height)
      throw DatasetError(path + ": image is " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + " but the index says " +
                         std::to_string(entry.width) + "x" + std::to_string(entry.height));
    out.push_back(make_sample(entry.image, image, entry.instances));
  }
  return out;
}

Sample augment_sample(const Sample& sample, std::mt19937_64& rng, double scale_min,
                      double scale_max) {
  const auto H = sample.image.dim(1), W = sample.image.dim(2);
  const double s = std::uniform_real_distribution<double>(scale_min, scale_max)(rng);
  // Scaled canvas is W*s x H*s; a W x H window is cut at (ox, oy). When the
  // scaled image is smaller the window extends past it and edges are clamped.
  const double span_x = W * s - W, span_y = H * s - H;
  std::uniform_real_distribution<double> ux(std::min(0.0, span_x), std::max(0.0, span_x));
  std::uniform_real_distribution<double> uy(std::min(0.0, span_y), std::max(0.0, span_y));
  const double ox = std::round(ux(rng)), oy = std::round(uy(rng));

  const auto src = sample.image.data();
  std::vector<double> dst(src.size());
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      const double sx = std::clamp((x + 0.5 + ox) / s - 0.5, 0.0, W - 1.0);
      const double sy = std::clamp((y + 0.5 + oy) / s - 0.5, 0.0, H - 1.0);
      const auto x0 = static_cast<std::int64_t>(sx), y0 = static_cast<std::int64_t>(sy);
      const auto x1 = std::min<std::int64_t>(x0 + 1, W - 1), y1 = std::min<std::int64_t>(y0 + 1, H - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (std::int64_t c = 0; c < 3; ++c) {
        const double* p = src.data() + c * H * W;
        dst[(c * H + y) * W + x] = (1 - fy) * ((1 - fx) * p[y0 * W + x0] + fx * p[y0 * W + x1]) +
                                   fy * ((1 - fx) * p[y1 * W + x0] + fx * p[y1 * W + x1]);
      }
    }

  Sample out;
  out.name = sample.name;
  out.image = Tensor({3, H, W}, std::move(dst));
  auto map = [&](Point p) {
    return Point{(p.x * W * s - ox) / W, (p.y * H * s - oy) / H};
  };
  auto inside = [](Point p) { return p.x >= 0 && p.x <= 1 && p.y >= 0 && p.y <= 1; };
  for (const auto& inst : sample.instances) {
    TextInstance t = inst;
    std::vector<Point> pts;
    bool truncated = false;
    for (const auto& p : inst.polygon.points()) {
      pts.push_back(map(p));
      truncated |= !inside(pts.back());
    }
    t.polygon = BoundaryPolygon(std::move(pts));
    for (auto& c : t.char_centers) c = map(c);
    if (truncated) t.dont_care = true;
    out.instances.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(TensorMap& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto& [name, t] : params) {
    if (!t.requires_grad()) continue;
    const auto n = static_cast<std::size_t>(t.numel());
    slots_.push_back({t, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
}

void Adam::step(double lr, double grad_scale, double clip_norm) {
  if (clip_norm > 0) {
    double sq = 0;
    for (const auto& s : slots_)
      if (s.param.has_grad())
        for (double g : s.param.grad()) sq += g * g * grad_scale * grad_scale;
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) grad_scale *= clip_norm / norm;
  }
  ++t_;
  const double c1 = 1 - std::pow(beta1_, t_), c2 = 1 - std::pow(beta2_, t_);
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    const auto g = s.param.grad();
    auto p = s.param.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * grad_scale;
      s.m[i] = beta1_ * s.m[i] + (1 - beta1_) * gi;
      s.v[i] = beta2_ * s.v[i] + (1 - beta2_) * gi * gi;
      p[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps_);
    }
    s.param.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

void check_finite(const LossRecord& r, int iter, const std::string& sample) {
  const std::pair<const char*, double> terms[] = {{"L_enc", r.enc},     {"L_cls", r.cls},
                                                  {"L_coord", r.coord}, {"L_ct", r.ct},
                                                  {"L_char", r.chr},    {"total", r.total}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "non-finite " << name << " (" << v << ") at iteration " << iter << " on " << sample;
      throw NonFiniteLoss(msg.str());
    }
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

// Non-finite predictions would make matching fail before any loss exists;
// report them under the term they feed.
void check_finite(const ForwardResult& out, int iter, const std::string& sample) {
  const char* term = nullptr;
  if (!all_finite(out.encoder.logits) || !all_finite(out.encoder.boxes)) term = "L_enc";
  for (std::size_t j = 0; j < out.state.layers.size() && !term; ++j) {
    const auto& L = out.state.layers[j];
    if (!all_finite(L.class_logits)) term = "L_cls";
    else if (!all_finite(L.boundary)) term = "L_coord";
    else if (!all_finite(L.centers)) term = "L_ct";
    else if (!all_finite(L.char_logits)) term = "L_char";
  }
  if (!term) return;
  std::ostringstream msg;
  msg << "non-finite " << term << " (predictions) at iteration " << iter << " on " << sample;
  throw NonFiniteLoss(msg.str());
}

}  // namespace

std::vector<LossRecord> train(SpotterModel& model, const std::vector<Sample>& data,
                              const TrainConfig& config, const MatchWeights& weights,
                              const TrainHooks& hooks) {
  config.validate();
  if (data.empty()) throw ContractError("train: empty dataset");
  Adam adam(model.parameters());
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  std::vector<LossRecord> log;
  for (int iter = 0; iter < config.iterations; ++iter) {
    LossRecord rec;
    rec.iter = iter;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Sample& base = data[order[cursor++]];
      const Sample sample =
          config.augment ? augment_sample(base, rng, config.scale_min, config.scale_max) : base;
      const ForwardResult out = model.forward(sample.image);
      check_finite(out, iter, sample.name);
      const LossBreakdown loss = total_loss(out, sample.instances, model.vocabulary(), weights);
      LossRecord one{iter, loss.total.item(), loss.enc, loss.cls, loss.coord, loss.ct, loss.chr};
      check_finite(one, iter, sample.name);
      backward(loss.total);
      rec.total += one.total / config.batch_size;
      rec.enc += one.enc / config.batch_size;
      rec.cls += one.cls / config.batch_size;
      rec.coord += one.coord / config.batch_size;
      rec.ct += one.ct / config.batch_size;
      rec.chr += one.chr / config.batch_size;
    }
    adam.step(learning_rate(config.lr, config, iter), 1.0 / config.batch_size, config.grad_clip);
    log.push_back(rec);
    if (hooks.on_log && (iter % config.log_interval == 0 || iter + 1 == config.iterations))
      hooks.on_log(rec);
    if (hooks.on_snapshot && config.snapshot_interval > 0 &&
        (iter + 1) % config.snapshot_interval == 0)
      hooks.on_snapshot(iter + 1);
  }
  model.mark_trained();
  return log;
}

std::string loss_csv(const std::vector<LossRecord>& log, int log_interval) {
  std::ostringstream out;
  out.precision(9);
  out << "iter,total,L_enc,L_cls,L_coord,L_ct,L_char\n";
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log[i];
    if (r.iter % log_interval != 0 && i + 1 != log.size()) continue;
    out << r.iter << ',' << r.total << ',' << r.enc << ',' << r.cls << ',' << r.coord << ','
        << r.ct << ',' << r.chr << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Center acceptance

double CenterAcceptanceRecord::fraction(int round) const {
  if (candidates == 0) return 1.0;
  return static_cast<double>(history.at(round)) / candidates;
}

std::vector<TextInstance> accept_centers(const LayerPrediction& prediction,
                                         std::span<const TextInstance> gts,
                                         const MatchWeights& weights, std::vector<bool>* accepted) {
  const int M = static_cast<int>(prediction.centers.dim(1));
  std::vector<TextInstance> out(gts.begin(), gts.end());
  std::vector<bool> ok(gts.size(), false);

  std::vector<int> supervised;
  std::vector<TextInstance> sup_gts;
  for (std::size_t i = 0; i < gts.size(); ++i)
    if (!gts[i].dont_care) {
      supervised.push_back(static_cast<int>(i));
      sup_gts.push_back(gts[i]);
    }
  const int Q = static_cast<int>(prediction.class_logits.numel());
  if (!sup_gts.empty() && static_cast<int>(sup_gts.size()) <= Q) {
    const MatchResult match = hungarian(decoder_cost_matrix(prediction, sup_gts, weights));
    for (const auto& [g, q] : match.pairs) {
      const int gi = supervised[g];
      TextInstance& inst = out[gi];
      if (inst.centers_available) {
        ok[gi] = true;
        continue;
      }
      const auto c = static_cast<int>(inst.transcription.size());
      if (c > M) continue;
      const PredictedInstance pred = predicted_instance(prediction, q);
      bool all_inside = true;
      for (int k = 0; k < c; ++k)
        all_inside &= point_in_polygon(pred.centers[k], inst.polygon.points());
      if (!all_inside) continue;
      ok[gi] = true;
      inst.char_centers.assign(pred.centers.begin(), pred.centers.begin() + c);
      inst.centers_available = true;
      inst.char_centers = char_center_targets(inst, M);
    }
  }
  // Rejected words keep placeholder centers on the centerline tail; they are
  // not supervised while centers_available stays false.
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!ok[i] && !out[i].centers_available && !out[i].dont_care &&
        static_cast<int>(out[i].transcription.size()) <= M)
      out[i].char_centers = char_center_targets(out[i], M);
  if (accepted) *accepted = ok;
  return out;
}

FinetuneResult iterative_finetune(SpotterModel& model, const std::vector<Sample>& data,
                                  const TrainConfig& config, const MatchWeights& weights,
                                  const std::function<void(int, int)>& on_round) {
  config.validate();
  FinetuneResult result;
  for (const auto& s : data)
    for (const auto& inst : s.instances) result.record.candidates += inst.dont_care ? 0 : 1;

  TrainConfig ft = config;
  ft.lr = config.finetune_lr;
  ft.iterations = config.finetune_iterations;
  ft.snapshot_interval = 0;

  for (int round = 0; round < config.max_rounds; ++round) {
    std::vector<Sample> current;
    std::vector<std::vector<bool>> flags;
    int count = 0;
    {
      NoGradGuard no_grad;
      for (const auto& s : data) {
        const ForwardResult fwd = model.forward(s.image);
        std::vector<bool> ok;
        Sample next = s;
        next.instances = accept_centers(fwd.state.layers.back(), s.instances, weights, &ok);
        count += static_cast<int>(std::count(ok.begin(), ok.end(), true));
        flags.push_back(std::move(ok));
        current.push_back(std::move(next));
      }
    }
    result.record.history.push_back(count);
    result.record.accepted = std::move(flags);
    result.data = std::move(current);
    result.rounds = round + 1;
    if (on_round) on_round(round + 1, count);
    if (round > 0) {
      const int prev = result.record.history[round - 1];
      if (std::abs(count - prev) < config.stability_tol * std::max(prev, 1)) {
        result.converged = true;
        break;
      }
    }
    TrainConfig round_cfg = ft;
    round_cfg.seed = config.seed + static_cast<std::uint64_t>(round) + 1;
    if (ft.iterations > 0) train(model, result.data, round_cfg, weights);
  }
  return result;
}

}  // namespace hlspot
