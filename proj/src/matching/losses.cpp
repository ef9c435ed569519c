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
#include <array>
#include <cmath>

#include "hlspot/matching.hpp"

namespace hlspot {

namespace {

// Probabilities are clipped before the logs so a saturated head still
// yields a finite cost.
constexpr double kProbEps = 1e-12;

Tensor zero() { return Tensor::scalar(0.0); }

std::vector<std::int64_t> query_rows(const MatchResult& match) {
  std::vector<std::int64_t> rows;
  for (const auto& [g, q] : match.pairs) rows.push_back(q);
  return rows;
}

std::array<double, 4> instance_box(const TextInstance& gt) {
  const Box b = bounding_box(gt.polygon.points());
  return {(b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2, b.x1 - b.x0, b.y1 - b.y0};
}

}  // namespace

MatchWeights MatchWeights::zeros() {
  MatchWeights w;
  w.cost_cls = w.cost_coord = w.cost_center = 0.0;
  w.cls = w.coord = w.ct = w.chr = w.giou = 0.0;
  return w;
}

double focal_cost(double prob, double alpha, double gamma) {
  const double p = std::clamp(prob, kProbEps, 1.0 - kProbEps);
  const double pos = alpha * std::pow(1.0 - p, gamma) * -std::log(p);
  const double neg = (1.0 - alpha) * std::pow(p, gamma) * -std::log(1.0 - p);
  return pos - neg;
}

double match_cost(const PredictedInstance& pred, const TextInstance& gt, const MatchWeights& w) {
  const auto gt_points = gt.polygon.points();
  if (pred.boundary.size() != gt_points.size())
    throw DimensionError("match_cost: " + std::to_string(pred.boundary.size()) +
                         " predicted boundary points vs " + std::to_string(gt_points.size()));
  double coord = 0.0;
  for (std::size_t n = 0; n < gt_points.size(); ++n) coord += distance(pred.boundary[n], gt_points[n]);
  double cost = w.cost_cls * focal_cost(pred.prob, w.alpha, w.gamma) + w.cost_coord * coord;

  const std::size_t c = gt.transcription.size();
  if (gt.centers_available && c > 0) {
    if (pred.centers.size() < c || gt.char_centers.size() < c)
      throw DimensionError("match_cost: fewer center slots than characters");
    double center = 0.0;
    for (std::size_t i = 0; i < c; ++i) center += distance(pred.centers[i], gt.char_centers[i]);
    cost += w.cost_center / static_cast<double>(c) * center;
  }
  return cost;
}

PredictedInstance predicted_instance(const LayerPrediction& layer, int query) {
  PredictedInstance p;
  p.prob = 1.0 / (1.0 + std::exp(-layer.class_logits[query]));
  const std::int64_t n = layer.boundary.dim(1), m = layer.centers.dim(1);
  const auto b = layer.boundary.data();
  const auto c = layer.centers.data();
  for (std::int64_t k = 0; k < n; ++k)
    p.boundary.push_back({b[(query * n + k) * 2], b[(query * n + k) * 2 + 1]});
  for (std::int64_t k = 0; k < m; ++k)
    p.centers.push_back({c[(query * m + k) * 2], c[(query * m + k) * 2 + 1]});
  return p;
}

CostMatrix decoder_cost_matrix(const LayerPrediction& layer, std::span<const TextInstance> gts,
                               const MatchWeights& w) {
  const int q = static_cast<int>(layer.class_logits.numel());
  std::vector<PredictedInstance> preds;
  for (int i = 0; i < q; ++i) preds.push_back(predicted_instance(layer, i));
  CostMatrix cost(gts.size(), std::vector<double>(q));
  for (std::size_t g = 0; g < gts.size(); ++g)
    for (int i = 0; i < q; ++i) cost[g][i] = match_cost(preds[i], gts[g], w);
  return cost;
}

DecoderLosses decoder_losses(const LayerPrediction& layer, std::span<const TextInstance> gts,
                             const MatchResult& match, const Vocabulary& vocab,
                             const MatchWeights& w) {
  const std::int64_t q = layer.class_logits.numel();
  const std::int64_t n = layer.boundary.dim(1), m = layer.centers.dim(1);
  const std::int64_t v = layer.char_logits.dim(2);
  const std::int64_t g = static_cast<std::int64_t>(match.pairs.size());
  const double norm = static_cast<double>(std::max<std::int64_t>(g, 1));

  std::vector<double> targets(q, 0.0);
  for (const auto& [gi, qi] : match.pairs) targets[qi] = 1.0;
  DecoderLosses out;
  out.cls = scale(sigmoid_focal_loss(layer.class_logits, targets, w.alpha, w.gamma), 1.0 / norm);
  out.coord = out.ct = out.chr = zero();

  if (g > 0) {
    const auto rows = query_rows(match);
    std::vector<double> boundary_target;
    std::vector<std::int64_t> ct_rows, char_ids;
    std::vector<double> ct_target;
    for (const auto& [gi, qi] : match.pairs) {
      const TextInstance& gt = gts[gi];
      const auto pts = gt.polygon.points();
      if (static_cast<std::int64_t>(pts.size()) != n)
        throw DimensionError("ground truth has " + std::to_string(pts.size()) +
                             " boundary points, model predicts " + std::to_string(n));
      for (const auto& p : pts) {
        boundary_target.push_back(p.x);
        boundary_target.push_back(p.y);
      }
      if (gt.centers_available) {
        ct_rows.push_back(qi);
        for (const auto& p : char_center_targets(gt, static_cast<int>(m))) {
          ct_target.push_back(p.x);
          ct_target.push_back(p.y);
        }
      }
      if (static_cast<std::int64_t>(gt.transcription.size()) > m)
        throw ContractError("word '" + gt.transcription + "' exceeds " + std::to_string(m) +
                            " character slots");
      for (std::int64_t s = 0; s < m; ++s) {
        if (s < static_cast<std::int64_t>(gt.transcription.size())) {
          const int id = vocab.encode(gt.transcription[s]);
          if (id < 0)
            throw ContractError("character '" + std::string(1, gt.transcription[s]) +
                                "' is outside the vocabulary");
          char_ids.push_back(id);
        } else {
          char_ids.push_back(vocab.empty_class());
        }
      }
    }
    const Tensor boundary = index_select(reshape(layer.boundary, {q, n * 2}), rows);
    out.coord = mean(abs(sub(boundary, Tensor({g, n * 2}, std::move(boundary_target)))));
    if (!ct_rows.empty()) {
      const std::int64_t a = static_cast<std::int64_t>(ct_rows.size());
      const Tensor centers = index_select(reshape(layer.centers, {q, m * 2}), ct_rows);
      out.ct = mean(abs(sub(centers, Tensor({a, m * 2}, std::move(ct_target)))));
    }
    const Tensor logits =
        reshape(index_select(reshape(layer.char_logits, {q, m * v}), rows), {g * m, v});
    out.chr = scale(cross_entropy(logits, char_ids), 1.0 / static_cast<double>(g * m));
  }
  out.total = add(add(scale(out.cls, w.cls), scale(out.coord, w.coord)),
                  add(scale(out.ct, w.ct), scale(out.chr, w.chr)));
  return out;
}

double box_giou(const double* a, const double* b) {
  const double ax1 = a[0] - a[2] / 2, ax2 = a[0] + a[2] / 2;
  const double ay1 = a[1] - a[3] / 2, ay2 = a[1] + a[3] / 2;
  const double bx1 = b[0] - b[2] / 2, bx2 = b[0] + b[2] / 2;
  const double by1 = b[1] - b[3] / 2, by2 = b[1] + b[3] / 2;
  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = iw * ih;
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  const double encl = (std::max(ax2, bx2) - std::min(ax1, bx1)) *
                      (std::max(ay2, by2) - std::min(ay1, by1));
  if (uni <= 0 || encl <= 0) return 0.0;
  return inter / uni - (encl - uni) / encl;
}

Tensor encoder_losses(const EncoderOutput& encoder, std::span<const TextInstance> gts,
                      const MatchWeights& w) {
  const std::int64_t s = encoder.logits.numel();
  const std::int64_t g = static_cast<std::int64_t>(gts.size());
  const auto logits = encoder.logits.data();
  const auto boxes = encoder.boxes.data();

  std::vector<std::array<double, 4>> targets;
  for (const auto& gt : gts) targets.push_back(instance_box(gt));
  std::vector<double> cls_cost(s);
  for (std::int64_t i = 0; i < s; ++i)
    cls_cost[i] = focal_cost(1.0 / (1.0 + std::exp(-logits[i])), w.alpha, w.gamma);
  CostMatrix cost(g, std::vector<double>(s));
  for (std::int64_t gi = 0; gi < g; ++gi) {
    const double* t = targets[gi].data();
    for (std::int64_t i = 0; i < s; ++i) {
      const double* b = boxes.data() + 4 * i;
      double l1 = 0.0;
      for (int k = 0; k < 4; ++k) l1 += std::abs(b[k] - t[k]);
      cost[gi][i] = w.cost_cls * cls_cost[i] + w.cost_coord * l1 - w.giou * box_giou(b, t);
    }
  }
  const MatchResult match = hungarian(cost);

  const double norm = static_cast<double>(std::max<std::int64_t>(g, 1));
  std::vector<double> cls_targets(s, 0.0);
  for (const auto& [gi, i] : match.pairs) cls_targets[i] = 1.0;
  Tensor loss = scale(sigmoid_focal_loss(encoder.logits, cls_targets, w.alpha, w.gamma),
                      w.cls / norm);
  if (g > 0) {
    const Tensor matched = index_select(encoder.boxes, query_rows(match));
    std::vector<double> flat;
    for (const auto& [gi, i] : match.pairs) flat.insert(flat.end(), targets[gi].begin(), targets[gi].end());
    const Tensor l1 = sum(abs(sub(matched, Tensor({g, 4}, flat))));
    loss = add(loss, scale(l1, w.coord / norm));
    loss = add(loss, scale(giou_loss(matched, flat), w.giou / norm));
  }
  return loss;
}

LossBreakdown total_loss(const ForwardResult& result, std::span<const TextInstance> gts,
                         const Vocabulary& vocab, const MatchWeights& w) {
  LossBreakdown out;
  std::vector<TextInstance> supervised;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].dont_care) continue;
    out.supervised.push_back(static_cast<int>(i));
    supervised.push_back(gts[i]);
  }
  const Tensor enc = encoder_losses(result.encoder, supervised, w);
  out.enc = enc.item();
  const auto& layers = result.state.layers;
  out.match = hungarian(decoder_cost_matrix(layers.back(), supervised, w));
  Tensor total = enc;
  for (const auto& layer : layers) {
    DecoderLosses d = decoder_losses(layer, supervised, out.match, vocab, w);
    out.cls += d.cls.item();
    out.coord += d.coord.item();
    out.ct += d.ct.item();
    out.chr += d.chr.item();
    total = add(total, d.total);
    out.layers.push_back(std::move(d));
  }
  out.total = total;
  return out;
}

}  // namespace hlspot
