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

#include <span>
#include <utility>
#include <vector>

#include "hlspot/geometry.hpp"
#include "hlspot/model.hpp"
#include "hlspot/tensor.hpp"

namespace hlspot {

struct MatchWeights {
  // Matching cost.
  double cost_cls = 2.0;
  double cost_coord = 5.0;
  double cost_center = 1.0;
  // Loss.
  double cls = 2.0;
  double coord = 5.0;
  double ct = 1.0;
  double chr = 1.0;
  double giou = 2.0;
  // Focal.
  double alpha = 0.25;
  double gamma = 2.0;

  /// Every weight set to zero (alpha/gamma untouched).
  static MatchWeights zeros();
};

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (gt, prediction), gt ascending
  std::vector<int> unmatched;              // prediction indices, ascending
  double cost = 0.0;
};

using CostMatrix = std::vector<std::vector<double>>;

/// Minimum-cost assignment of every row to a distinct column. Among optimal
/// assignments the lexicographically smallest (phi(0), phi(1), ...) wins.
/// Throws ContractError when rows > cols or a cost is not finite.
MatchResult hungarian(const CostMatrix& cost);

/// Plain-value view of one predicted instance, used for matching.
struct PredictedInstance {
  double prob = 0.0;
  std::vector<Point> boundary;
  std::vector<Point> centers;
};

/// alpha (1-p)^gamma (-log p) - (1-alpha) p^gamma (-log(1-p))
double focal_cost(double prob, double alpha, double gamma);

/// Class + boundary + (optional) character-center cost of pairing `pred`
/// with `gt`. The center term covers the first |C| slots and is skipped when
/// centers are unavailable or the word is empty.
double match_cost(const PredictedInstance& pred, const TextInstance& gt, const MatchWeights& w);

PredictedInstance predicted_instance(const LayerPrediction& layer, int query);
CostMatrix decoder_cost_matrix(const LayerPrediction& layer, std::span<const TextInstance> gts,
                               const MatchWeights& w);

struct DecoderLosses {
  Tensor cls, coord, ct, chr;
  Tensor total;  // weighted sum
};

/// Losses of one decoder layer. `gts` are the supervised (non don't-care)
/// instances in normalized coordinates; `match` pairs them with queries.
DecoderLosses decoder_losses(const LayerPrediction& layer, std::span<const TextInstance> gts,
                             const MatchResult& match, const Vocabulary& vocab,
                             const MatchWeights& w);

/// Generalized IoU of two (cx, cy, w, h) boxes.
double box_giou(const double* a, const double* b);

/// Proposal-head loss: Hungarian on gt bounding boxes (focal + L1 + gIoU
/// cost), then lambda_cls * focal + lambda_coord * L1 + lambda_giou * gIoU.
Tensor encoder_losses(const EncoderOutput& encoder, std::span<const TextInstance> gts,
                      const MatchWeights& w);

struct LossBreakdown {
  Tensor total;
  double enc = 0.0;
  // Summed over decoder layers, unweighted.
  double cls = 0.0, coord = 0.0, ct = 0.0, chr = 0.0;
  std::vector<DecoderLosses> layers;
  MatchResult match;        // final-layer matching, indices into `supervised`
  std::vector<int> supervised;  // indices of non don't-care gts
};

/// L_enc + sum_j L_dec^(j). Don't-care instances are dropped before matching.
LossBreakdown total_loss(const ForwardResult& result, std::span<const TextInstance> gts,
                         const Vocabulary& vocab, const MatchWeights& w);

}  // namespace hlspot
