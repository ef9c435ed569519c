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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hlspot/matching.hpp"
#include "hlspot/verify.hpp"

namespace hlspot {
namespace {

double sigm(double x) { return 1 / (1 + std::exp(-x)); }

// Hand-expanded focal terms for one logit.
double focal_pos(double x, double a, double g) { return a * std::pow(1 - sigm(x), g) * -std::log(sigm(x)); }
double focal_neg(double x, double a, double g) {
  return (1 - a) * std::pow(sigm(x), g) * -std::log(1 - sigm(x));
}

TextInstance box_instance(double x0, double y0, double x1, double y1, std::string text,
                          bool centers) {
  TextInstance t;
  t.polygon = BoundaryPolygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
  t.transcription = std::move(text);
  t.centers_available = centers;
  const double ym = (y0 + y1) / 2;
  const std::size_t c = t.transcription.size();
  for (std::size_t i = 0; i < c; ++i) t.char_centers.push_back({x0 + (x1 - x0) * (i + 0.5) / c, ym});
  return t;
}

TEST(Hungarian, OneByOne) {
  auto r = hungarian({{4.2}});
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0], (std::pair<int, int>{0, 0}));
  EXPECT_DOUBLE_EQ(r.cost, 4.2);
}

TEST(Hungarian, DiagonalDominant) {
  CostMatrix c{{1, 9, 9}, {9, 1, 9}, {9, 9, 1}};
  auto r = hungarian(c);
  EXPECT_DOUBLE_EQ(r.cost, 3.0);
  for (int g = 0; g < 3; ++g) EXPECT_EQ(r.pairs[g], (std::pair<int, int>{g, g}));
  EXPECT_EQ(verify::brute_force_assignment(c).cost, 3.0);
}

TEST(Hungarian, RectangularListsUnmatched) {
  CostMatrix c{{5, 1, 7, 3}, {2, 8, 6, 4}};
  auto r = hungarian(c);
  EXPECT_DOUBLE_EQ(r.cost, 3.0);
  EXPECT_EQ(r.pairs[0].second, 1);
  EXPECT_EQ(r.pairs[1].second, 0);
  EXPECT_EQ(r.unmatched, (std::vector<int>{2, 3}));
}

TEST(Hungarian, EmptyRows) {
  auto r = hungarian(CostMatrix{});
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.cost, 0.0);
}

TEST(Hungarian, TiesBreakLexicographically) {
  auto r = hungarian({{1, 1}, {1, 1}});
  EXPECT_EQ(r.pairs[0].second, 0);
  EXPECT_EQ(r.pairs[1].second, 1);
}

TEST(Hungarian, ContractViolations) {
  EXPECT_THROW(hungarian({{1}, {2}}), ContractError);
  EXPECT_THROW(hungarian({{1, NAN}}), ContractError);
}

TEST(Hungarian, MatchesBruteForce) {
  auto r = verify::hungarian_oracle_suite(1000, 200);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Hungarian, InvariantToPositiveScaling) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0, 10);
  for (int trial = 0; trial < 100; ++trial) {
    CostMatrix c(4, std::vector<double>(6)), s = c;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 6; ++j) {
        c[i][j] = std::round(u(rng));  // integers make ties common
        s[i][j] = c[i][j] * 3.5;
      }
    EXPECT_EQ(hungarian(c).pairs, hungarian(s).pairs);
  }
}

TEST(MatchCost, PerfectGeometryHasOnlyClassTerm) {
  auto gt = box_instance(0.1, 0.2, 0.5, 0.3, "AB", true);
  PredictedInstance p{0.7, {gt.polygon.points().begin(), gt.polygon.points().end()},
                      gt.char_centers};
  p.centers.push_back({0.9, 0.9});  // tail slot, outside |C|
  MatchWeights w;
  EXPECT_NEAR(match_cost(p, gt, w), w.cost_cls * focal_cost(0.7, w.alpha, w.gamma), 1e-15);
}

TEST(MatchCost, UnavailableCentersAreSkipped) {
  auto gt = box_instance(0.1, 0.2, 0.5, 0.3, "AB", false);
  PredictedInstance p{0.4, {{0.1, 0.25}, {0.5, 0.2}, {0.5, 0.3}, {0.1, 0.3}}, {{0.8, 0.8}, {0, 0}}};
  MatchWeights w;
  const double expected = w.cost_cls * focal_cost(0.4, w.alpha, w.gamma) + w.cost_coord * 0.05;
  EXPECT_NEAR(match_cost(p, gt, w), expected, 1e-14);
  // Dropping the center weight on an annotated instance gives the same cost.
  gt.centers_available = true;
  w.cost_center = 0;
  EXPECT_NEAR(match_cost(p, gt, w), expected, 1e-14);
}

TEST(MatchCost, HandEvaluatedTwoCharacterCase) {
  auto gt = box_instance(0.2, 0.2, 0.6, 0.4, "AB", true);  // centers (0.3,0.3), (0.5,0.3)
  PredictedInstance p;
  p.prob = 0.8;
  for (auto q : gt.polygon.points()) p.boundary.push_back({q.x + 0.03, q.y + 0.04});  // 0.05 each
  p.centers = {{0.36, 0.38}, {0.5, 0.3}, {0.0, 0.0}};  // 0.1 and 0 on the real slots
  MatchWeights w;
  w.cost_cls = w.cost_coord = w.cost_center = 1.0;
  const double cls = 0.25 * 0.2 * 0.2 * -std::log(0.8) - 0.75 * 0.8 * 0.8 * -std::log(0.2);
  EXPECT_NEAR(cls, -0.7702987625, 1e-9);
  EXPECT_NEAR(match_cost(p, gt, w), cls + 4 * 0.05 + (0.1 + 0.0) / 2, 1e-12);
}

TEST(MatchCost, NonNegativeUnderPositiveOnlyFocal) {
  // With alpha = 1 the class term is (1-p)^g * -log p >= 0, so the whole
  // cost is non-negative and vanishes only for a certain, exact match.
  MatchWeights w;
  w.alpha = 1.0;
  auto gt = box_instance(0.2, 0.2, 0.6, 0.4, "ABC", true);
  std::vector<Point> exact(gt.polygon.points().begin(), gt.polygon.points().end());
  PredictedInstance p{1.0, exact, gt.char_centers};
  EXPECT_NEAR(match_cost(p, gt, w), 0.0, 1e-20);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    PredictedInstance q{u(rng), exact, gt.char_centers};
    q.boundary[i % 4].x += u(rng) * 0.1;
    EXPECT_GT(match_cost(q, gt, w), 0.0);
  }
}

// Q = 2 queries, N = 4 points, M = 3 slots, V = 5 classes ("ABCD" + empty).
struct TinyLayer {
  LayerPrediction layer;
  std::vector<double> cls, boundary, centers, chars;
};

TinyLayer tiny_layer(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95), z(-2, 2);
  TinyLayer t;
  t.cls = {z(rng), z(rng)};
  for (int i = 0; i < 2 * 4 * 2; ++i) t.boundary.push_back(u(rng));
  for (int i = 0; i < 2 * 3 * 2; ++i) t.centers.push_back(u(rng));
  for (int i = 0; i < 2 * 3 * 5; ++i) t.chars.push_back(z(rng));
  t.layer = {Tensor({2}, t.cls, true), Tensor({2, 4, 2}, t.boundary, true),
             Tensor({2, 3, 2}, t.centers, true), Tensor({2, 3, 5}, t.chars, true)};
  return t;
}

TEST(DecoderLosses, PerfectPredictionLeavesOnlyCrossEntropy) {
  std::mt19937_64 rng(43);
  TinyLayer t = tiny_layer(rng);
  auto gt = box_instance(0.2, 0.3, 0.6, 0.5, "AB", true);
  auto targets = char_center_targets(gt, 3);
  std::vector<double> b, c;
  for (auto p : gt.polygon.points()) b.insert(b.end(), {p.x, p.y});
  for (auto p : targets) c.insert(c.end(), {p.x, p.y});
  for (int i = 0; i < 8; ++i) t.boundary[8 + i] = b[i];
  for (int i = 0; i < 6; ++i) t.centers[6 + i] = c[i];
  LayerPrediction layer{Tensor({2}, t.cls), Tensor({2, 4, 2}, t.boundary),
                        Tensor({2, 3, 2}, t.centers), Tensor({2, 3, 5}, t.chars)};
  MatchResult match{{{0, 1}}, {0}, 0};
  auto vocab = Vocabulary::for_size(5);
  auto d = decoder_losses(layer, std::vector<TextInstance>{gt}, match, vocab, MatchWeights{});
  EXPECT_EQ(d.coord.item(), 0.0);
  EXPECT_EQ(d.ct.item(), 0.0);
  double ce = 0;
  const int ids[3] = {0, 1, 4};  // A, B, empty
  for (int s = 0; s < 3; ++s) {
    const double* row = t.chars.data() + (1 * 3 + s) * 5;
    double z = 0;
    for (int k = 0; k < 5; ++k) z += std::exp(row[k]);
    ce += -std::log(std::exp(row[ids[s]]) / z);
  }
  EXPECT_NEAR(d.chr.item(), ce / 3, 1e-12);
}

TEST(DecoderLosses, NoGroundTruthIsNegativeFocalOnly) {
  std::mt19937_64 rng(44);
  TinyLayer t = tiny_layer(rng);
  MatchWeights w;
  auto d = decoder_losses(t.layer, {}, MatchResult{{}, {0, 1}, 0}, Vocabulary::for_size(5), w);
  const double neg = focal_neg(t.cls[0], w.alpha, w.gamma) + focal_neg(t.cls[1], w.alpha, w.gamma);
  EXPECT_NEAR(d.cls.item(), neg, 1e-12);
  EXPECT_EQ(d.coord.item(), 0.0);
  EXPECT_EQ(d.ct.item(), 0.0);
  EXPECT_EQ(d.chr.item(), 0.0);
  EXPECT_NEAR(d.total.item(), w.cls * neg, 1e-12);
}

TEST(DecoderLosses, OneGroundTruthTwoPredictionsByHand) {
  std::mt19937_64 rng(45);
  TinyLayer t = tiny_layer(rng);
  auto gt = box_instance(0.25, 0.3, 0.65, 0.45, "CA", true);
  MatchWeights w;
  auto match = hungarian(decoder_cost_matrix(t.layer, std::vector<TextInstance>{gt}, w));
  ASSERT_EQ(match.pairs.size(), 1u);
  const int q = match.pairs[0].second;
  auto d = decoder_losses(t.layer, std::vector<TextInstance>{gt}, match, Vocabulary::for_size(5), w);

  const double cls = focal_pos(t.cls[q], w.alpha, w.gamma) + focal_neg(t.cls[1 - q], w.alpha, w.gamma);
  double coord = 0;
  auto pts = gt.polygon.points();
  for (int n = 0; n < 4; ++n)
    coord += std::abs(t.boundary[(q * 4 + n) * 2] - pts[n].x) +
             std::abs(t.boundary[(q * 4 + n) * 2 + 1] - pts[n].y);
  coord /= 8;
  // Slots: C, A, then the centerline tail.
  const Point tail = midpoint(pts[1], pts[2]);
  const Point want[3] = {gt.char_centers[0], gt.char_centers[1], tail};
  double ct = 0;
  for (int s = 0; s < 3; ++s)
    ct += std::abs(t.centers[(q * 3 + s) * 2] - want[s].x) +
          std::abs(t.centers[(q * 3 + s) * 2 + 1] - want[s].y);
  ct /= 6;
  double chr = 0;
  const int ids[3] = {2, 0, 4};
  for (int s = 0; s < 3; ++s) {
    const double* row = t.chars.data() + (q * 3 + s) * 5;
    double z = 0;
    for (int k = 0; k < 5; ++k) z += std::exp(row[k]);
    chr += std::log(z) - row[ids[s]];
  }
  chr /= 3;
  EXPECT_NEAR(d.cls.item(), cls, 1e-12);
  EXPECT_NEAR(d.coord.item(), coord, 1e-12);
  EXPECT_NEAR(d.ct.item(), ct, 1e-12);
  EXPECT_NEAR(d.chr.item(), chr, 1e-12);
  EXPECT_NEAR(d.total.item(), w.cls * cls + w.coord * coord + w.ct * ct + w.chr * chr, 1e-12);
}

TEST(DecoderLosses, UnavailableCentersContributeNothing) {
  std::mt19937_64 rng(46);
  TinyLayer t = tiny_layer(rng);
  auto with = box_instance(0.25, 0.3, 0.65, 0.45, "DB", true);
  auto without = with;
  without.centers_available = false;
  MatchResult match{{{0, 0}}, {1}, 0};
  auto vocab = Vocabulary::for_size(5);
  auto a = decoder_losses(t.layer, std::vector<TextInstance>{with}, match, vocab, MatchWeights{});
  auto b = decoder_losses(t.layer, std::vector<TextInstance>{without}, match, vocab, MatchWeights{});
  EXPECT_GT(a.ct.item(), 0.0);
  EXPECT_EQ(b.ct.item(), 0.0);
  EXPECT_EQ(a.coord.item(), b.coord.item());
  EXPECT_EQ(a.chr.item(), b.chr.item());
  // No gradient reaches the center head from an unsupervised instance.
  backward(b.total);
  if (t.layer.centers.has_grad()) {
    for (double g : t.layer.centers.grad()) EXPECT_EQ(g, 0.0);
  }
}

EncoderOutput encoder_with(std::vector<double> logits, std::vector<double> boxes) {
  EncoderOutput e;
  const auto s = static_cast<std::int64_t>(logits.size());
  e.logits = Tensor({s}, std::move(logits), true);
  e.boxes = Tensor({s, 4}, std::move(boxes), true);
  return e;
}

TEST(EncoderLosses, ExactBoxHasNoGeometryLoss) {
  auto gt = box_instance(0.2, 0.3, 0.6, 0.5, "AB", true);
  MatchWeights w;
  w.cls = 0;
  auto e = encoder_with({0.3}, {0.4, 0.4, 0.4, 0.2});
  EXPECT_NEAR(encoder_losses(e, std::vector<TextInstance>{gt}, w).item(), 0.0, 1e-14);
}

TEST(EncoderLosses, DisjointBoxesGiouAboveOne) {
  Tensor box({1, 4}, {0.1, 0.1, 0.1, 0.1});
  std::vector<double> target{0.9, 0.9, 0.1, 0.1};
  EXPECT_GT(giou_loss(box, target).item(), 1.0);
  EXPECT_LT(box_giou(box.data().data(), target.data()), 0.0);
}

TEST(EncoderLosses, MatchesDirectFormula) {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(0.1, 0.9), z(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    auto gt = box_instance(0.2, 0.3, 0.2 + u(rng) / 2, 0.3 + u(rng) / 2, "A", true);
    std::vector<double> logits{z(rng), z(rng), z(rng)}, boxes;
    for (int i = 0; i < 12; ++i) boxes.push_back(u(rng) * (i % 4 < 2 ? 1 : 0.5));
    MatchWeights w;
    const Box b = bounding_box(gt.polygon.points());
    const double t[4] = {(b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2, b.width(), b.height()};
    int best = -1;
    double best_cost = INFINITY;
    for (int i = 0; i < 3; ++i) {
      double l1 = 0;
      for (int k = 0; k < 4; ++k) l1 += std::abs(boxes[4 * i + k] - t[k]);
      const double p = sigm(logits[i]);
      const double c = w.cost_cls * focal_cost(p, w.alpha, w.gamma) + w.cost_coord * l1 -
                       w.giou * box_giou(&boxes[4 * i], t);
      if (c < best_cost) best_cost = c, best = i;
    }
    double focal = 0;
    for (int i = 0; i < 3; ++i)
      focal += i == best ? focal_pos(logits[i], w.alpha, w.gamma) : focal_neg(logits[i], w.alpha, w.gamma);
    double l1 = 0;
    for (int k = 0; k < 4; ++k) l1 += std::abs(boxes[4 * best + k] - t[k]);
    const double expected =
        w.cls * focal + w.coord * l1 + w.giou * (1 - box_giou(&boxes[4 * best], t));
    auto e = encoder_with(logits, boxes);
    EXPECT_NEAR(encoder_losses(e, std::vector<TextInstance>{gt}, w).item(), expected, 1e-12);
  }
}

class TotalLossTest : public ::testing::Test {
 protected:
  static std::vector<TextInstance> gts() {
    return {box_instance(0.1, 0.1, 0.5, 0.3, "AB", true), box_instance(0.5, 0.6, 0.9, 0.8, "D", false),
            box_instance(0.2, 0.5, 0.4, 0.7, "C", true)};
  }
  static Tensor image(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> v(3 * 32 * 32);
    for (auto& x : v) x = u(rng);
    return Tensor({3, 32, 32}, v);
  }
};

TEST_F(TotalLossTest, SingleLayerIsEncoderPlusDecoder) {
  auto cfg = ModelConfig::gradcheck();
  cfg.n_queries = 4;
  SpotterModel model(cfg, 3);
  auto res = model.forward(image(1));
  auto g = gts();
  g[2].dont_care = true;
  auto loss = total_loss(res, g, model.vocabulary(), MatchWeights{});
  EXPECT_EQ(loss.supervised, (std::vector<int>{0, 1}));
  ASSERT_EQ(loss.layers.size(), 1u);
  EXPECT_NEAR(loss.total.item(), loss.enc + loss.layers[0].total.item(), 1e-12);
}

TEST_F(TotalLossTest, ZeroWeightsGiveZero) {
  auto cfg = ModelConfig::gradcheck();
  cfg.n_queries = 4;
  SpotterModel model(cfg, 4);
  auto loss = total_loss(model.forward(image(2)), gts(), model.vocabulary(), MatchWeights::zeros());
  EXPECT_EQ(loss.total.item(), 0.0);
}

TEST_F(TotalLossTest, ThreeLayersSumIndependentRecomputation) {
  auto cfg = ModelConfig::gradcheck();
  cfg.n_queries = 4;
  cfg.n_dec_layers = 3;
  SpotterModel model(cfg, 5);
  for (auto& [name, t] : model.parameters())
    for (auto& v : t.mutable_data()) v += 0.01 * std::sin(v * 1e3 + name.size());
  auto res = model.forward(image(3));
  const auto g = gts();
  const MatchWeights w;
  auto loss = total_loss(res, g, model.vocabulary(), w);

  const auto& layers = res.state.layers;
  ASSERT_EQ(layers.size(), 3u);
  auto match = hungarian(decoder_cost_matrix(layers.back(), g, w));
  double expected = encoder_losses(res.encoder, g, w).item();
  for (const auto& layer : layers)
    expected += decoder_losses(layer, g, match, model.vocabulary(), w).total.item();
  EXPECT_NEAR(loss.total.item(), expected, 1e-12);
  EXPECT_EQ(loss.match.pairs, match.pairs);
}

}  // namespace
}  // namespace hlspot
