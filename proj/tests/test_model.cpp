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
#include <filesystem>
#include <random>

#include "hlspot/checkpoint.hpp"
#include "hlspot/model.hpp"
#include "hlspot/verify.hpp"

namespace hlspot {
namespace {

Tensor random_image(std::uint64_t seed, int h, int w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<double> v(3 * h * w);
  for (auto& x : v) x = u(rng);
  return Tensor({3, h, w}, v);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Moves every parameter a little so zero-initialized heads stop being inert.
void jitter(SpotterModel& model, std::uint64_t seed, double sigma = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, sigma);
  for (auto& [name, t] : model.parameters())
    for (auto& v : t.mutable_data()) v += n(rng);
}

ModelConfig small() {
  auto c = ModelConfig::micro();
  c.d_model = 16;
  c.n_heads = 2;
  c.n_queries = 4;
  c.n_boundary = 4;
  c.max_text_len = 4;
  c.ffn_dim = 32;
  c.backbone_width = 8;
  return c;
}

TEST(Config, PresetsValidate) {
  EXPECT_NO_THROW(ModelConfig::desk().validate());
  EXPECT_NO_THROW(ModelConfig::micro().validate());
  EXPECT_NO_THROW(ModelConfig::paper().validate());
  EXPECT_NO_THROW(ModelConfig::gradcheck().validate());
  auto bad = ModelConfig::micro();
  bad.n_boundary = 5;
  EXPECT_THROW(bad.validate(), ContractError);
  bad = ModelConfig::micro();
  bad.d_model = 30;  // not divisible by heads * 4
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(Vocabulary, EncodeDecode) {
  auto v = Vocabulary::for_size(28);
  EXPECT_EQ(v.size(), 28);
  EXPECT_EQ(v.empty_class(), 27);
  EXPECT_EQ(v.encode('A'), 0);
  EXPECT_EQ(v.encode('z'), 25);
  EXPECT_EQ(v.encode(' '), 26);
  EXPECT_EQ(v.encode('7'), -1);
  EXPECT_EQ(v.decode(2), 'C');
  EXPECT_TRUE(v.supports("LAKE"));
  EXPECT_FALSE(v.supports("A1"));
}

TEST(Backbone, StrideArithmetic) {
  auto c = ModelConfig::desk();
  c.backbone_width = 4;
  SpotterModel model(c, 1);
  auto p = model.backbone_forward(random_image(1, 64, 64));
  ASSERT_EQ(p.maps.size(), 3u);
  EXPECT_EQ(p.maps[0].shape(), (Shape{c.d_model, 16, 16}));
  EXPECT_EQ(p.maps[1].shape(), (Shape{c.d_model, 8, 8}));
  EXPECT_EQ(p.maps[2].shape(), (Shape{c.d_model, 4, 4}));
  EXPECT_THROW(model.backbone_forward(random_image(1, 60, 64)), DimensionError);
}

TEST(Backbone, ZeroImageGivesZeroPyramid) {
  SpotterModel model(small(), 2);
  auto p = model.backbone_forward(Tensor::zeros({3, 32, 32}));
  for (const auto& m : p.maps)
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, ConvWeightGradientsMatchFiniteDifferences) {
  auto c = ModelConfig::gradcheck();
  SpotterModel model(c, 3);
  jitter(model, 3);
  const Tensor image = random_image(3, 16, 16);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  auto probe = model.backbone_forward(image).maps[0];
  std::vector<double> w(probe.numel());
  for (auto& x : w) x = n(rng);
  const Tensor weights(probe.shape(), w);
  TensorMap backbone;
  for (auto& [name, t] : model.parameters())
    if (name.rfind("backbone.", 0) == 0) backbone[name] = t;
  auto loss = [&] { return sum(mul(model.backbone_forward(image).maps[0], weights)); };
  auto check = verify::gradcheck_params(loss, backbone, rng, 10, 40);
  EXPECT_LT(check.max_rel_err, 1e-5) << check.worst;
}

DeformableAttention single_point_attention(std::int64_t d, std::uint64_t seed) {
  ParamStore store(seed);
  DeformableAttention a;
  a.value_proj = store.linear("v", d, d, false);
  a.offsets = store.linear("o", d, 2);
  a.weights = store.linear("w", d, 1);
  a.out = store.linear("out", d, d);
  for (auto& v : a.offsets.weight.mutable_data()) v = 0;
  for (auto& v : a.offsets.bias.mutable_data()) v = 0;
  return a;
}

TEST(DeformableAttention, SinglePointCollapsesToProjectedRead) {
  const std::int64_t d = 4, h = 3, w = 5;
  auto attn = single_point_attention(d, 4);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::vector<double> tok(h * w * d), q(2 * d);
  for (auto& x : tok) x = n(rng);
  for (auto& x : q) x = n(rng);
  Memory mem{Tensor({h * w, d}, tok), {{h, w, 0}}};
  // Texel (col 3, row 1) centers and (col 0, row 2).
  const std::vector<double> refs{3.5 / w, 1.5 / h, 0.5 / w, 2.5 / h};
  const std::int64_t texel[2] = {1 * w + 3, 2 * w + 0};
  Tensor out = attn(Tensor({2, d}, q), refs, attn.project_values(mem), mem);
  const auto wv = attn.value_proj.weight.data(), wo = attn.out.weight.data(), bo = attn.out.bias.data();
  for (int t = 0; t < 2; ++t) {
    std::vector<double> v(d, 0.0);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) v[j] += tok[texel[t] * d + i] * wv[i * d + j];
    for (int j = 0; j < d; ++j) {
      double o = bo[j];
      for (int i = 0; i < d; ++i) o += v[i] * wo[i * d + j];
      EXPECT_NEAR(out[t * d + j], o, 1e-12);
    }
  }
}

TEST(DeformableAttention, HeadWeightsSumToOne) {
  auto c = small();
  c.n_points = 3;
  SpotterModel model(c, 5);
  jitter(model, 5, 0.5);
  SamplingTrace trace;
  model.forward(random_image(5, 32, 32), &trace);
  const int per_head = c.n_levels * c.n_points;
  for (const auto& rec : trace.boundary) {
    ASSERT_EQ(rec.weights.size() % per_head, 0u);
    for (std::size_t i = 0; i < rec.weights.size(); i += per_head) {
      double s = 0;
      for (int k = 0; k < per_head; ++k) s += rec.weights[i + k];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(DeformableAttention, MatchesNaiveLoops) {
  auto r = verify::deform_oracle_suite(50);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Encoder, ProposalsSortedAndInRange) {
  SpotterModel model(small(), 6);
  jitter(model, 6, 0.3);
  auto enc = model.encoder_forward(model.backbone_forward(random_image(6, 32, 32)));
  ASSERT_EQ(enc.proposals.size(), 4u);
  for (std::size_t i = 1; i < enc.proposals.size(); ++i)
    EXPECT_GE(enc.proposals[i - 1].score, enc.proposals[i].score);
  for (double v : enc.boxes.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(DecoderInit, ReferencesAtProposalCenters) {
  auto c = small();
  SpotterModel model(c, 7);
  std::vector<Proposal> props{{{0.2, 0.3}, 0.1, 0.1, 0.9, 0}, {{0.7, 0.6}, 0.2, 0.1, 0.5, 1}};
  auto s = model.init_decoder_state(props);
  for (int q = 0; q < 2; ++q) {
    for (int k = 0; k < c.n_boundary; ++k) {
      EXPECT_EQ(s.boundary_refs[(q * c.n_boundary + k) * 2], props[q].center.x);
      EXPECT_EQ(s.boundary_refs[(q * c.n_boundary + k) * 2 + 1], props[q].center.y);
    }
    for (int k = 0; k < c.max_text_len; ++k)
      EXPECT_EQ(s.char_refs[(q * c.max_text_len + k) * 2], props[q].center.x);
  }
  // Identical references give identical positional embeddings.
  auto pos = sine_embedding_table(s.boundary_refs, c.d_model);
  for (int k = 1; k < c.n_boundary; ++k)
    for (int j = 0; j < c.d_model; ++j) EXPECT_EQ(pos.at({k, j}), pos.at({0, j}));
  for (double v : s.char_queries.data()) EXPECT_EQ(v, 0.0);
}

TEST(Decoder, FirstLayerPredictsProposalCenters) {
  auto c = small();
  SpotterModel model(c, 8);  // fresh: delta heads are zero
  auto r = model.forward(random_image(8, 32, 32));
  const auto b = r.state.layers[0].boundary.data();
  for (int q = 0; q < c.n_queries; ++q)
    for (int k = 0; k < c.n_boundary; ++k) {
      EXPECT_NEAR(b[(q * c.n_boundary + k) * 2], r.state.proposal_centers[q].x, 1e-12);
      EXPECT_NEAR(b[(q * c.n_boundary + k) * 2 + 1], r.state.proposal_centers[q].y, 1e-12);
    }
}

TEST(Decoder, ReferenceWiringIsExact) {
  auto c = small();
  c.n_dec_layers = 3;
  SpotterModel model(c, 9);
  jitter(model, 9, 0.2);
  SamplingTrace trace;
  DetachedValues rec;
  auto r = model.forward(random_image(9, 32, 32), &trace, &rec);
  ASSERT_EQ(trace.boundary.size(), 3u);
  ASSERT_EQ(trace.chars.size(), 3u);
  for (int j = 0; j < 3; ++j) {
    const auto& layer = r.state.layers[j];
    EXPECT_EQ(rec.boundary_refs[j], values(layer.boundary));
    EXPECT_EQ(trace.chars[j].base, values(layer.centers));
    if (j + 1 < 3) {
      EXPECT_EQ(trace.boundary[j + 1].base, values(layer.boundary));
    }
    for (double v : layer.boundary.data()) EXPECT_TRUE(v >= 0 && v <= 1);
    for (double v : layer.centers.data()) EXPECT_TRUE(v >= 0 && v <= 1);
    EXPECT_EQ(layer.char_logits.shape(), (Shape{c.n_queries, c.max_text_len, c.vocab_size}));
  }
}

// Every base point of proposal q equals its first one.
void expect_collapsed(const std::vector<double>& base, int per_query, int queries) {
  for (int q = 0; q < queries; ++q)
    for (int k = 1; k < per_query; ++k) {
      EXPECT_EQ(base[(q * per_query + k) * 2], base[q * per_query * 2]);
      EXPECT_EQ(base[(q * per_query + k) * 2 + 1], base[q * per_query * 2 + 1]);
    }
}

TEST(Ablations, HldOffPinsBoundarySampling) {
  auto c = small();
  c.hld_off = true;
  SpotterModel model(c, 10);
  jitter(model, 10, 0.2);
  SamplingTrace trace;
  model.forward(random_image(10, 32, 32), &trace);
  for (const auto& rec : trace.boundary) expect_collapsed(rec.base, c.n_boundary, c.n_queries);
  // Character sampling is still hyper-local.
  bool spread = false;
  for (std::size_t i = 2; i < trace.chars.back().base.size(); i += 2)
    spread |= trace.chars.back().base[i] != trace.chars.back().base[0];
  EXPECT_TRUE(spread);
}

TEST(Ablations, HlrOffPinsCharacterSampling) {
  auto c = small();
  c.hlr_off = true;
  SpotterModel model(c, 11);
  jitter(model, 11, 0.2);
  SamplingTrace trace;
  model.forward(random_image(11, 32, 32), &trace);
  for (const auto& rec : trace.chars) expect_collapsed(rec.base, c.max_text_len, c.n_queries);
}

TEST(Ablations, AllFlagsCollapseToProposalCenter) {
  auto c = small();
  c.hld_off = c.hlr_off = c.hlpe_off = true;
  c.n_dec_layers = 2;
  SpotterModel model(c, 12);
  jitter(model, 12, 0.2);
  SamplingTrace trace;
  auto r = model.forward(random_image(12, 32, 32), &trace);
  const auto& centers = r.state.proposal_centers;
  auto check = [&](const std::vector<double>& base, int per) {
    for (int q = 0; q < c.n_queries; ++q)
      for (int k = 0; k < per; ++k) {
        EXPECT_EQ(base[(q * per + k) * 2], centers[q].x);
        EXPECT_EQ(base[(q * per + k) * 2 + 1], centers[q].y);
      }
  };
  for (const auto& rec : trace.boundary) check(rec.base, c.n_boundary);
  for (const auto& rec : trace.chars) check(rec.base, c.max_text_len);
}

TEST(CenterPredictor, IdenticalBoundaryQueriesActLikeASingleKey) {
  // With every value row equal, normalized attention returns that row no
  // matter the scores: centers = sigmoid(mlp(w_v q)).
  auto c = small();
  SpotterModel model(c, 13);
  jitter(model, 13, 0.3);
  std::vector<Proposal> props{{{0.3, 0.4}, 0.1, 0.1, 0.9, 0}, {{0.6, 0.5}, 0.1, 0.1, 0.8, 1}};
  auto state = model.init_decoder_state(props);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n;
  std::vector<double> row(c.d_model), qm(2 * c.max_text_len * c.d_model);
  for (auto& x : row) x = n(rng);
  for (auto& x : qm) x = n(rng);
  state.boundary_queries = expand_leading(expand_leading(Tensor({c.d_model}, row), c.n_boundary), 2);
  state.char_queries = Tensor({2, c.max_text_len, c.d_model}, qm);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (auto& v : state.boundary_refs) v = u(rng);
  auto centers = model.char_center_predictor(0, state);
  const auto& p = model.center_predictor(0);
  const Tensor expected = sigmoid(p.mlp(p.w_v(Tensor({1, c.d_model}, row))));
  for (int q = 0; q < 2; ++q)
    for (int m = 0; m < c.max_text_len; ++m) {
      EXPECT_NEAR(centers.at({q, m, 0}), expected[0], 1e-12);
      EXPECT_NEAR(centers.at({q, m, 1}), expected[1], 1e-12);
    }
}

TEST(CenterPredictor, MatchesLoopOracle) {
  auto r = verify::center_predictor_suite(40);
  EXPECT_TRUE(r.passed) << r.detail;
}

class CharLayerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    model_.emplace(small(), 14);
    jitter(*model_, 14, 0.2);
    auto r = model_->forward(random_image(14, 32, 32));
    memory_ = r.encoder.memory;
    state_ = r.state;
    state_.layers.clear();
  }
  std::optional<SpotterModel> model_;
  Memory memory_;
  DecoderState state_;
};

TEST_F(CharLayerTest, CharactersNeverAttendAcrossProposals) {
  const auto c = model_->config();
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n;
  std::vector<double> qm(c.n_queries * c.max_text_len * c.d_model);
  for (auto& x : qm) x = n(rng);
  DecoderState a = state_;
  a.char_queries = Tensor({c.n_queries, c.max_text_len, c.d_model}, qm);
  DecoderState b = a;
  // Perturb proposal 1's characters only.
  const std::int64_t block = c.max_text_len * c.d_model;
  for (std::int64_t i = block; i < 2 * block; ++i) qm[i] += 1.0;
  b.char_queries = Tensor({c.n_queries, c.max_text_len, c.d_model}, qm);
  model_->char_decoder_layer(0, a, memory_);
  model_->char_decoder_layer(0, b, memory_);
  const auto va = a.char_queries.data(), vb = b.char_queries.data();
  for (std::int64_t i = 0; i < block; ++i) EXPECT_EQ(va[i], vb[i]);  // proposal 0 untouched
  bool changed = false;
  for (std::int64_t i = block; i < 2 * block; ++i) changed |= va[i] != vb[i];
  EXPECT_TRUE(changed);
}

TEST_F(CharLayerTest, GradientsReachCharacterQueries) {
  const auto c = model_->config();
  std::mt19937_64 rng(16);
  std::normal_distribution<double> n;
  const Shape shape{c.n_queries, c.max_text_len, c.d_model};
  std::vector<double> qm(shape_numel(shape)), probe(shape_numel(shape));
  for (auto& x : qm) x = n(rng);
  for (auto& x : probe) x = n(rng);
  const Tensor weights(shape, probe);
  auto f = [&](const std::vector<Tensor>& in) {
    DecoderState s = state_;
    s.char_queries = in[0];
    model_->char_decoder_layer(0, s, memory_);
    return sum(mul(s.char_queries, weights));
  };
  auto check = verify::gradcheck(f, {Tensor(shape, qm, true)});
  EXPECT_LT(check.max_rel_err, 1e-5) << check.worst;
}

TEST(Spot, ThresholdZeroReturnsEveryQuerySorted) {
  auto c = small();
  SpotterModel model(c, 17);
  jitter(model, 17, 0.3);
  const Tensor img = random_image(17, 32, 32);
  EXPECT_THROW(model.spot(img), ContractError);
  model.mark_trained();
  auto dets = model.spot(img, 0.0);
  ASSERT_EQ(static_cast<int>(dets.size()), c.n_queries);
  for (std::size_t i = 1; i < dets.size(); ++i) EXPECT_GE(dets[i - 1].score, dets[i].score);
  for (const auto& d : dets) {
    EXPECT_EQ(d.polygon.size(), static_cast<std::size_t>(c.n_boundary));
    EXPECT_EQ(d.text.size(), d.char_centers.size());
    EXPECT_EQ(d.text.size(), d.slots.size());
  }
  EXPECT_LE(model.spot(img, 0.999).size(), dets.size());
}

TEST(Model, ForwardIsDeterministic) {
  SpotterModel a(small(), 18), b(small(), 18);
  const Tensor img = random_image(18, 32, 32);
  auto ra = a.forward(img), rb = b.forward(img);
  EXPECT_EQ(values(ra.state.layers.back().char_logits), values(rb.state.layers.back().char_logits));
  EXPECT_EQ(values(ra.state.layers.back().boundary), values(rb.state.layers.back().boundary));
}

TEST(Model, CheckpointRoundTrip) {
  auto c = small();
  c.hlr_off = true;
  SpotterModel a(c, 19);
  jitter(a, 19);
  const auto path = (std::filesystem::temp_directory_path() / "hlspot_model_rt.ckpt").string();
  save_checkpoint(path, model_state(a));
  const TensorMap state = load_checkpoint(path);
  std::filesystem::remove(path);
  const ModelConfig back = config_from_state(state);
  EXPECT_EQ(back.d_model, c.d_model);
  EXPECT_EQ(back.max_text_len, c.max_text_len);
  EXPECT_TRUE(back.hlr_off);
  SpotterModel b(back, 999);
  b.load(state);
  const Tensor img = random_image(19, 32, 32);
  EXPECT_EQ(values(a.forward(img).state.layers.back().centers),
            values(b.forward(img).state.layers.back().centers));

  TensorMap missing = state;
  missing.erase(missing.begin()->first == "config.d_model" ? std::next(missing.begin())->first
                                                           : missing.begin()->first);
  SpotterModel d(back, 1);
  EXPECT_THROW(d.load(missing), CheckpointError);
}

TEST(Model, EndToEndGradientCheck) {
  auto r = verify::model_gradient_suite(3);
  EXPECT_TRUE(r.passed) << r.detail;
}

}  // namespace
}  // namespace hlspot
