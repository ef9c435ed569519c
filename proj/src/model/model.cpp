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

#include "hlspot/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>

namespace hlspot {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::string symbols) : symbols_(std::move(symbols)) {}

Vocabulary Vocabulary::for_size(int vocab_size) {
  if (vocab_size < 2) throw ContractError("vocabulary needs at least 2 classes");
  if (vocab_size == 96) {
    std::string printable;
    for (char c = 32; c < 127; ++c) printable.push_back(c);
    return Vocabulary(printable);
  }
  const std::string base = "ABCDEFGHIJKLMNOPQRSTUVWXYZ 0123456789";
  if (vocab_size - 1 > static_cast<int>(base.size()))
    throw ContractError("no built-in character set with " + std::to_string(vocab_size) +
                        " classes");
  return Vocabulary(base.substr(0, vocab_size - 1));
}

int Vocabulary::encode(char c) const {
  auto pos = symbols_.find(c);
  if (pos == std::string::npos)
    pos = symbols_.find(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return pos == std::string::npos ? -1 : static_cast<int>(pos);
}

char Vocabulary::decode(int id) const {
  if (id < 0 || id >= static_cast<int>(symbols_.size())) return '\0';
  return symbols_[id];
}

bool Vocabulary::supports(const std::string& word) const {
  return std::all_of(word.begin(), word.end(), [&](char c) { return encode(c) >= 0; });
}

// ---------------------------------------------------------------------------
// Config

ModelConfig ModelConfig::desk() { return {}; }

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.d_model = 32;
  c.n_heads = 4;
  c.n_levels = 2;
  c.n_points = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 2;
  c.n_queries = 8;
  c.n_boundary = 8;
  c.max_text_len = 8;
  c.vocab_size = 28;
  c.ffn_dim = 64;
  c.backbone_width = 16;
  return c;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d_model = 256;
  c.n_heads = 8;
  c.n_levels = 4;
  c.n_points = 4;
  c.n_enc_layers = 6;
  c.n_dec_layers = 6;
  c.n_queries = 100;
  c.n_boundary = 16;
  c.max_text_len = 25;
  c.vocab_size = 96;
  c.ffn_dim = 1024;
  c.backbone_width = 64;
  return c;
}

ModelConfig ModelConfig::gradcheck() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 1;
  c.n_levels = 1;
  c.n_points = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.n_queries = 2;
  c.n_boundary = 4;
  c.max_text_len = 3;
  c.vocab_size = 5;
  c.ffn_dim = 16;
  c.backbone_width = 4;
  return c;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ContractError("model config: " + what);
  };
  require(d_model > 0 && n_heads > 0 && d_model % n_heads == 0,
          "d_model must be a positive multiple of n_heads");
  require(d_model % 4 == 0, "d_model must be divisible by 4 (sine embedding)");
  require(n_levels >= 1 && n_points >= 1, "need at least one level and one sampling point");
  require(n_enc_layers >= 0 && n_dec_layers >= 1, "need at least one decoder layer");
  require(n_queries >= 1, "need at least one query");
  require(n_boundary >= 4 && n_boundary % 2 == 0, "n_boundary must be even and >= 4");
  require(max_text_len >= 1, "max_text_len must be positive");
  require(vocab_size >= 2, "vocab_size must be >= 2");
  require(ffn_dim > 0 && backbone_width > 0, "layer widths must be positive");
  require(score_threshold >= 0.0 && score_threshold <= 1.0, "score_threshold outside [0, 1]");
}

// ---------------------------------------------------------------------------
// Construction

namespace {

DeformableAttention make_deformable(ParamStore& p, const std::string& name,
                                    const ModelConfig& c) {
  DeformableAttention a;
  a.heads = c.n_heads;
  a.levels = c.n_levels;
  a.points = c.n_points;
  const std::int64_t d = c.d_model;
  const std::int64_t hlk = static_cast<std::int64_t>(c.n_heads) * c.n_levels * c.n_points;
  a.value_proj = p.linear(name + ".value", d, d, false);
  // Offsets start at zero weight with a per-head ring of directions in the
  // bias, so initial sampling already spreads around the reference point.
  a.offsets.weight = p.constant(name + ".offsets.weight", {d, hlk * 2}, 0.0);
  a.offsets.bias = p.constant(name + ".offsets.bias", {hlk * 2}, 0.0);
  auto bias = a.offsets.bias.mutable_data();
  for (int h = 0; h < c.n_heads; ++h) {
    const double theta = 2.0 * std::numbers::pi * h / c.n_heads;
    double gx = std::cos(theta), gy = std::sin(theta);
    const double norm = std::max(std::abs(gx), std::abs(gy));
    gx /= norm;
    gy /= norm;
    for (int l = 0; l < c.n_levels; ++l)
      for (int k = 0; k < c.n_points; ++k) {
        const std::size_t s = ((static_cast<std::size_t>(h) * c.n_levels + l) * c.n_points + k) * 2;
        bias[s] = gx * (k + 1);
        bias[s + 1] = gy * (k + 1);
      }
  }
  a.weights.weight = p.constant(name + ".weights.weight", {d, hlk}, 0.0);
  a.weights.bias = p.constant(name + ".weights.bias", {hlk}, 0.0);
  a.out = p.linear(name + ".out", d, d);
  return a;
}

MultiHeadAttention make_mha(ParamStore& p, const std::string& name, const ModelConfig& c) {
  MultiHeadAttention m;
  m.heads = c.n_heads;
  m.query = p.linear(name + ".q", c.d_model, c.d_model);
  m.key = p.linear(name + ".k", c.d_model, c.d_model);
  m.value = p.linear(name + ".v", c.d_model, c.d_model);
  m.out = p.linear(name + ".out", c.d_model, c.d_model);
  return m;
}

FeedForward make_ffn(ParamStore& p, const std::string& name, const ModelConfig& c) {
  return {p.linear(name + ".expand", c.d_model, c.ffn_dim),
          p.linear(name + ".contract", c.ffn_dim, c.d_model),
          p.layer_norm(name + ".norm", c.d_model)};
}

Tensor he_conv(ParamStore& p, const std::string& name, std::int64_t out, std::int64_t in,
               std::int64_t k) {
  return p.uniform(name, {out, in, k, k}, std::sqrt(6.0 / static_cast<double>(in * k * k)));
}

void zero_last_layer(Mlp& mlp) {
  auto& last = mlp.layers.back();
  for (auto& v : last.weight.mutable_data()) v = 0.0;
  for (auto& v : last.bias.mutable_data()) v = 0.0;
}

}  // namespace

SpotterModel::SpotterModel(ModelConfig config, std::uint64_t seed)
    : config_(config), params_(seed) {
  config_.validate();
  vocab_ = Vocabulary::for_size(config_.vocab_size);
  const auto& c = config_;
  const std::int64_t d = c.d_model, bw = c.backbone_width;

  std::int64_t in = 3;
  for (int l = 0; l <= c.n_levels; ++l) {
    // Stage 0 is the stride-2 stem; stages 1..L emit pyramid levels.
    const std::string name = "backbone." + std::to_string(l);
    BackboneStage s;
    s.conv_w = he_conv(params_, name + ".conv.weight", bw, in, 3);
    s.conv_b = params_.constant(name + ".conv.bias", {bw}, 0.0);
    if (l > 0) {
      s.refine_w = he_conv(params_, name + ".refine.weight", bw, bw, 3);
      s.refine_b = params_.constant(name + ".refine.bias", {bw}, 0.0);
      s.proj_w = params_.uniform(name + ".proj.weight", {d, bw, 1, 1},
                                 std::sqrt(6.0 / static_cast<double>(bw + d)));
      s.proj_b = params_.constant(name + ".proj.bias", {d}, 0.0);
    }
    backbone_.push_back(s);
    in = bw;
  }

  level_embed_ = params_.uniform("encoder.level_embed", {c.n_levels, d}, 0.1);
  for (int i = 0; i < c.n_enc_layers; ++i) {
    const std::string name = "encoder." + std::to_string(i);
    enc_layers_.push_back({make_deformable(params_, name + ".attn", c),
                           params_.layer_norm(name + ".norm", d),
                           make_ffn(params_, name + ".ffn", c)});
  }
  proposal_proj_ = params_.linear("proposal.proj", d, d);
  proposal_norm_ = params_.layer_norm("proposal.norm", d);
  proposal_class_ = params_.linear("proposal.class", d, 1);
  // Rarely-positive prior on objectness.
  for (auto& v : proposal_class_.bias.mutable_data()) v = -std::log((1 - 0.01) / 0.01);
  proposal_box_ = params_.mlp("proposal.box", d, d, 4, 3);
  zero_last_layer(proposal_box_);

  boundary_query_embed_ = params_.uniform("decoder.boundary_query", {c.n_boundary, d}, 1.0);
  char_slot_embed_ = params_.uniform("decoder.char_slot", {c.max_text_len, d}, 1.0);

  for (int j = 0; j < c.n_dec_layers; ++j) {
    const std::string name = "decoder." + std::to_string(j);
    DecoderLayer L;
    L.boundary_attn = make_deformable(params_, name + ".boundary_attn", c);
    L.boundary_norm = params_.layer_norm(name + ".boundary_norm", d);
    L.intra = make_mha(params_, name + ".intra", c);
    L.intra_norm = params_.layer_norm(name + ".intra_norm", d);
    L.inter = make_mha(params_, name + ".inter", c);
    L.inter_norm = params_.layer_norm(name + ".inter_norm", d);
    L.boundary_ffn = make_ffn(params_, name + ".boundary_ffn", c);
    L.boundary_delta = params_.mlp(name + ".boundary_delta", d, d, 2, 3);
    zero_last_layer(L.boundary_delta);
    L.class_head = params_.linear(name + ".class", d, 1);
    for (auto& v : L.class_head.bias.mutable_data()) v = -std::log((1 - 0.01) / 0.01);
    L.center.w_q = params_.linear(name + ".center.q", d, d);
    L.center.w_k = params_.linear(name + ".center.k", d, d);
    L.center.w_v = params_.linear(name + ".center.v", d, d);
    L.center.mlp = params_.mlp(name + ".center.mlp", d, d, 2, 3);
    L.char_attn = make_deformable(params_, name + ".char_attn", c);
    L.char_norm = params_.layer_norm(name + ".char_norm", d);
    L.char_self = make_mha(params_, name + ".char_self", c);
    L.char_self_norm = params_.layer_norm(name + ".char_self_norm", d);
    L.char_ffn = make_ffn(params_, name + ".char_ffn", c);
    L.char_head = params_.linear(name + ".char_head", d, c.vocab_size);
    dec_layers_.push_back(std::move(L));
  }
}

// ---------------------------------------------------------------------------
// Backbone and encoder

FeaturePyramid SpotterModel::backbone_forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("backbone expects an image [3, H, W], got " + shape_str(image.shape()));
  const std::int64_t div = std::int64_t{1} << (config_.n_levels + 1);
  if (image.dim(1) % div != 0 || image.dim(2) % div != 0)
    throw DimensionError("image " + std::to_string(image.dim(2)) + "x" +
                         std::to_string(image.dim(1)) + " is not divisible by " +
                         std::to_string(div));
  FeaturePyramid out;
  Tensor x = relu(conv2d(image, backbone_[0].conv_w, backbone_[0].conv_b, 2, 1));
  for (int l = 1; l <= config_.n_levels; ++l) {
    const auto& s = backbone_[l];
    x = relu(conv2d(x, s.conv_w, s.conv_b, 2, 1));
    x = relu(conv2d(x, s.refine_w, s.refine_b, 1, 1));
    out.maps.push_back(conv2d(x, s.proj_w, s.proj_b, 1, 0));
  }
  return out;
}

EncoderOutput SpotterModel::encoder_forward(const FeaturePyramid& pyramid) const {
  const auto& c = config_;
  const std::int64_t d = c.d_model;
  if (static_cast<int>(pyramid.maps.size()) != c.n_levels)
    throw DimensionError("encoder expects " + std::to_string(c.n_levels) + " levels, got " +
                         std::to_string(pyramid.maps.size()));
  EncoderOutput out;
  std::vector<Tensor> flat;
  std::vector<double> refs, pos_values;
  std::vector<std::int64_t> level_of_token;
  std::int64_t start = 0;
  for (int l = 0; l < c.n_levels; ++l) {
    const Tensor& map = pyramid.maps[l];
    const std::int64_t h = map.dim(1), w = map.dim(2);
    out.memory.levels.push_back({h, w, start});
    flat.push_back(transpose(reshape(map, {d, h * w}), 0, 1));
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        refs.push_back((x + 0.5) / static_cast<double>(w));
        refs.push_back((y + 0.5) / static_cast<double>(h));
        level_of_token.push_back(l);
      }
    start += h * w;
  }
  const std::int64_t s = start;
  const Tensor pos = add(sine_embedding_table(refs, c.d_model),
                         embedding_lookup(level_embed_, level_of_token));
  Tensor tokens = concat(flat, 0);
  for (const auto& layer : enc_layers_) {
    out.memory.tokens = tokens;
    const Tensor values = layer.attn.project_values(out.memory);
    const Tensor a = layer.attn(add(tokens, pos), refs, values, out.memory);
    tokens = layer.ffn(layer.norm(add(tokens, a)));
  }
  out.memory.tokens = tokens;

  // Proposal head: every location scores objectness and regresses a box
  // relative to its anchor.
  const Tensor feat = proposal_norm_(proposal_proj_(tokens));
  out.logits = reshape(proposal_class_(feat), {s});
  std::vector<double> anchors(s * 4);
  for (std::int64_t i = 0; i < s; ++i) {
    const double wh = 0.05 * std::pow(2.0, static_cast<double>(level_of_token[i]));
    anchors[4 * i] = refs[2 * i];
    anchors[4 * i + 1] = refs[2 * i + 1];
    anchors[4 * i + 2] = wh;
    anchors[4 * i + 3] = wh;
  }
  out.boxes = sigmoid(add(proposal_box_(feat), inverse_sigmoid(Tensor({s, 4}, anchors))));

  std::vector<std::int64_t> order(s);
  std::iota(order.begin(), order.end(), 0);
  const auto logits = out.logits.data();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) { return logits[a] > logits[b]; });
  const auto boxes = out.boxes.data();
  const std::int64_t q = std::min<std::int64_t>(c.n_queries, s);
  for (std::int64_t i = 0; i < c.n_queries; ++i) {
    // Fewer tokens than queries only happens in toy configs; wrap around.
    const std::int64_t t = order[i % q];
    out.proposals.push_back({{boxes[4 * t], boxes[4 * t + 1]},
                             boxes[4 * t + 2],
                             boxes[4 * t + 3],
                             1.0 / (1.0 + std::exp(-logits[t])),
                             t});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoder

DecoderState SpotterModel::init_decoder_state(const std::vector<Proposal>& proposals) const {
  const auto& c = config_;
  const std::int64_t q = static_cast<std::int64_t>(proposals.size());
  DecoderState state;
  state.boundary_queries = expand_leading(boundary_query_embed_, q);
  state.char_queries = Tensor::zeros({q, c.max_text_len, c.d_model});
  for (const auto& p : proposals) {
    state.proposal_centers.push_back(p.center);
    for (int n = 0; n < c.n_boundary; ++n) {
      state.boundary_refs.push_back(p.center.x);
      state.boundary_refs.push_back(p.center.y);
    }
    for (int m = 0; m < c.max_text_len; ++m) {
      state.char_refs.push_back(p.center.x);
      state.char_refs.push_back(p.center.y);
    }
  }
  return state;
}

namespace {

// Every sub-component of proposal i pinned to the proposal center.
std::vector<double> repeat_centers(const std::vector<Point>& centers, std::int64_t per_query) {
  std::vector<double> out;
  out.reserve(centers.size() * per_query * 2);
  for (const auto& p : centers)
    for (std::int64_t k = 0; k < per_query; ++k) {
      out.push_back(p.x);
      out.push_back(p.y);
    }
  return out;
}

}  // namespace

Tensor SpotterModel::positional(std::span<const double> refs, std::int64_t per_query,
                                const DecoderState& state) const {
  const std::int64_t q = static_cast<std::int64_t>(state.proposal_centers.size());
  if (config_.hlpe_off) {
    const auto pinned = repeat_centers(state.proposal_centers, per_query);
    return reshape(sine_embedding_table(pinned, config_.d_model), {q, per_query, config_.d_model});
  }
  return reshape(sine_embedding_table(refs, config_.d_model), {q, per_query, config_.d_model});
}

Tensor SpotterModel::char_positional(std::span<const double> refs,
                                     const DecoderState& state) const {
  const std::int64_t q = static_cast<std::int64_t>(state.proposal_centers.size());
  return add(positional(refs, config_.max_text_len, state),
             expand_leading(char_slot_embed_, q));
}

void SpotterModel::boundary_decoder_layer(int layer, DecoderState& state, const Memory& memory,
                                          SamplingTrace* trace) const {
  const auto& L = dec_layers_.at(layer);
  const auto& c = config_;
  const std::int64_t q = static_cast<std::int64_t>(state.proposal_centers.size());
  const std::int64_t n = c.n_boundary, d = c.d_model;

  const Tensor pos = positional(state.boundary_refs, n, state);
  const Tensor composite = add(state.boundary_queries, pos);
  const std::vector<double> sample_refs =
      c.hld_off ? repeat_centers(state.proposal_centers, n) : state.boundary_refs;
  SamplingRecord* record = nullptr;
  if (trace) record = &trace->boundary.emplace_back();
  const Tensor values = L.boundary_attn.project_values(memory);
  const Tensor sampled = L.boundary_attn(reshape(composite, {q * n, d}), sample_refs, values,
                                         memory, record);
  Tensor x = L.boundary_norm(add(state.boundary_queries, reshape(sampled, {q, n, d})));

  // Within each instance (over N), then between instances (over Q).
  Tensor k = add(x, pos);
  x = L.intra_norm(add(x, L.intra(k, k, x)));
  k = transpose(add(x, pos), 0, 1);
  const Tensor xt = transpose(x, 0, 1);
  x = L.inter_norm(add(x, transpose(L.inter(k, k, xt), 0, 1)));
  x = L.boundary_ffn(x);

  const Tensor refs({q, n, 2}, state.boundary_refs);
  const Tensor points = sigmoid(add(L.boundary_delta(x), inverse_sigmoid(refs)));
  LayerPrediction pred;
  pred.class_logits = reshape(L.class_head(mean_axis(x, 1)), {q});
  pred.boundary = points;
  state.boundary_queries = x;
  state.boundary_refs.assign(points.data().begin(), points.data().end());
  state.layers.push_back(std::move(pred));
}

Tensor SpotterModel::char_center_predictor(int layer, DecoderState& state) const {
  const auto& P = dec_layers_.at(layer).center;
  const auto& c = config_;
  const Tensor pos_n = positional(state.boundary_refs, c.n_boundary, state);
  const Tensor pos_m = char_positional(state.char_refs, state);
  const Tensor queries = P.w_q(add(state.char_queries, pos_m));     // [Q, M, d]
  const Tensor keys = P.w_k(add(state.boundary_queries, pos_n));    // [Q, N, d]
  const Tensor values = P.w_v(state.boundary_queries);              // [Q, N, d]
  Tensor attn = matmul(queries, transpose(keys, 1, 2));             // [Q, M, N]
  if (!c.raw_center_attention)
    attn = softmax(scale(attn, 1.0 / std::sqrt(static_cast<double>(c.d_model))), -1);
  const Tensor centers = sigmoid(P.mlp(matmul(attn, values)));
  state.char_refs.assign(centers.data().begin(), centers.data().end());
  if (!state.layers.empty()) state.layers.back().centers = centers;
  return centers;
}

void SpotterModel::char_decoder_layer(int layer, DecoderState& state, const Memory& memory,
                                      SamplingTrace* trace) const {
  const auto& L = dec_layers_.at(layer);
  const auto& c = config_;
  const std::int64_t q = static_cast<std::int64_t>(state.proposal_centers.size());
  const std::int64_t m = c.max_text_len, d = c.d_model;

  const Tensor pos = char_positional(state.char_refs, state);
  const Tensor composite = add(state.char_queries, pos);
  const std::vector<double> sample_refs =
      c.hlr_off ? repeat_centers(state.proposal_centers, m) : state.char_refs;
  SamplingRecord* record = nullptr;
  if (trace) record = &trace->chars.emplace_back();
  const Tensor values = L.char_attn.project_values(memory);
  const Tensor sampled =
      L.char_attn(reshape(composite, {q * m, d}), sample_refs, values, memory, record);
  Tensor x = L.char_norm(add(state.char_queries, reshape(sampled, {q, m, d})));
  const Tensor k = add(x, pos);
  x = L.char_self_norm(add(x, L.char_self(k, k, x)));
  x = L.char_ffn(x);
  state.char_queries = x;
  if (!state.layers.empty()) state.layers.back().char_logits = L.char_head(x);
}

ForwardResult SpotterModel::forward(const Tensor& image, SamplingTrace* trace,
                                    DetachedValues* record, const DetachedValues* replay) const {
  ForwardResult r;
  r.encoder = encoder_forward(backbone_forward(image));
  if (replay) r.encoder.proposals = replay->proposals;
  if (record) *record = DetachedValues{r.encoder.proposals, {}, {}};
  r.state = init_decoder_state(r.encoder.proposals);
  for (int j = 0; j < config_.n_dec_layers; ++j) {
    boundary_decoder_layer(j, r.state, r.encoder.memory, trace);
    if (replay) r.state.boundary_refs = replay->boundary_refs.at(j);
    if (record) record->boundary_refs.push_back(r.state.boundary_refs);
    char_center_predictor(j, r.state);
    if (replay) r.state.char_refs = replay->char_refs.at(j);
    if (record) record->char_refs.push_back(r.state.char_refs);
    char_decoder_layer(j, r.state, r.encoder.memory, trace);
  }
  return r;
}

std::vector<Detection> SpotterModel::spot(const Tensor& image, std::optional<double> threshold,
                                          SamplingTrace* trace) const {
  if (!ready_) throw ContractError("spot() needs trained or loaded weights");
  NoGradGuard no_grad;
  const ForwardResult r = forward(image, trace);
  const auto& last = r.state.layers.back();
  const double thr = threshold.value_or(config_.score_threshold);
  const std::int64_t q = last.class_logits.numel();
  const std::int64_t n = config_.n_boundary, m = config_.max_text_len, v = config_.vocab_size;
  const auto logits = last.class_logits.data();
  const auto boundary = last.boundary.data();
  const auto centers = last.centers.data();
  const auto chars = last.char_logits.data();

  std::vector<Detection> out;
  for (std::int64_t i = 0; i < q; ++i) {
    const double score = 1.0 / (1.0 + std::exp(-logits[i]));
    if (score < thr) continue;
    Detection det;
    det.score = score;
    det.query = static_cast<int>(i);
    for (std::int64_t k = 0; k < n; ++k)
      det.polygon.push_back({boundary[(i * n + k) * 2], boundary[(i * n + k) * 2 + 1]});
    for (std::int64_t s = 0; s < m; ++s) {
      const double* row = chars.data() + (i * m + s) * v;
      const int id = static_cast<int>(std::max_element(row, row + v) - row);
      if (id == vocab_.empty_class()) continue;
      det.text.push_back(vocab_.decode(id));
      det.slots.push_back(static_cast<int>(s));
      det.char_centers.push_back({centers[(i * m + s) * 2], centers[(i * m + s) * 2 + 1]});
    }
    out.push_back(std::move(det));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

void SpotterModel::load(const TensorMap& weights) {
  for (auto& [name, param] : params_.tensors()) {
    const auto it = weights.find(name);
    if (it == weights.end()) throw CheckpointError("checkpoint lacks parameter " + name);
    if (it->second.shape() != param.shape())
      throw CheckpointError("parameter " + name + " has shape " +
                            shape_str(it->second.shape()) + ", model expects " +
                            shape_str(param.shape()));
    std::copy(it->second.data().begin(), it->second.data().end(), param.mutable_data().begin());
  }
  ready_ = true;
}

// ---------------------------------------------------------------------------

namespace {

struct ConfigField {
  const char* name;
  double (*get)(const ModelConfig&);
  void (*set)(ModelConfig&, double);
};

#define HLSPOT_INT_FIELD(f) \
  {#f, [](const ModelConfig& c) { return static_cast<double>(c.f); }, \
   [](ModelConfig& c, double v) { c.f = static_cast<int>(v); }}
#define HLSPOT_BOOL_FIELD(f) \
  {#f, [](const ModelConfig& c) { return c.f ? 1.0 : 0.0; }, \
   [](ModelConfig& c, double v) { c.f = v != 0.0; }}

const ConfigField kConfigFields[] = {
    HLSPOT_INT_FIELD(d_model),      HLSPOT_INT_FIELD(n_heads),
    HLSPOT_INT_FIELD(n_levels),     HLSPOT_INT_FIELD(n_points),
    HLSPOT_INT_FIELD(n_enc_layers), HLSPOT_INT_FIELD(n_dec_layers),
    HLSPOT_INT_FIELD(n_queries),    HLSPOT_INT_FIELD(n_boundary),
    HLSPOT_INT_FIELD(max_text_len), HLSPOT_INT_FIELD(vocab_size),
    HLSPOT_INT_FIELD(ffn_dim),      HLSPOT_INT_FIELD(backbone_width),
    HLSPOT_BOOL_FIELD(hld_off),     HLSPOT_BOOL_FIELD(hlr_off),
    HLSPOT_BOOL_FIELD(hlpe_off),    HLSPOT_BOOL_FIELD(raw_center_attention),
    {"score_threshold", [](const ModelConfig& c) { return c.score_threshold; },
     [](ModelConfig& c, double v) { c.score_threshold = v; }},
};

#undef HLSPOT_INT_FIELD
#undef HLSPOT_BOOL_FIELD

}  // namespace

TensorMap model_state(const SpotterModel& model) {
  TensorMap state;
  for (const auto& [name, t] : model.parameters()) state.emplace(name, t.detach());
  for (const auto& f : kConfigFields)
    state.emplace(std::string("config.") + f.name, Tensor::scalar(f.get(model.config())));
  return state;
}

ModelConfig config_from_state(const TensorMap& state) {
  ModelConfig c;
  for (const auto& f : kConfigFields) {
    const auto it = state.find(std::string("config.") + f.name);
    if (it == state.end())
      throw CheckpointError(std::string("checkpoint lacks config.") + f.name);
    f.set(c, it->second.item());
  }
  return c;
}

Tensor image_to_tensor(std::span<const std::uint8_t> rgb, int width, int height) {
  const std::int64_t plane = static_cast<std::int64_t>(width) * height;
  if (static_cast<std::int64_t>(rgb.size()) != plane * 3)
    throw DimensionError("RGB buffer of " + std::to_string(rgb.size()) + " bytes for a " +
                         std::to_string(width) + "x" + std::to_string(height) + " image");
  std::vector<double> values(plane * 3);
  for (std::int64_t i = 0; i < plane; ++i)
    for (int ch = 0; ch < 3; ++ch)
      values[ch * plane + i] = (rgb[i * 3 + ch] / 255.0 - 0.5) / 0.25;
  return Tensor({3, height, width}, std::move(values));
}

}  // namespace hlspot
