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
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hlspot/checkpoint.hpp"
#include "hlspot/geometry.hpp"
#include "hlspot/tensor.hpp"

namespace hlspot {

/// Character set of the recognizer. Class V-1 is the empty (padding) class.
class Vocabulary {
 public:
  Vocabulary() = default;
  /// `symbols` are the V-1 real characters.
  explicit Vocabulary(std::string symbols);
  static Vocabulary for_size(int vocab_size);

  int size() const { return static_cast<int>(symbols_.size()) + 1; }
  int empty_class() const { return size() - 1; }
  /// Class id of `c` (case-folded); -1 when unsupported.
  int encode(char c) const;
  char decode(int id) const;
  bool supports(const std::string& word) const;
  const std::string& symbols() const { return symbols_; }

 private:
  std::string symbols_;
};

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_levels = 3;
  int n_points = 4;
  int n_enc_layers = 3;
  int n_dec_layers = 3;
  int n_queries = 20;
  int n_boundary = 8;
  int max_text_len = 12;
  int vocab_size = 28;
  int ffn_dim = 128;
  int backbone_width = 32;

  // Ablations: pin boundary sampling / char sampling to the proposal center,
  // use the proposal-center positional embedding for every sub-component.
  bool hld_off = false;
  bool hlr_off = false;
  bool hlpe_off = false;

  /// Literal dot-product attention in the center predictor (no softmax).
  bool raw_center_attention = false;
  double score_threshold = 0.4;

  /// Desk-scale defaults.
  static ModelConfig desk();
  /// Small configuration used for overfit runs on 128x128 scenes.
  static ModelConfig micro();
  /// Published full-scale values.
  static ModelConfig paper();
  /// Smallest configuration, used by end-to-end gradient checks.
  static ModelConfig gradcheck();

  /// Throws ContractError on inconsistent values.
  void validate() const;
};

/// L feature maps [d_model, H_l, W_l] at strides 4 * 2^l.
struct FeaturePyramid {
  std::vector<Tensor> maps;
};

/// Flattened pyramid tokens and their level layout.
struct Memory {
  Tensor tokens;  // [S, d_model]
  std::vector<kernels::LevelShape> levels;
};

struct Proposal {
  Point center;  // normalized
  double width = 0.0;
  double height = 0.0;
  double score = 0.0;  // objectness probability
  std::int64_t token = 0;
};

/// Dense per-location outputs of the proposal head.
struct EncoderOutput {
  Memory memory;
  Tensor logits;  // [S]
  Tensor boxes;   // [S, 4] sigmoid (cx, cy, w, h)
  std::vector<Proposal> proposals;  // top-Q, score-descending
};

/// Per-layer predictions used for supervision.
struct LayerPrediction {
  Tensor class_logits;  // [Q]
  Tensor boundary;      // [Q, N, 2]
  Tensor centers;       // [Q, M, 2]
  Tensor char_logits;   // [Q, M, V]
};

/// Decoder state carried between layers. Reference points are plain values
/// (cut from the graph), one (x, y) pair per sub-component.
struct DecoderState {
  Tensor boundary_queries;  // [Q, N, d]
  Tensor char_queries;      // [Q, M, d]
  std::vector<double> boundary_refs;  // Q * N * 2
  std::vector<double> char_refs;      // Q * M * 2
  std::vector<Point> proposal_centers;
  std::vector<LayerPrediction> layers;
};

/// Sampling locations recorded by one deformable attention call.
struct SamplingRecord {
  std::vector<double> base;       // T * 2 reference (base) points
  std::vector<double> locations;  // T * H * L * K * 2
  std::vector<double> weights;    // T * H * L * K
};

/// Per decoder layer sampling dump (boundary and character attention).
struct SamplingTrace {
  std::vector<SamplingRecord> boundary;
  std::vector<SamplingRecord> chars;
};

struct ForwardResult {
  EncoderOutput encoder;
  DecoderState state;
};

/// Values the forward pass uses as constants (cut from the graph): the
/// selected proposals and every layer's refined references. Recording them
/// on one pass and replaying them on another pins those paths, so finite
/// differences measure the same derivative as backprop.
struct DetachedValues {
  std::vector<Proposal> proposals;
  std::vector<std::vector<double>> boundary_refs;  // after each layer
  std::vector<std::vector<double>> char_refs;      // after each layer
};

/// One spotted word in normalized coordinates.
struct Detection {
  std::vector<Point> polygon;
  std::vector<Point> char_centers;
  std::vector<int> slots;  // character slot of each decoded character
  std::string text;
  double score = 0.0;
  int query = 0;
};

// ---------------------------------------------------------------------------
// Layers

class ParamStore;

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out] or undefined
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNorm {
  Tensor gamma, beta;
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

/// Linear layers with ReLU between them.
struct Mlp {
  std::vector<Linear> layers;
  Tensor operator()(const Tensor& x) const;
};

struct FeedForward {
  Linear expand, contract;
  LayerNorm norm;
  /// norm(x + contract(relu(expand(x))))
  Tensor operator()(const Tensor& x) const;
};

/// Standard multi-head attention over batched sequences.
struct MultiHeadAttention {
  Linear query, key, value, out;
  int heads = 1;
  /// query [B, T, d], key/value [B, S, d] -> [B, T, d]
  Tensor operator()(const Tensor& q, const Tensor& k, const Tensor& v) const;
};

/// Multi-scale deformable attention: offsets and weights are linear in the
/// query, weights are softmax-normalized over levels x points per head.
struct DeformableAttention {
  Linear value_proj;  // bias-free, realizes W'_h for all heads
  Linear offsets;     // d -> H * L * K * 2
  Linear weights;     // d -> H * L * K
  Linear out;         // realizes W_h for all heads
  int heads = 1, levels = 1, points = 1;

  /// memory [S, d] -> projected values [S, H, dh].
  Tensor project_values(const Memory& memory) const;
  /// queries [T, d]; refs T * 2 normalized base points -> [T, d].
  Tensor operator()(const Tensor& queries, std::span<const double> refs,
                    const Tensor& values, const Memory& memory,
                    SamplingRecord* record = nullptr) const;
};

/// Deterministic parameter factory and registry.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  Tensor uniform(const std::string& name, Shape shape, double bound);
  Tensor constant(const std::string& name, Shape shape, double value);
  Tensor xavier(const std::string& name, std::int64_t fan_in, std::int64_t fan_out);
  Linear linear(const std::string& name, std::int64_t in, std::int64_t out, bool bias = true);
  LayerNorm layer_norm(const std::string& name, std::int64_t dim);
  Mlp mlp(const std::string& name, std::int64_t in, std::int64_t hidden,
          std::int64_t out, int layers);

  TensorMap& tensors() { return tensors_; }
  const TensorMap& tensors() const { return tensors_; }

 private:
  Tensor add(const std::string& name, Tensor t);
  std::mt19937_64 rng_;
  TensorMap tensors_;
};

/// Sinusoidal encoding of a normalized (x, y): d/2 channels per axis,
/// alternating sin/cos over d/4 frequencies.
std::vector<double> sine_embedding(Point p, int d_model);
/// Row-wise embeddings of `points` (count * 2 values) -> [count, d].
Tensor sine_embedding_table(std::span<const double> points, int d_model);

// ---------------------------------------------------------------------------

/// The hyper-local deformable transformer text spotter.
class SpotterModel {
 public:
  SpotterModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  /// image [3, H, W] (already normalized) -> L maps.
  FeaturePyramid backbone_forward(const Tensor& image) const;
  EncoderOutput encoder_forward(const FeaturePyramid& pyramid) const;
  DecoderState init_decoder_state(const std::vector<Proposal>& proposals) const;
  /// Deformable attention + within/between-instance self-attention + FFN +
  /// inverse-sigmoid refinement. Appends a partial LayerPrediction.
  void boundary_decoder_layer(int layer, DecoderState& state, const Memory& memory,
                              SamplingTrace* trace = nullptr) const;
  /// Predicts character centers [Q, M, 2] and moves the char references.
  Tensor char_center_predictor(int layer, DecoderState& state) const;
  void char_decoder_layer(int layer, DecoderState& state, const Memory& memory,
                          SamplingTrace* trace = nullptr) const;

  ForwardResult forward(const Tensor& image, SamplingTrace* trace = nullptr,
                        DetachedValues* record = nullptr,
                        const DetachedValues* replay = nullptr) const;

  /// Final-layer detections with score >= threshold, score-descending.
  /// Throws ContractError unless weights were loaded or trained.
  std::vector<Detection> spot(const Tensor& image,
                              std::optional<double> threshold = std::nullopt,
                              SamplingTrace* trace = nullptr) const;

  TensorMap& parameters() { return params_.tensors(); }
  const TensorMap& parameters() const { return params_.tensors(); }
  /// Copies values from `weights`; every parameter must be present.
  void load(const TensorMap& weights);
  void mark_trained() { ready_ = true; }
  bool ready() const { return ready_; }

  /// Direct handles used by oracle tests.
  const DeformableAttention& encoder_attention(int layer) const { return enc_layers_.at(layer).attn; }
  const DeformableAttention& boundary_attention(int layer) const { return dec_layers_.at(layer).boundary_attn; }

  /// Tensor of the per-query center-predictor inputs, exposed for tests.
  struct CenterPredictor {
    Linear w_q, w_k, w_v;
    Mlp mlp;
  };
  const CenterPredictor& center_predictor(int layer) const { return dec_layers_.at(layer).center; }
  const Tensor& char_slot_embedding() const { return char_slot_embed_; }

 private:
  struct EncoderLayer {
    DeformableAttention attn;
    LayerNorm norm;
    FeedForward ffn;
  };
  struct DecoderLayer {
    DeformableAttention boundary_attn;
    LayerNorm boundary_norm;
    MultiHeadAttention intra;
    LayerNorm intra_norm;
    MultiHeadAttention inter;
    LayerNorm inter_norm;
    FeedForward boundary_ffn;
    Mlp boundary_delta;
    Linear class_head;
    CenterPredictor center;
    DeformableAttention char_attn;
    LayerNorm char_norm;
    MultiHeadAttention char_self;
    LayerNorm char_self_norm;
    FeedForward char_ffn;
    Linear char_head;
  };
  struct BackboneStage {
    Tensor conv_w, conv_b;      // stride-2 3x3
    Tensor refine_w, refine_b;  // stride-1 3x3
    Tensor proj_w, proj_b;      // 1x1 to d_model
  };

  Tensor positional(std::span<const double> refs, std::int64_t per_query,
                    const DecoderState& state) const;
  Tensor char_positional(std::span<const double> refs, const DecoderState& state) const;

  ModelConfig config_;
  Vocabulary vocab_;
  ParamStore params_;
  std::vector<BackboneStage> backbone_;
  Tensor level_embed_;
  std::vector<EncoderLayer> enc_layers_;
  Linear proposal_proj_;
  LayerNorm proposal_norm_;
  Linear proposal_class_;
  Mlp proposal_box_;
  Tensor boundary_query_embed_;
  Tensor char_slot_embed_;
  std::vector<DecoderLayer> dec_layers_;
  bool ready_ = false;
};

/// Parameters plus the architecture (as "config.*" scalars), ready for
/// save_checkpoint.
TensorMap model_state(const SpotterModel& model);
/// Architecture stored by model_state; CheckpointError when absent.
ModelConfig config_from_state(const TensorMap& state);

/// Converts 8-bit interleaved RGB to a normalized [3, H, W] tensor.
Tensor image_to_tensor(std::span<const std::uint8_t> rgb, int width, int height);

}  // namespace hlspot
