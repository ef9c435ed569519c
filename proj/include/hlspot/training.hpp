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
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hlspot/dataset.hpp"
#include "hlspot/matching.hpp"
#include "hlspot/model.hpp"

namespace hlspot {

struct TrainConfig {
  double lr = 1e-4;
  double decay_factor = 0.1;
  int decay_step = 1500;
  int iterations = 2000;
  int batch_size = 2;
  std::uint64_t seed = 0;
  int snapshot_interval = 500;  // 0 disables snapshots
  int log_interval = 10;
  double grad_clip = 0.0;       // max global gradient norm; 0 disables

  // Random resize in [scale_min, scale_max] + crop back to the canvas.
  bool augment = false;
  double scale_min = 0.75, scale_max = 1.25;

  // Iterative center acceptance.
  int max_rounds = 5;
  double stability_tol = 0.01;
  double finetune_lr = 1e-5;
  int finetune_iterations = 200;

  /// Published full-scale schedule.
  static TrainConfig paper();
  /// Throws ContractError on inconsistent values.
  void validate() const;
};

/// Step decay: lr * decay_factor^floor(iter / decay_step).
double learning_rate(double base, const TrainConfig& config, int iter);

/// One training example: normalized image tensor and normalized instances.
struct Sample {
  std::string name;
  Tensor image;  // [3, H, W]
  std::vector<TextInstance> instances;
};

/// Loads images referenced by the dataset index in `dir`.
std::vector<Sample> load_samples(const std::string& dir, const std::vector<AnnotatedImage>& index);
Sample make_sample(const std::string& name, const Image& image,
                   const std::vector<TextInstance>& pixel_instances);

/// Random rescale + crop of a sample; instances that leave the canvas
/// become don't-care.
Sample augment_sample(const Sample& sample, std::mt19937_64& rng, double scale_min,
                      double scale_max);

/// Adam (beta = 0.9 / 0.999, eps = 1e-8) over a fixed parameter set.
class Adam {
 public:
  explicit Adam(TensorMap& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Applies one update from the accumulated gradients (scaled by
  /// `grad_scale`) and clears them.
  void step(double lr, double grad_scale = 1.0, double clip_norm = 0.0);
  int steps() const { return t_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

struct LossRecord {
  int iter = 0;
  double total = 0, enc = 0, cls = 0, coord = 0, ct = 0, chr = 0;
};

/// A loss term became NaN or infinite.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainHooks {
  std::function<void(const LossRecord&)> on_log;
  std::function<void(int iter)> on_snapshot;
};

/// Batch-mean loss terms, one record per iteration.
std::vector<LossRecord> train(SpotterModel& model, const std::vector<Sample>& data,
                              const TrainConfig& config, const MatchWeights& weights,
                              const TrainHooks& hooks = {});

/// CSV `iter,total,L_enc,L_cls,L_coord,L_ct,L_char`, rows every
/// `log_interval` iterations plus the final one.
std::string loss_csv(const std::vector<LossRecord>& log, int log_interval);

struct CenterAcceptanceRecord {
  /// Per sample, per instance: accepted this round.
  std::vector<std::vector<bool>> accepted;
  /// Accepted count after each round.
  std::vector<int> history;
  int candidates = 0;  // instances considered per round

  double fraction(int round) const;
};

/// Matches final-layer predictions to `gts` (normalized) and accepts an
/// instance's predicted centers when all |C| real ones fall inside its
/// polygon. Accepted instances get centers_available with tail fill;
/// rejected ones keep tail-point placeholders and stay unsupervised.
/// Instances that already carry centers are kept as they are.
std::vector<TextInstance> accept_centers(const LayerPrediction& prediction,
                                         std::span<const TextInstance> gts,
                                         const MatchWeights& weights, std::vector<bool>* accepted);

struct FinetuneResult {
  CenterAcceptanceRecord record;
  std::vector<Sample> data;  // dataset after the last round
  int rounds = 0;
  bool converged = false;  // stopped by the stability rule
};

/// Alternates finetuning and center acceptance until the accepted count
/// moves by less than `stability_tol` (relative) or `max_rounds` is hit.
/// Each round restarts at `finetune_lr`.
FinetuneResult iterative_finetune(SpotterModel& model, const std::vector<Sample>& data,
                                  const TrainConfig& config, const MatchWeights& weights,
                                  const std::function<void(int round, int accepted)>& on_round = {});

}  // namespace hlspot
