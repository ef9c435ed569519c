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
#include <stdexcept>
#include <string>

#include "hlspot/model.hpp"
#include "hlspot/synthmap.hpp"
#include "hlspot/training.hpp"

namespace hlspot {

/// Unknown key, wrong value type, or unreadable config file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command needs, as one JSON document:
///   {"seed": s, "model": {...}, "train": {...}, "synthmap": {...},
///    "eval": {"iou_thresh": t}}
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model = ModelConfig::micro();
  TrainConfig train;
  GeneratorOptions synthmap;
  double iou_thresh = 0.5;

  /// Overfit-scale settings: micro model on 128x128 scenes.
  static RunConfig micro();
  /// Published model and schedule.
  static RunConfig paper();
  /// "micro" or "paper"; ConfigError otherwise.
  static RunConfig preset(const std::string& name);

  std::string to_json() const;
  /// Applies the keys of `text` on top of `*this`. Every key must already
  /// exist; throws ConfigError naming the first offending key.
  void merge_json(const std::string& text);
  void merge_file(const std::string& path);
};

}  // namespace hlspot
