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

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hlspot/geometry.hpp"

namespace hlspot {

/// A scored word from the spotter, in the same frame as the ground truth.
struct EvalPrediction {
  std::vector<Point> polygon;
  std::string text;
  double score = 0.0;
};

/// Word-level matching of one image.
struct DetectionMatch {
  std::vector<std::pair<int, int>> pairs;  // (prediction, gt)
  std::vector<int> false_positives;        // prediction indices
  std::vector<int> false_negatives;        // gt indices (never don't-care)
  std::vector<int> ignored;                // predictions on don't-care gts
};

/// Greedy one-to-one matching in descending score (ties by index) at
/// IoU > `iou_thresh`. A prediction that cannot take a scored gt but
/// overlaps a don't-care gt is ignored.
DetectionMatch match_detections(std::span<const EvalPrediction> preds,
                                std::span<const TextInstance> gts, double iou_thresh = 0.5);

struct Prf {
  double precision = 0.0, recall = 0.0, f = 0.0;
  int tp = 0, fp = 0, fn = 0;

  /// F = 2PR / (P + R), 0 when P + R = 0.
  static Prf from_counts(int tp, int fp, int fn);
};

/// One image's predictions, ground truth and detection match.
struct ImageResult {
  std::vector<EvalPrediction> preds;
  std::vector<TextInstance> gts;
  DetectionMatch match;
};

std::string to_upper(std::string s);
int edit_distance(const std::string& a, const std::string& b);
/// Closest lexicon word by edit distance (uppercased), ties broken
/// lexicographically. Throws ContractError on an empty lexicon.
std::string correct_with_lexicon(const std::string& word, std::span<const std::string> lexicon);

/// Detection P/R/F summed over images.
Prf detection_score(std::span<const ImageResult> images);
/// End-to-end P/R/F: a matched pair also needs equal uppercase text. With a
/// lexicon ("Full" mode) predictions are corrected first; without one
/// ("None") they are compared as is.
Prf e2e_score(std::span<const ImageResult> images,
              const std::optional<std::vector<std::string>>& lexicon = std::nullopt);

struct SliceStat {
  std::string name;
  int population = 0;
  int hits = 0;
  std::optional<double> recall;  // empty slice: not applicable
};

/// E2E (None) recall on gts of length >= 7 / >= 10 and rotation angle in
/// [30, 60) / [60, 90].
std::vector<SliceStat> slice_report(std::span<const ImageResult> images);

struct EvalReport {
  Prf detection, e2e_none, e2e_full;
  std::vector<SliceStat> slices;
  int images = 0;

  std::string to_json() const;
  std::string to_table() const;
};

/// Matches every image and scores it. The Full lexicon is every scored gt
/// word of the set; with no words Full equals None.
EvalReport evaluate(std::vector<ImageResult> images, double iou_thresh = 0.5);

}  // namespace hlspot
