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

#include "hlspot/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "hlspot/tensor.hpp"
#include "json.hpp"

namespace hlspot {

DetectionMatch match_detections(std::span<const EvalPrediction> preds,
                                std::span<const TextInstance> gts, double iou_thresh) {
  DetectionMatch m;
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });

  std::vector<bool> taken(gts.size(), false);
  for (int p : order) {
    int best = -1;
    double best_iou = iou_thresh;
    bool on_dont_care = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = polygon_iou(preds[p].polygon, gts[g].polygon.points());
      if (iou <= iou_thresh) continue;
      if (gts[g].dont_care) {
        on_dont_care = true;
      } else if (!taken[g] && iou > best_iou) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      taken[best] = true;
      m.pairs.emplace_back(p, best);
    } else if (on_dont_care) {
      m.ignored.push_back(p);
    } else {
      m.false_positives.push_back(p);
    }
  }
  std::sort(m.pairs.begin(), m.pairs.end());
  std::sort(m.false_positives.begin(), m.false_positives.end());
  std::sort(m.ignored.begin(), m.ignored.end());
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (!gts[g].dont_care && !taken[g]) m.false_negatives.push_back(static_cast<int>(g));
  return m;
}

Prf Prf::from_counts(int tp, int fp, int fn) {
  Prf r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  r.f = r.precision + r.recall > 0
            ? 2 * r.precision * r.recall / (r.precision + r.recall)
            : 0.0;
  return r;
}

std::string to_upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string correct_with_lexicon(const std::string& word, std::span<const std::string> lexicon) {
  if (lexicon.empty()) throw ContractError("Full lexicon mode needs a non-empty lexicon");
  const std::string w = to_upper(word);
  std::string best;
  int best_d = -1;
  for (const auto& entry : lexicon) {
    const std::string cand = to_upper(entry);
    const int d = edit_distance(w, cand);
    if (best_d < 0 || d < best_d || (d == best_d && cand < best)) {
      best = cand;
      best_d = d;
    }
  }
  return best;
}

Prf detection_score(std::span<const ImageResult> images) {
  int tp = 0, fp = 0, fn = 0;
  for (const auto& im : images) {
    tp += static_cast<int>(im.match.pairs.size());
    fp += static_cast<int>(im.match.false_positives.size());
    fn += static_cast<int>(im.match.false_negatives.size());
  }
  return Prf::from_counts(tp, fp, fn);
}

namespace {

bool recognized(const EvalPrediction& pred, const TextInstance& gt,
                const std::optional<std::vector<std::string>>& lexicon) {
  const std::string text = lexicon ? correct_with_lexicon(pred.text, *lexicon) : to_upper(pred.text);
  return text == to_upper(gt.transcription);
}

}  // namespace

Prf e2e_score(std::span<const ImageResult> images,
              const std::optional<std::vector<std::string>>& lexicon) {
  if (lexicon && lexicon->empty())
    throw ContractError("Full lexicon mode needs a non-empty lexicon");
  int hits = 0, scored_preds = 0, scored_gts = 0;
  for (const auto& im : images) {
    const auto& m = im.match;
    scored_preds += static_cast<int>(m.pairs.size() + m.false_positives.size());
    scored_gts += static_cast<int>(m.pairs.size() + m.false_negatives.size());
    for (const auto& [p, g] : m.pairs) hits += recognized(im.preds[p], im.gts[g], lexicon) ? 1 : 0;
  }
  return Prf::from_counts(hits, scored_preds - hits, scored_gts - hits);
}

std::vector<SliceStat> slice_report(std::span<const ImageResult> images) {
  struct Rule {
    const char* name;
    bool (*in)(const TextInstance&);
  };
  static const Rule rules[] = {
      {"length>=7", [](const TextInstance& g) { return g.transcription.size() >= 7; }},
      {"length>=10", [](const TextInstance& g) { return g.transcription.size() >= 10; }},
      {"angle[30,60)",
       [](const TextInstance& g) {
         const double a = rotation_angle(g);
         return a >= 30 && a < 60;
       }},
      {"angle[60,90]",
       [](const TextInstance& g) {
         const double a = rotation_angle(g);
         return a >= 60 && a <= 90;
       }},
  };
  std::vector<SliceStat> out;
  for (const auto& rule : rules) {
    SliceStat s;
    s.name = rule.name;
    for (const auto& im : images) {
      std::vector<int> hit_by(im.gts.size(), -1);
      for (const auto& [p, g] : im.match.pairs) hit_by[g] = p;
      for (std::size_t g = 0; g < im.gts.size(); ++g) {
        if (im.gts[g].dont_care || !rule.in(im.gts[g])) continue;
        ++s.population;
        if (hit_by[g] >= 0 && recognized(im.preds[hit_by[g]], im.gts[g], std::nullopt)) ++s.hits;
      }
    }
    if (s.population > 0) s.recall = static_cast<double>(s.hits) / s.population;
    out.push_back(s);
  }
  return out;
}

EvalReport evaluate(std::vector<ImageResult> images, double iou_thresh) {
  const auto n = static_cast<std::int64_t>(images.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i)
    images[i].match = match_detections(images[i].preds, images[i].gts, iou_thresh);

  std::set<std::string> words;
  for (const auto& im : images)
    for (const auto& g : im.gts)
      if (!g.dont_care) words.insert(to_upper(g.transcription));
  const std::vector<std::string> lexicon(words.begin(), words.end());

  EvalReport r;
  r.images = static_cast<int>(images.size());
  r.detection = detection_score(images);
  r.e2e_none = e2e_score(images);
  r.e2e_full = lexicon.empty() ? r.e2e_none : e2e_score(images, lexicon);
  r.slices = slice_report(images);
  return r;
}

std::string EvalReport::to_json() const {
  using nlohmann::json;
  auto prf = [](const Prf& p) {
    return json{{"precision", p.precision}, {"recall", p.recall}, {"f", p.f},
                {"tp", p.tp},               {"fp", p.fp},         {"fn", p.fn}};
  };
  json j;
  j["images"] = images;
  j["detection"] = prf(detection);
  j["e2e_none"] = prf(e2e_none);
  j["e2e_full"] = prf(e2e_full);
  j["slices"] = json::array();
  for (const auto& s : slices)
    j["slices"].push_back({{"name", s.name},
                           {"population", s.population},
                           {"hits", s.hits},
                           {"recall", s.recall ? json(*s.recall) : json(nullptr)}});
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  char line[160];
  out << "images: " << images << "\n\n";
  out << "                 P        R        F\n";
  auto row = [&](const char* name, const Prf& p) {
    std::snprintf(line, sizeof line, "%-12s %8.2f %8.2f %8.2f\n", name, 100 * p.precision,
                  100 * p.recall, 100 * p.f);
    out << line;
  };
  row("Detection", detection);
  row("E2E None", e2e_none);
  row("E2E Full", e2e_full);
  out << "\nE2E recall by slice\n";
  for (const auto& s : slices) {
    if (s.recall)
      std::snprintf(line, sizeof line, "%-14s %8.2f  (%d/%d)\n", s.name.c_str(), 100 * *s.recall,
                    s.hits, s.population);
    else
      std::snprintf(line, sizeof line, "%-14s %8s  (0/0)\n", s.name.c_str(), "N/A");
    out << line;
  }
  return out.str();
}

}  // namespace hlspot
