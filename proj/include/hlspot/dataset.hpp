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

#include <string>
#include <vector>

#include "hlspot/geometry.hpp"
#include "hlspot/image.hpp"
#include "hlspot/synthmap.hpp"

namespace hlspot {

/// Malformed or missing dataset files.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One annotated raster. Instance coordinates are in pixels.
struct AnnotatedImage {
  std::string image;  // path relative to the dataset directory
  int width = 0, height = 0;
  std::vector<TextInstance> instances;
};

/// An all-digit transcription (e.g. a house number) is not scored.
bool is_all_numeric(const std::string& text);

/// Scene annotation record {polygon, text, char_centers, dont_care}. An
/// empty char_centers array marks centers as unavailable.
std::string instance_to_json(const TextInstance& instance);
TextInstance instance_from_json(const std::string& text);

/// Writes scene_<id>.png and scene_<id>.json under `dir`; returns the index
/// record of the scene.
AnnotatedImage write_scene(const std::string& dir, int id, const MapScene& scene);

/// `annotations.jsonl`: one AnnotatedImage per line.
void write_index(const std::string& dir, const std::vector<AnnotatedImage>& images);
/// Reads `annotations.jsonl` from `dir`; all-numeric words become don't-care.
std::vector<AnnotatedImage> read_index(const std::string& dir);

/// Pixel <-> normalized [0, 1] coordinates.
TextInstance normalize_instance(const TextInstance& instance, int width, int height);
TextInstance denormalize_instance(const TextInstance& instance, int width, int height);

/// Copy of the instances with centers marked unavailable (weak supervision).
std::vector<AnnotatedImage> withhold_centers(std::vector<AnnotatedImage> images);

}  // namespace hlspot
