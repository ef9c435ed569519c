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

#include <map>
#include <stdexcept>
#include <string>

#include "hlspot/tensor.hpp"

namespace hlspot {

/// Thrown for unreadable, truncated, or foreign checkpoint files. The message
/// always names the offending path.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameter archive. Layout (all integers little-endian):
///   "HLSPOT1"                      7-byte magic
///   u32 entry_count
///   per entry: u32 name_len, name bytes, u32 rank, i64 dims[rank],
///              f64 values[prod(dims)]
using TensorMap = std::map<std::string, Tensor>;

inline constexpr char kCheckpointMagic[] = "HLSPOT1";

void save_checkpoint(const std::string& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::string& path);

}  // namespace hlspot
