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

#include "hlspot/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hlspot {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

template <class T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw CheckpointError("truncated checkpoint: " + path);
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, kMagicLen);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

TensorMap load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) ||
      std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0)
    throw CheckpointError("bad checkpoint magic (expected HLSPOT1): " + path);
  const auto count = get<std::uint32_t>(in, path);
  TensorMap tensors;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = get<std::uint32_t>(in, path);
    if (name_len > (1u << 16)) throw CheckpointError("corrupt entry name in " + path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw CheckpointError("truncated checkpoint: " + path);
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > 8) throw CheckpointError("corrupt tensor rank in " + path);
    Shape shape(rank);
    for (auto& d : shape) {
      d = get<std::int64_t>(in, path);
      if (d < 0 || d > (1ll << 32)) throw CheckpointError("corrupt dims in " + path);
    }
    std::vector<double> values(shape_numel(shape));
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double))))
      throw CheckpointError("truncated checkpoint: " + path);
    tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return tensors;
}

}  // namespace hlspot
