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

// Serial reference vs OpenMP kernels. Thread count comes from
// HLSPOT_THREADS (default: all cores).

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hlspot/kernels.hpp"

namespace {

using namespace hlspot;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_GemmNN(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::gemm_nn(a.data(), b.data(), c.data(), n, n, n, false);
    else kernels::serial::gemm_nn(a.data(), b.data(), c.data(), n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
  state.counters["threads"] = Parallel ? kernels::num_threads() : 1;
}

// Decoder-sized sampling: `queries` sub-component queries, 8 heads of 32
// channels, 4 points on a 4-level pyramid of a 256x256 image.
struct DeformSetup {
  std::vector<kernels::LevelShape> levels;
  kernels::DeformDims dims;
  std::vector<double> value, loc, attn, out, grad_out, grad_value, grad_loc, grad_attn;

  explicit DeformSetup(std::int64_t queries) {
    std::int64_t start = 0;
    for (std::int64_t side : {32, 16, 8, 4}) {
      levels.push_back({side, side, start});
      start += side * side;
    }
    dims = {queries, 8, 32, 4, levels};
    const std::int64_t samples = queries * 8 * 4 * 4;
    value = random_vector(start * 8 * 32, 3);
    loc = random_vector(samples * 2, 4, 0.0, 1.0);
    attn = random_vector(samples, 5, 0.0, 0.25);
    out.resize(queries * 8 * 32);
    grad_out = random_vector(out.size(), 6);
    grad_value.resize(value.size());
    grad_loc.resize(loc.size());
    grad_attn.resize(attn.size());
  }
};

template <bool Parallel>
void BM_DeformForward(benchmark::State& state) {
  DeformSetup s(state.range(0));
  for (auto _ : state) {
    if constexpr (Parallel) kernels::deform_sample_forward(s.dims, s.value, s.loc, s.attn, s.out);
    else kernels::serial::deform_sample_forward(s.dims, s.value, s.loc, s.attn, s.out);
    benchmark::DoNotOptimize(s.out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_DeformBackward(benchmark::State& state) {
  DeformSetup s(state.range(0));
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::deform_sample_backward(s.dims, s.value, s.loc, s.attn, s.grad_out, s.grad_value,
                                      s.grad_loc, s.grad_attn);
    else
      kernels::serial::deform_sample_backward(s.dims, s.value, s.loc, s.attn, s.grad_out, s.grad_value,
                                              s.grad_loc, s.grad_attn);
    benchmark::DoNotOptimize(s.grad_value.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_GemmNN<false>)->Name("gemm_nn/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_GemmNN<true>)->Name("gemm_nn/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_DeformForward<false>)->Name("deform_forward/serial")->Arg(400)->Arg(1600);
BENCHMARK(BM_DeformForward<true>)->Name("deform_forward/omp")->Arg(400)->Arg(1600);
BENCHMARK(BM_DeformBackward<false>)->Name("deform_backward/serial")->Arg(400)->Arg(1600);
BENCHMARK(BM_DeformBackward<true>)->Name("deform_backward/omp")->Arg(400)->Arg(1600);

}  // namespace

int main(int argc, char** argv) {
  hlspot::kernels::threads_from_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
