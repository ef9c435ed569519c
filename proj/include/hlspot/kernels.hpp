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
#include <span>

// Raw numeric kernels behind the tensor ops. Every kernel exists twice: a
// plain serial reference in `kernels::serial` and an OpenMP version in
// `kernels`. The parallel versions partition output elements between threads
// and keep the per-element summation order of the serial code, so both
// produce bit-identical results for any thread count.
namespace hlspot::kernels {

/// Caps the worker count of the parallel kernels (1 disables threading).
void set_num_threads(int n);
int num_threads();
/// Reads HLSPOT_THREADS; returns the current setting when unset or invalid.
int threads_from_env();

/// One level of a flattened multi-scale feature map. `start` is the row
/// offset of the level inside the flattened [S, ...] value tensor.
struct LevelShape {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t start = 0;
};

/// Shape bundle of a multi-scale deformable sampling call.
///   value: [S, heads, head_dim]
///   loc:   [queries, heads, levels, points, 2] normalized (x, y)
///   attn:  [queries, heads, levels, points]
///   out:   [queries, heads * head_dim]
struct DeformDims {
  std::int64_t queries = 0;
  std::int64_t heads = 0;
  std::int64_t head_dim = 0;
  std::int64_t points = 0;
  std::span<const LevelShape> levels;
};

// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate);
// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n);
// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n);

void deform_sample_forward(const DeformDims& dims,
                           std::span<const double> value,
                           std::span<const double> loc,
                           std::span<const double> attn,
                           std::span<double> out);
/// Accumulates into whichever gradient spans are non-empty.
void deform_sample_backward(const DeformDims& dims,
                            std::span<const double> value,
                            std::span<const double> loc,
                            std::span<const double> attn,
                            std::span<const double> grad_out,
                            std::span<double> grad_value,
                            std::span<double> grad_loc,
                            std::span<double> grad_attn);

/// Unfolds a [channels, height, width] image into
/// [channels * kernel * kernel, out_h * out_w] columns with zero padding.
void im2col(const double* image, std::int64_t channels, std::int64_t height,
            std::int64_t width, std::int64_t kernel, std::int64_t stride,
            std::int64_t pad, double* cols);
/// Adjoint of im2col: scatters columns back into `image` (accumulating).
void col2im(const double* cols, std::int64_t channels, std::int64_t height,
            std::int64_t width, std::int64_t kernel, std::int64_t stride,
            std::int64_t pad, double* image);

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n);
void gemm_nt(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n);
void deform_sample_forward(const DeformDims& dims,
                           std::span<const double> value,
                           std::span<const double> loc,
                           std::span<const double> attn,
                           std::span<double> out);
void deform_sample_backward(const DeformDims& dims,
                            std::span<const double> value,
                            std::span<const double> loc,
                            std::span<const double> attn,
                            std::span<const double> grad_out,
                            std::span<double> grad_value,
                            std::span<double> grad_loc,
                            std::span<double> grad_attn);

}  // namespace serial

}  // namespace hlspot::kernels
