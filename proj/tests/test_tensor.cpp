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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hlspot/checkpoint.hpp"
#include "hlspot/kernels.hpp"
#include "hlspot/tensor.hpp"
#include "hlspot/verify.hpp"

namespace hlspot {
namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> normal;
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = normal(rng);
  return Tensor(shape, v, grad);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor a({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(eye, a)), values(a));
}

TEST(Matmul, MatchesTripleLoop) {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {5, 6});
  Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(c), (std::vector<double>{17, 39}));

  std::mt19937_64 rng(3);
  Tensor x = random_tensor({4, 5}, rng), y = random_tensor({5, 3}, rng);
  Tensor z = matmul(x, y);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 5; ++k) s += x.at({i, k}) * y.at({k, j});
      EXPECT_NEAR(z.at({i, j}), s, 1e-12);
    }
}

TEST(Matmul, BatchedLeadingDims) {
  std::mt19937_64 rng(4);
  Tensor a = random_tensor({3, 2, 4}, rng), b = random_tensor({3, 4, 5}, rng);
  Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{3, 2, 5}));
  for (int n = 0; n < 3; ++n) {
    Tensor lhs = reshape(slice(a, 0, n, 1), {2, 4});
    Tensor rhs = reshape(slice(b, 0, n, 1), {4, 5});
    Tensor ref = matmul(lhs, rhs);
    for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(c[n * 10 + i], ref[i]);
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto check = verify::gradcheck(
      [](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); },
      {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  EXPECT_LT(check.max_rel_err, 1e-6) << check.worst;
}

TEST(Softmax, UniformInput) {
  Tensor s = softmax(Tensor({3}, {0, 0, 0}), 0);
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  Tensor a = softmax(Tensor({4}, {0.3, -1.2, 2.0, 0.0}), 0);
  Tensor b = softmax(Tensor({4}, {100.3, 98.8, 102.0, 100.0}), 0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Softmax, KnownValues) {
  Tensor s = softmax(Tensor({3}, {1, 2, 3}), 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(s[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(s[0], 0.09003, 1e-5);
  EXPECT_NEAR(s[1], 0.24473, 1e-5);
  EXPECT_NEAR(s[2], 0.66524, 1e-5);
}

TEST(Softmax, SlicesSumToOneOnEveryAxis) {
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({3, 4, 5}, rng, false);
  for (int axis = 0; axis < 3; ++axis) {
    Tensor s = softmax(scale(x, 20.0), axis);
    Tensor total = sum(s);
    // Each axis slice sums to one, so the grand total is numel / dim(axis).
    EXPECT_NEAR(total.item(), 60.0 / x.dim(axis), 1e-12);
    Tensor m = mean_axis(s, axis);
    for (double v : m.data()) EXPECT_NEAR(v * x.dim(axis), 1.0, 1e-12);
  }
}

TEST(BilinearSample, TexelCenterReturnsTexel) {
  Tensor map({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  // Pixel (col 2, row 1) has its center at ((2 + .5)/3, (1 + .5)/2).
  Tensor v = bilinear_sample(map, Tensor({2}, {2.5 / 3, 1.5 / 2}));
  EXPECT_NEAR(v.item(), 6.0, 1e-14);
}

TEST(BilinearSample, MidpointOfTwoByTwoIsMean) {
  Tensor map({2, 2, 2}, {1, 2, 3, 4, -1, 0, 5, 8});
  Tensor v = bilinear_sample(map, Tensor({2}, {0.5, 0.5}));
  EXPECT_NEAR(v[0], 2.5, 1e-14);
  EXPECT_NEAR(v[1], 3.0, 1e-14);
}

TEST(BilinearSample, OutsideReadsZero) {
  Tensor map = Tensor::full({1, 4, 4}, 7.0);
  EXPECT_EQ(bilinear_sample(map, Tensor({2}, {-0.5, 0.5})).item(), 0.0);
  EXPECT_EQ(bilinear_sample(map, Tensor({2}, {0.5, 1.7})).item(), 0.0);
}

TEST(BilinearSample, ReconstructsAffineMapExactly) {
  const int h = 6, w = 9;
  std::vector<double> v(h * w);
  auto f = [](double px, double py) { return 0.7 * px - 1.3 * py + 2.0; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) v[y * w + x] = f(x, y);
  Tensor map({1, h, w}, v);
  std::mt19937_64 rng(8);
  // Stay inside the texel-center hull so no zero padding is involved.
  std::uniform_real_distribution<double> ux(0.5 / w, 1 - 0.5 / w), uy(0.5 / h, 1 - 0.5 / h);
  for (int i = 0; i < 50; ++i) {
    double x = ux(rng), y = uy(rng);
    double got = bilinear_sample(map, Tensor({2}, {x, y})).item();
    EXPECT_NEAR(got, f(x * w - 0.5, y * h - 0.5), 1e-12);
  }
}

TEST(BilinearSample, GradientWrtPointMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor map = random_tensor({2, 5, 7}, rng);
    std::uniform_real_distribution<double> u(0.12, 0.88);
    Tensor p({2}, {u(rng), u(rng)}, true);
    auto check = verify::gradcheck(
        [](const std::vector<Tensor>& in) { return sum(bilinear_sample(in[0], in[1])); },
        {map, p});
    EXPECT_LT(check.max_rel_err, 1e-5) << check.worst;
  }
}

TEST(Pointwise, SigmoidOfZero) { EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0)).item(), 0.5); }

TEST(Pointwise, InverseSigmoidRoundTrip) {
  std::vector<double> xs;
  for (double x = -10; x <= 10; x += 0.25) xs.push_back(x);
  Tensor x({static_cast<std::int64_t>(xs.size())}, xs);
  Tensor back = inverse_sigmoid(sigmoid(x));
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(back[i], xs[i], 1e-4);
}

TEST(Pointwise, InverseSigmoidClamps) {
  Tensor y = inverse_sigmoid(Tensor({2}, {0.0, 1.0}));
  EXPECT_NEAR(y[0], std::log(kInverseSigmoidEps / (1 - kInverseSigmoidEps)), 1e-9);
  EXPECT_NEAR(y[1], -y[0], 1e-9);
}

TEST(Pointwise, LayerNormOfConstantIsZero) {
  Tensor x = Tensor::full({2, 5}, 3.25);
  Tensor y = layer_norm(x, Tensor::full({5}, 1.0), Tensor::zeros({5}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Pointwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(mul(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
  EXPECT_THROW(concat({Tensor::zeros({2, 3}), Tensor::zeros({2, 4})}, 0), DimensionError);
}

TEST(Pointwise, ConcatAndEmbedding) {
  Tensor a({1, 2}, {1, 2}), b({2, 2}, {3, 4, 5, 6});
  EXPECT_EQ(values(concat({a, b}, 0)), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  Tensor table({3, 2}, {0, 1, 10, 11, 20, 21});
  std::vector<std::int64_t> ids{2, 0, 2};
  EXPECT_EQ(values(embedding_lookup(table, ids)), (std::vector<double>{20, 21, 0, 1, 20, 21}));
}

TEST(Backward, SumGivesOnes) {
  Tensor x({3}, {1, -2, 5}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoX) {
  Tensor x({2}, {1, 2}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(values(Tensor({2}, {x.grad()[0], x.grad()[1]})), (std::vector<double>{2, 4}));
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tensor x({2}, {1, 2}, true);
  backward(sum(mul(x, x)));
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 4.0);
  EXPECT_EQ(x.grad()[1], 8.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x({2}, {1, 2}, true);
  EXPECT_THROW(backward(mul(x, x)), ContractError);
}

TEST(Backward, SharedSubgraphVisitedOnce) {
  // y feeds two branches; its gradient must be the sum of both, not doubled again.
  Tensor x({1}, {3}, true);
  Tensor y = mul(x, x);
  backward(sum(add(y, scale(y, 2.0))));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3 * 2 * 3.0);
}

TEST(Backward, ThreeLayerPerceptronMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::vector<Tensor> in{random_tensor({4, 3}, rng), random_tensor({3, 6}, rng),
                         random_tensor({6}, rng),    random_tensor({6, 5}, rng),
                         random_tensor({5}, rng),    random_tensor({5, 1}, rng),
                         random_tensor({1}, rng)};
  auto mlp = [](const std::vector<Tensor>& p) {
    Tensor h = relu(linear(p[0], p[1], p[2]));
    h = sigmoid(linear(h, p[3], p[4]));
    return mean(linear(h, p[5], p[6]));
  };
  auto check = verify::gradcheck(mlp, in);
  EXPECT_LT(check.max_rel_err, 1e-5) << check.worst;
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor x({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = sum(mul(x, x));
  }
  EXPECT_TRUE(y.is_leaf());
  EXPECT_FALSE(y.requires_grad());
}

TEST(OpGradients, AllOpsOnAFewSeeds) {
  auto r = verify::op_gradient_suite(5);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  std::mt19937_64 rng(12);
  Tensor a = random_tensor({16, 32}, rng), b = random_tensor({32, 8}, rng);
  Tensor c1 = softmax(matmul(a, b), 1), c2 = softmax(matmul(a, b), 1);
  EXPECT_EQ(values(c1), values(c2));
}

TEST(Kernels, ParallelGemmMatchesSerialBitwise) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  const int m = 37, k = 29, n = 41;
  std::vector<double> a(m * k), b(k * n), bt(n * k), at(k * m);
  for (auto& v : a) v = normal(rng);
  for (auto& v : b) v = normal(rng);
  for (auto& v : bt) v = normal(rng);
  for (auto& v : at) v = normal(rng);
  const int saved = kernels::num_threads();
  kernels::set_num_threads(4);
  std::vector<double> p(m * n), s(m * n);
  kernels::gemm_nn(a.data(), b.data(), p.data(), m, k, n, false);
  kernels::serial::gemm_nn(a.data(), b.data(), s.data(), m, k, n, false);
  EXPECT_EQ(p, s);
  kernels::gemm_nt(a.data(), bt.data(), p.data(), m, k, n);
  kernels::serial::gemm_nt(a.data(), bt.data(), s.data(), m, k, n);
  EXPECT_EQ(p, s);
  kernels::gemm_tn(at.data(), b.data(), p.data(), m, k, n);
  kernels::serial::gemm_tn(at.data(), b.data(), s.data(), m, k, n);
  EXPECT_EQ(p, s);
  kernels::set_num_threads(saved);
}

TEST(Kernels, ParallelDeformSampleMatchesSerialBitwise) {
  // Large enough to clear the kernels' parallel-work threshold.
  std::mt19937_64 rng(14);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> u(-0.1, 1.1);
  std::vector<kernels::LevelShape> levels{{8, 10, 0}, {4, 5, 80}};
  kernels::DeformDims dims{.queries = 400, .heads = 2, .head_dim = 8, .points = 4, .levels = levels};
  const std::int64_t tokens = 100, d = dims.heads * dims.head_dim;
  const std::int64_t samples = dims.queries * dims.heads * 2 * dims.points;
  std::vector<double> value(tokens * d), loc(samples * 2), attn(samples), go(dims.queries * d);
  for (auto& v : value) v = normal(rng);
  for (auto& v : loc) v = u(rng);
  for (auto& v : attn) v = std::abs(normal(rng));
  for (auto& v : go) v = normal(rng);

  const int saved = kernels::num_threads();
  kernels::set_num_threads(4);
  std::vector<double> out_p(go.size()), out_s(go.size());
  kernels::deform_sample_forward(dims, value, loc, attn, out_p);
  kernels::serial::deform_sample_forward(dims, value, loc, attn, out_s);
  EXPECT_EQ(out_p, out_s);

  std::vector<double> gv_p(value.size()), gl_p(loc.size()), ga_p(attn.size());
  std::vector<double> gv_s(value.size()), gl_s(loc.size()), ga_s(attn.size());
  kernels::deform_sample_backward(dims, value, loc, attn, go, gv_p, gl_p, ga_p);
  kernels::serial::deform_sample_backward(dims, value, loc, attn, go, gv_s, gl_s, ga_s);
  EXPECT_EQ(gv_p, gv_s);
  EXPECT_EQ(gl_p, gl_s);
  EXPECT_EQ(ga_p, ga_s);
  kernels::set_num_threads(saved);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("hlspot_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsExact) {
  std::mt19937_64 rng(15);
  TensorMap m{{"a.weight", random_tensor({3, 4}, rng)}, {"b", Tensor::scalar(-1e-300)}};
  const auto path = (dir_ / "m.ckpt").string();
  save_checkpoint(path, m);
  TensorMap back = load_checkpoint(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.at("a.weight").shape(), (Shape{3, 4}));
  EXPECT_EQ(values(back.at("a.weight")), values(m.at("a.weight")));
  EXPECT_EQ(back.at("b").item(), -1e-300);

  std::ifstream in(path, std::ios::binary);
  char magic[7];
  in.read(magic, 7);
  EXPECT_EQ(std::string(magic, 7), "HLSPOT1");
}

TEST_F(CheckpointTest, BadMagicNamesFile) {
  const auto path = (dir_ / "broken.ckpt").string();
  std::ofstream(path, std::ios::binary) << "NOTACKPT and some bytes";
  try {
    load_checkpoint(path);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.ckpt"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace hlspot
