/* Copyright 2026 The slime-kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "slime/numerics.hpp"

namespace slime {
namespace {

TEST(Matrix, ShapeAndStorage) {
  Matrix m(2, 3, 1.5);
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.size(), 6u);
  m(1, 2) = 4.0;
  EXPECT_DOUBLE_EQ(m.row(1)[2], 4.0);
  EXPECT_THROW(Matrix(2, 2, Vector{1.0, 2.0, 3.0}), Error);
}

TEST(Matrix, ProductsAgreeWithNaiveLoops) {
  Rng rng(3);
  const Matrix a = rng.normal_matrix(4, 5, 1.0);
  const Matrix b = rng.normal_matrix(5, 3, 1.0);
  const Matrix c = matmul(a, b);
  const Matrix ref = oracle::naive_matmul(a, b);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c.data()[i], ref.data()[i], 1e-13);

  const Matrix at = transpose(a);
  const Matrix tn = matmul_tn(at, b);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(tn.data()[i], ref.data()[i], 1e-13);

  const Matrix nt = matmul_nt(a, transpose(b));
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(nt.data()[i], ref.data()[i], 1e-13);
  EXPECT_THROW(matmul(a, a), Error);
}

TEST(Matrix, StackAndGather) {
  const Matrix top(1, 2, 1.0), bottom(2, 2, 2.0);
  const std::vector<Matrix> parts{top, bottom};
  const Matrix s = vstack(parts);
  EXPECT_EQ(s.rows(), 3u);
  EXPECT_DOUBLE_EQ(s(2, 1), 2.0);
  const std::vector<std::size_t> idx{2, 0};
  const Matrix g = gather_rows(s, idx);
  EXPECT_DOUBLE_EQ(g(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g(1, 0), 1.0);
}

TEST(Softmax, Examples) {
  const Vector half = softmax(Vector{0.0, 0.0});
  EXPECT_DOUBLE_EQ(half[0], 0.5);
  EXPECT_DOUBLE_EQ(half[1], 0.5);

  const Vector s = softmax(Vector{1.0, 0.0});
  EXPECT_NEAR(s[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(s[0], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(s[1], 0.2689414213699951, 1e-15);

  const Vector big = softmax(Vector{1000.0, 0.0});
  EXPECT_TRUE(all_finite(big));
  EXPECT_NEAR(big[0], 1.0, 1e-15);
  EXPECT_NEAR(big[1], 0.0, 1e-15);
}

TEST(Softmax, EmptyInputRejected) {
  try {
    softmax(Vector{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty"), std::string::npos);
  }
}

TEST(Softmax, ShiftInvarianceAndSimplex) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    Vector v = rng.normal_vector(7, 5.0);
    const Vector a = softmax(v);
    for (double& x : v) x += 123.0;
    const Vector b = softmax(v);
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      EXPECT_GE(a[i], 0.0);
      sum += a[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Softplus, Examples) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(50.0) / 50.0, 1.0, 1e-12);
  EXPECT_NEAR(softplus(-50.0) / std::exp(-50.0), 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(softplus(1000.0)));
  EXPECT_GE(softplus(-1000.0), 0.0);
}

TEST(Sigmoid, IsSoftplusDerivative) {
  for (double x : {-30.0, -2.0, 0.0, 0.7, 25.0}) {
    const double h = 1e-6;
    EXPECT_NEAR(sigmoid(x), (softplus(x + h) - softplus(x - h)) / (2 * h), 1e-8);
  }
}

TEST(Gelu, DerivativeAgreesWithDifferences) {
  for (double x : {-4.0, -1.0, 0.0, 0.3, 2.5}) {
    const double h = 1e-6;
    EXPECT_NEAR(gelu_grad(x), (gelu(x + h) - gelu(x - h)) / (2 * h), 1e-8);
  }
  EXPECT_NEAR(gelu(10.0), 10.0, 1e-12);
}

TEST(CrossAttention, SingleKeyReturnsItsValue) {
  const Matrix q(1, 2, Vector{0.3, -0.2});
  const Matrix k = q;
  const Matrix v(1, 3, Vector{1.0, 2.0, 3.0});
  const Matrix out = cross_attention(q, k, v);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(out(0, j), v(0, j));
}

TEST(CrossAttention, IdenticalKeysAverageValues) {
  const Matrix q(1, 2, Vector{1.0, 0.5});
  const Matrix k(2, 2, Vector{0.2, 0.4, 0.2, 0.4});
  const Matrix v(2, 2, Vector{1.0, 3.0, 5.0, -1.0});
  const Matrix out = cross_attention(q, k, v);
  EXPECT_NEAR(out(0, 0), 3.0, 1e-15);
  EXPECT_NEAR(out(0, 1), 1.0, 1e-15);
}

TEST(CrossAttention, HandEvaluatedWeights) {
  const Matrix q(1, 2, Vector{1.0, 0.0});
  const Matrix k(2, 2, Vector{1.0, 0.0, 0.0, 1.0});
  const Matrix v(2, 1, Vector{2.0, 4.0});
  const double w = std::exp(1.0 / std::sqrt(2.0)) / (std::exp(1.0 / std::sqrt(2.0)) + 1.0);
  const Matrix weights = attention_weights(q, k);
  EXPECT_NEAR(weights(0, 0), w, 1e-15);
  EXPECT_NEAR(cross_attention(q, k, v)(0, 0), w * 2.0 + (1.0 - w) * 4.0, 1e-14);
}

TEST(CrossAttention, BackwardMatchesDifferences) {
  Rng rng(5);
  const Matrix q = rng.normal_matrix(3, 4, 1.0);
  const Matrix k = rng.normal_matrix(5, 4, 1.0);
  const Matrix v = rng.normal_matrix(5, 2, 1.0);
  const Matrix w_out = rng.normal_matrix(3, 2, 1.0);
  auto loss = [&](const Matrix& qq, const Matrix& kk, const Matrix& vv) {
    return dot(cross_attention(qq, kk, vv).data(), w_out.data());
  };
  const AttentionGrads g = cross_attention_backward(q, k, v, attention_weights(q, k), w_out);
  auto check = [&](const Matrix& base, const Matrix& grad, int which) {
    auto f = [&](std::span<const double> p) {
      Matrix m(base.rows(), base.cols(), Vector(p.begin(), p.end()));
      return which == 0 ? loss(m, k, v) : which == 1 ? loss(q, m, v) : loss(q, k, m);
    };
    EXPECT_LT(fd_grad_check(f, grad.data(), base.data()), 1e-8);
  };
  check(q, g.queries, 0);
  check(k, g.keys, 1);
  check(v, g.values, 2);
}

TEST(FdGradCheck, ExactQuadratic) {
  Rng rng(2);
  const Vector p = rng.normal_vector(10);
  auto f = [](std::span<const double> x) { return 0.5 * dot(x, x); };
  EXPECT_LT(fd_grad_check(f, p, p), 1e-8);
}

TEST(FdGradCheck, Constant) {
  const Vector p{1.0, -2.0, 3.0};
  const Vector zero(3, 0.0);
  EXPECT_LT(fd_grad_check([](std::span<const double>) { return 4.2; }, zero, p), 1e-12);
}

TEST(FdGradCheck, DetectsWrongGradient) {
  const Vector p{1.0, 2.0};
  const Vector wrong{0.0, 0.0};
  EXPECT_GT(fd_grad_check([](std::span<const double> x) { return 0.5 * dot(x, x); }, wrong, p), 0.5);
}

TEST(FdGradCheck, RejectsNonFinite) {
  const Vector p{0.0};
  const Vector g{0.0};
  EXPECT_THROW(fd_grad_check([](std::span<const double>) { return std::nan(""); }, g, p), Error);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs = differs || x != c.normal();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, Mt19937ContractAndUniformRange) {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng r(5489);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = r.next_u64();
  EXPECT_EQ(x, 9981545732273789042ull);

  Rng u(1);
  for (int i = 0; i < 10000; ++i) {
    const double v = u.uniform();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
    const auto k = u.uniform_int(-2, 3);
    EXPECT_GE(k, -2);
    EXPECT_LE(k, 3);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(9);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, ForksAreDistinctAndDeterministic) {
  const Rng root(7);
  Rng a = root.fork(1), b = root.fork(1), c = root.fork(2);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(a.next_u64(), c.next_u64());
}

}  // namespace
}  // namespace slime
