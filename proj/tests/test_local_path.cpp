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

#include <set>

#include "oracles/oracles.hpp"
#include "slime/local_path.hpp"

namespace slime {
namespace {

struct CaptureWarnings {
  std::vector<std::string> seen;
  std::function<void(std::string_view)> saved = warning_sink();
  CaptureWarnings() {
    warning_sink() = [this](std::string_view m) { seen.emplace_back(m); };
  }
  ~CaptureWarnings() { warning_sink() = saved; }
};

TEST(CompressLocal, ShapeContract) {
  Rng rng(1);
  const QFormerParams p = QFormerParams::random(4, 3, 2, rng);
  EXPECT_EQ(compress_local(rng.normal_matrix(576, 3, 1.0), p).rows(), 4u);
}

TEST(CompressLocal, DefaultQueriesOverFourPatches) {
  Rng rng(2);
  const QFormerParams p = QFormerParams::random(kDefaultLocalQueries, 4, 2, rng);
  std::vector<Matrix> patches;
  for (int i = 0; i < 4; ++i) patches.push_back(rng.normal_matrix(576, 4, 1.0));
  const Matrix out = compress_local(patches, p);
  EXPECT_EQ(out.rows(), 576u);
  EXPECT_EQ(out.cols(), 2u);
}

TEST(CompressLocal, ZeroValueProjection) {
  Rng rng(3);
  QFormerParams p = QFormerParams::random(4, 3, 2, rng);
  p.wv = Matrix(3, 3);
  const Matrix out = compress_local(rng.normal_matrix(10, 3, 1.0), p);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(CompressLocal, WarnsWhenNotCompressing) {
  Rng rng(3);
  const QFormerParams p = QFormerParams::random(8, 3, 2, rng);
  CaptureWarnings cap;
  const Matrix out = compress_local(rng.normal_matrix(4, 3, 1.0), p);
  EXPECT_EQ(out.rows(), 8u);
  ASSERT_EQ(cap.seen.size(), 1u);
  EXPECT_NE(cap.seen[0].find("N_q >= L"), std::string::npos);

  cap.seen.clear();
  compress_local(rng.normal_matrix(20, 3, 1.0), p);
  EXPECT_TRUE(cap.seen.empty());
}

TEST(Router, FixtureHalf) {
  const RouterSelection s = select_by_scores({0.4, 0.3, 0.2, 0.1}, 0.5);
  EXPECT_EQ(s.kept_indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_NEAR(s.cumulative_at_cut, 0.7, 1e-15);
}

TEST(Router, InclusiveThreshold) {
  const RouterSelection s = select_by_scores({0.4, 0.3, 0.2, 0.1}, 0.4);
  EXPECT_EQ(s.kept_indices, (std::vector<std::size_t>{0}));
  EXPECT_DOUBLE_EQ(s.cumulative_at_cut, 0.4);
}

TEST(Router, UnsortedInputAndTies) {
  const RouterSelection s = select_by_scores({0.1, 0.3, 0.3, 0.3}, 0.5);
  EXPECT_EQ(s.kept_indices, (std::vector<std::size_t>{1, 2}));
}

TEST(Router, GammaOneKeepsAll) {
  Rng rng(5);
  const Matrix zv = rng.normal_matrix(12, 4, 1.0);
  const Matrix zx = rng.normal_matrix(3, 4, 1.0);
  const RouterSelection s = route_tokens(zv, zx, {1.0, 0.1, false}, rng);
  EXPECT_EQ(s.kept_indices.size(), 12u);
  EXPECT_NEAR(s.cumulative_at_cut, 1.0, 1e-9);
}

TEST(Router, RejectsBadInputs) {
  Rng rng(5);
  EXPECT_THROW(route_tokens(Matrix(0, 4), Matrix(1, 4), {}, rng), Error);
  EXPECT_THROW(route_tokens(Matrix(2, 4), Matrix(1, 3), {}, rng), Error);
  EXPECT_THROW(route_tokens(Matrix(2, 4), Matrix(1, 4), {0.0, 0.1, false}, rng), Error);
  EXPECT_THROW(route_tokens(Matrix(2, 4), Matrix(1, 4), {1.5, 0.1, false}, rng), Error);
}

TEST(Router, ScoresAreSoftmaxOfMeanSimilarity) {
  const Matrix zv(2, 2, Vector{1.0, 0.0, 0.0, 1.0});
  const Matrix zx(2, 2, Vector{2.0, 0.0, 0.0, 0.0});
  const Vector s = router_scores(zv, zx);
  const double e = std::exp(1.0);
  EXPECT_NEAR(s[0], e / (e + 1.0), 1e-15);
}

TEST(Router, MinimalPrefixProperty) {
  Rng rng(17);
  for (int t = 0; t < 2000; ++t) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 40));
    const Vector scores = softmax(rng.normal_vector(n, 2.0));
    const double gamma = rng.uniform(0.01, 1.0);
    const RouterSelection s = select_by_scores(scores, gamma);
    const auto ref = oracle::minimal_prefix(scores, gamma);
    ASSERT_EQ(s.kept_indices, ref);
    ASSERT_GE(s.cumulative_at_cut, gamma);
    double without_last = s.cumulative_at_cut - scores[s.kept_indices.back()];
    if (s.kept_indices.size() < n) ASSERT_LT(without_last, gamma);
    std::set<std::size_t> uniq(s.kept_indices.begin(), s.kept_indices.end());
    ASSERT_EQ(uniq.size(), s.kept_indices.size());
    for (std::size_t i = 1; i < s.kept_indices.size(); ++i)
      ASSERT_GE(scores[s.kept_indices[i - 1]], scores[s.kept_indices[i]]);
  }
}

TEST(Router, GammaMonotonicity) {
  Rng rng(19);
  for (int t = 0; t < 500; ++t) {
    const Vector scores = softmax(rng.normal_vector(16, 1.5));
    double g1 = rng.uniform(0.01, 1.0), g2 = rng.uniform(0.01, 1.0);
    if (g1 > g2) std::swap(g1, g2);
    const auto a = select_by_scores(scores, g1).kept_indices;
    const auto b = select_by_scores(scores, g2).kept_indices;
    ASSERT_LE(a.size(), b.size());
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST(Router, TrainingNoiseOnlyReordersSelection) {
  Rng rng(23);
  const Matrix zv = rng.normal_matrix(30, 4, 1.0);
  const Matrix zx = rng.normal_matrix(2, 4, 1.0);
  Rng a(1), b(1);
  const RouterSelection clean = route_tokens(zv, zx, {0.75, 0.1, false}, a);
  const RouterSelection noisy = route_tokens(zv, zx, {0.75, 0.1, true}, b);
  EXPECT_EQ(clean.scores, noisy.scores);
  EXPECT_GE(noisy.cumulative_at_cut, 0.75);
  Rng c(1);
  EXPECT_EQ(route_tokens(zv, zx, {0.75, 0.1, true}, c).kept_indices, noisy.kept_indices);
  Rng d(1);
  EXPECT_EQ(route_tokens(zv, zx, {0.75, 0.0, true}, d).kept_indices, clean.kept_indices);
}

TEST(ApplySelection, GatherByScore) {
  Rng rng(29);
  const Matrix zv = rng.normal_matrix(4, 3, 1.0);
  RouterSelection sel = select_by_scores({0.1, 0.5, 0.15, 0.25}, 0.7);
  ASSERT_EQ(sel.kept_indices, (std::vector<std::size_t>{1, 3}));
  const Matrix kept = apply_selection(zv, sel);
  ASSERT_EQ(kept.rows(), 2u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(kept(0, j), zv(1, j));
    EXPECT_EQ(kept(1, j), zv(3, j));
  }

  const RouterSelection all = select_by_scores({0.1, 0.5, 0.15, 0.25}, 1.0);
  EXPECT_EQ(all.kept_indices, (std::vector<std::size_t>{1, 3, 2, 0}));
  EXPECT_EQ(apply_selection(zv, all).rows(), 4u);

  const RouterSelection one = select_by_scores({0.1, 0.5, 0.15, 0.25}, 0.5);
  const Matrix single = apply_selection(zv, one);
  ASSERT_EQ(single.rows(), 1u);
  EXPECT_EQ(single(0, 2), zv(1, 2));

  sel.kept_indices = {9};
  EXPECT_THROW(apply_selection(zv, sel), Error);
}

TEST(Router, JsonShape) {
  const auto j = to_json(select_by_scores({0.4, 0.3, 0.2, 0.1}, 0.5));
  EXPECT_EQ(j.at("kept"), nlohmann::json::array({0, 1}));
  EXPECT_DOUBLE_EQ(j.at("gamma").get<double>(), 0.5);
}

TEST(Defaults, PreferredSettings) {
  EXPECT_EQ(kDefaultLocalQueries, 144u);
  EXPECT_DOUBLE_EQ(kDefaultGamma, 0.75);
}

}  // namespace
}  // namespace slime
