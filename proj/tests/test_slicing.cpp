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

#include "oracles/oracles.hpp"
#include "slime/slicing.hpp"

namespace slime {
namespace {

SyntheticImage ramp(int w, int h) {
  SyntheticImage img(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      img.pixels(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 0.001 * r + 0.002 * c + 0.1;
  return img;
}

TEST(PlanPartition, ExactFit) {
  const PartitionPlan p = plan_partition({336, 336});
  EXPECT_EQ(p.m, 1);
  EXPECT_EQ(p.n, 1);
  EXPECT_DOUBLE_EQ(p.utilized, 112896.0);
  EXPECT_DOUBLE_EQ(p.wasted, 0.0);
}

TEST(PlanPartition, LargeSquare) {
  const PartitionPlan p = plan_partition({1024, 1024});
  EXPECT_EQ(p.m, 4);
  EXPECT_EQ(p.n, 4);
  EXPECT_DOUBLE_EQ(p.utilized, 1024.0 * 1024.0);
}

TEST(PlanPartition, WideDoubleTile) {
  const PartitionPlan p = plan_partition({672, 336});
  EXPECT_EQ(p.m, 2);
  EXPECT_EQ(p.n, 1);
  EXPECT_DOUBLE_EQ(p.scale, 1.0);
  EXPECT_DOUBLE_EQ(p.wasted, 0.0);
}

TEST(PlanPartition, RejectsEmptyGeometry) {
  EXPECT_THROW(plan_partition({0, 10}), Error);
  EXPECT_THROW(plan_partition({10, -1}), Error);
}

TEST(PlanPartition, MatchesBruteForce) {
  Rng rng(2024);
  for (int t = 0; t < 2000; ++t) {
    const int w = static_cast<int>(rng.uniform_int(1, 5000));
    const int h = static_cast<int>(rng.uniform_int(1, 5000));
    const PartitionPlan p = plan_partition({w, h});
    const auto [m, n] = oracle::brute_force_plan(w, h);
    ASSERT_EQ(std::pair(p.m, p.n), std::pair(m, n)) << w << "x" << h;
  }
}

TEST(PlanPartition, SmallBaseMatchesBruteForce) {
  for (int w = 1; w <= 300; w += 7)
    for (int h = 1; h <= 300; h += 11) {
      const PartitionPlan p = plan_partition({w, h}, 48, 6);
      const auto [m, n] = oracle::brute_force_plan(w, h, 48, 6);
      ASSERT_EQ(std::pair(p.m, p.n), std::pair(m, n)) << w << "x" << h;
    }
}

TEST(PlanPartition, GridFormulaInvariants) {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    const ImageGeom g{static_cast<int>(rng.uniform_int(64, 4096)), static_cast<int>(rng.uniform_int(64, 4096))};
    const PartitionPlan p = plan_partition(g);
    EXPECT_GE(p.m, 1);
    EXPECT_LE(p.m, 6);
    EXPECT_GE(p.n, 1);
    EXPECT_LE(p.n, 6);
    EXPECT_DOUBLE_EQ(p.scale, std::min(p.m * 336.0 / g.width, p.n * 336.0 / g.height));
    EXPECT_GE(p.wasted, 0.0);
    EXPECT_LE(p.utilized, static_cast<double>(g.width) * g.height * (1 + 1e-12));
  }
}

TEST(Resize, ConstantStaysConstant) {
  const Matrix src(40, 30, 0.7);
  const Matrix out = resize_bilinear(src, 17, 53);
  for (double v : out.data()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Resize, IdentityAndLinearRamp) {
  const SyntheticImage img = ramp(20, 10);
  EXPECT_EQ(resize_bilinear(img.pixels, 10, 20), img.pixels);
  // Downsampling by two with half-pixel centers averages neighbours of a linear ramp.
  const Matrix half = resize_bilinear(img.pixels, 5, 10);
  EXPECT_NEAR(half(0, 0), 0.5 * (img.pixels(0, 0) + img.pixels(1, 1)), 1e-14);
}

TEST(GlobalView, IdentityAtBase) {
  const SyntheticImage img = ramp(336, 336);
  EXPECT_EQ(make_global_view(img).pixels, img.pixels);
}

TEST(GlobalView, ConstantDownscale) {
  const SyntheticImage img(SyntheticImage(672, 672, 0.4));
  const SyntheticImage v = make_global_view(img);
  EXPECT_EQ(v.width(), 336);
  for (double x : v.pixels.data()) EXPECT_NEAR(x, 0.4, 1e-15);
}

TEST(GlobalView, WideImagePadsTopAndBottom) {
  const SyntheticImage v = make_global_view(SyntheticImage(672, 336, 1.0));
  ASSERT_EQ(v.height(), 336);
  for (std::size_t r = 0; r < 336; ++r) {
    const double expected = (r >= 84 && r < 252) ? 1.0 : 0.0;
    for (std::size_t c = 0; c < 336; ++c) ASSERT_NEAR(v.pixels(r, c), expected, 1e-15) << r;
  }
}

TEST(Patches, SingleTileIsInput) {
  const SyntheticImage img = ramp(336, 336);
  const auto patches = extract_patches(img, plan_partition(img.geom()));
  ASSERT_EQ(patches.size(), 1u);
  EXPECT_EQ(patches[0].pixels, img.pixels);
}

TEST(Patches, ReassembleToResizedImage) {
  const SyntheticImage img = ramp(672, 672);
  const PartitionPlan plan = plan_partition(img.geom());
  ASSERT_EQ(plan.tiles(), 4);
  const auto patches = extract_patches(img, plan);
  ASSERT_EQ(patches.size(), 4u);
  const Matrix canvas = padded_canvas(img, plan);
  for (int k = 0; k < 4; ++k) {
    const std::size_t oy = static_cast<std::size_t>(k / 2) * 336, ox = static_cast<std::size_t>(k % 2) * 336;
    for (std::size_t r = 0; r < 336; r += 5)
      for (std::size_t c = 0; c < 336; c += 5)
        ASSERT_EQ(patches[static_cast<std::size_t>(k)].pixels(r, c), canvas(oy + r, ox + c));
  }
  EXPECT_EQ(canvas, img.pixels);  // scale 1, no padding
}

TEST(Patches, SixteenTilesAndZeroBorder) {
  const SyntheticImage img(SyntheticImage(1024, 700, 1.0));
  const PartitionPlan plan = plan_partition(img.geom());
  const auto patches = extract_patches(img, plan);
  ASSERT_EQ(patches.size(), static_cast<std::size_t>(plan.tiles()));

  const SyntheticImage square(SyntheticImage(1024, 1024, 1.0));
  const PartitionPlan p16 = plan_partition(square.geom());
  ASSERT_EQ(p16.tiles(), 16);
  EXPECT_EQ(extract_patches(square, p16).size(), 16u);

  // Direct index arithmetic for the padded layout of the non-square case.
  const long content_w = std::lround(1024 * plan.scale);
  const long content_h = std::lround(700 * plan.scale);
  const long top = (plan.n * 336 - content_h) / 2;
  const long left = (plan.m * 336 - content_w) / 2;
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const long oy = static_cast<long>(k) / plan.m * 336, ox = static_cast<long>(k) % plan.m * 336;
    for (long r = 0; r < 336; r += 3)
      for (long c = 0; c < 336; c += 3) {
        const long y = oy + r, x = ox + c;
        const bool inside = y >= top && y < top + content_h && x >= left && x < left + content_w;
        ASSERT_NEAR(patches[k].pixels(static_cast<std::size_t>(r), static_cast<std::size_t>(c)),
                    inside ? 1.0 : 0.0, 1e-15);
      }
  }
}

TEST(Patches, RowMajorOrder) {
  SyntheticImage img(672, 336);
  for (std::size_t r = 0; r < 336; ++r)
    for (std::size_t c = 336; c < 672; ++c) img.pixels(r, c) = 1.0;
  const auto patches = extract_patches(img, plan_partition(img.geom()));
  ASSERT_EQ(patches.size(), 2u);
  EXPECT_DOUBLE_EQ(patches[0].pixels(10, 10), 0.0);
  EXPECT_DOUBLE_EQ(patches[1].pixels(10, 10), 1.0);
}

}  // namespace
}  // namespace slime
