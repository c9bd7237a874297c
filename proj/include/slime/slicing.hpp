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

// Adaptive slicing: choose an m x n grid of base-resolution tiles for an
// image, then produce the padded global view and the local patches.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "slime/numerics.hpp"

namespace slime {

inline constexpr int kBaseResolution = 336;
inline constexpr int kMaxGrid = 6;

struct ImageGeom {
  int width = 0;
  int height = 0;
};

inline void validate(const ImageGeom& g) {
  require(g.width >= 1 && g.height >= 1, "image geometry must be at least 1x1");
}

struct PartitionPlan {
  int m = 1;  // tiles across
  int n = 1;  // tiles down
  double scale = 1.0;
  double utilized = 0.0;
  double wasted = 0.0;
  int base = kBaseResolution;

  int tiles() const { return m * n; }
};

/// Scale, utilized and wasted resolution of one candidate grid.
inline PartitionPlan evaluate_grid(const ImageGeom& g, int m, int n, int base = kBaseResolution) {
  const double w = g.width;
  const double h = g.height;
  PartitionPlan p;
  p.m = m;
  p.n = n;
  p.base = base;
  p.scale = std::min(m * static_cast<double>(base) / w, n * static_cast<double>(base) / h);
  p.utilized = std::min(w * h, w * p.scale * h * p.scale);
  const double capacity = static_cast<double>(m) * base * n * base;
  p.wasted = std::max(0.0, capacity - p.utilized);
  return p;
}

namespace detail {
inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}
}  // namespace detail

inline constexpr double kPlanTieTolerance = 1e-9;

/// Picks the grid in [1, max_grid]^2 that maximizes utilized resolution, then
/// minimizes wasted resolution; remaining ties go to the smallest (m, n).
inline PartitionPlan plan_partition(const ImageGeom& g, int base = kBaseResolution,
                                    int max_grid = kMaxGrid) {
  validate(g);
  require(base >= 1, "base resolution must be positive");
  PartitionPlan best = evaluate_grid(g, 1, 1, base);
  for (int m = 1; m <= max_grid; ++m) {
    for (int n = 1; n <= max_grid; ++n) {
      const PartitionPlan cand = evaluate_grid(g, m, n, base);
      bool better;
      if (!detail::close_rel(cand.utilized, best.utilized, kPlanTieTolerance)) {
        better = cand.utilized > best.utilized;
      } else if (!detail::close_rel(cand.wasted, best.wasted, kPlanTieTolerance)) {
        better = cand.wasted < best.wasted;
      } else {
        better = std::pair(cand.m, cand.n) < std::pair(best.m, best.n);
      }
      if (better) best = cand;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Synthetic images
// ---------------------------------------------------------------------------

/// Single-channel image; pixels(row, col) with rows = height.
struct SyntheticImage {
  Matrix pixels;

  SyntheticImage() = default;
  explicit SyntheticImage(Matrix px) : pixels(std::move(px)) {}
  SyntheticImage(int width, int height, double fill = 0.0)
      : pixels(static_cast<std::size_t>(height), static_cast<std::size_t>(width), fill) {}

  int width() const { return static_cast<int>(pixels.cols()); }
  int height() const { return static_cast<int>(pixels.rows()); }
  ImageGeom geom() const { return {width(), height()}; }
};

/// Bilinear resampling with half-pixel centers and edge clamping.
inline Matrix resize_bilinear(const Matrix& src, std::size_t out_rows, std::size_t out_cols) {
  require(src.rows() > 0 && src.cols() > 0, "resize: empty source");
  require(out_rows > 0 && out_cols > 0, "resize: empty target");
  if (out_rows == src.rows() && out_cols == src.cols()) return src;
  Matrix out(out_rows, out_cols);
  const double sy = static_cast<double>(src.rows()) / static_cast<double>(out_rows);
  const double sx = static_cast<double>(src.cols()) / static_cast<double>(out_cols);
  const auto max_r = static_cast<double>(src.rows() - 1);
  const auto max_c = static_cast<double>(src.cols() - 1);
  for (std::size_t r = 0; r < out_rows; ++r) {
    const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, max_r);
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, src.rows() - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_cols; ++c) {
      const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, max_c);
      const auto x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, src.cols() - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = src(y0, x0) + fx * (src(y0, x1) - src(y0, x0));
      const double bottom = src(y1, x0) + fx * (src(y1, x1) - src(y1, x0));
      out(r, c) = top + fy * (bottom - top);
    }
  }
  return out;
}

/// Places `src` centered on a zero canvas (extra pixel goes to the bottom/right).
inline Matrix pad_centered(const Matrix& src, std::size_t rows, std::size_t cols) {
  require(src.rows() <= rows && src.cols() <= cols, "pad: source larger than canvas");
  Matrix out(rows, cols, 0.0);
  const std::size_t top = (rows - src.rows()) / 2;
  const std::size_t left = (cols - src.cols()) / 2;
  for (std::size_t r = 0; r < src.rows(); ++r)
    std::copy_n(src.row(r).begin(), src.cols(), out.row(top + r).begin() + left);
  return out;
}

namespace detail {
inline std::size_t scaled_extent(int extent, double scale, int limit) {
  const auto v = static_cast<long>(std::lround(extent * scale));
  return static_cast<std::size_t>(std::clamp<long>(v, 1, limit));
}
}  // namespace detail

/// Aspect-preserving resize so the longer side equals `base`, then symmetric
/// zero padding to base x base.
inline SyntheticImage make_global_view(const SyntheticImage& img, int base = kBaseResolution) {
  validate(img.geom());
  const double scale = static_cast<double>(base) / std::max(img.width(), img.height());
  const std::size_t w = detail::scaled_extent(img.width(), scale, base);
  const std::size_t h = detail::scaled_extent(img.height(), scale, base);
  const auto b = static_cast<std::size_t>(base);
  return SyntheticImage(pad_centered(resize_bilinear(img.pixels, h, w), b, b));
}

/// The image resized by plan.scale and zero-padded to (n*base) x (m*base).
inline Matrix padded_canvas(const SyntheticImage& img, const PartitionPlan& plan) {
  validate(img.geom());
  const int canvas_w = plan.m * plan.base;
  const int canvas_h = plan.n * plan.base;
  const std::size_t w = detail::scaled_extent(img.width(), plan.scale, canvas_w);
  const std::size_t h = detail::scaled_extent(img.height(), plan.scale, canvas_h);
  return pad_centered(resize_bilinear(img.pixels, h, w), static_cast<std::size_t>(canvas_h),
                      static_cast<std::size_t>(canvas_w));
}

/// Cuts the padded canvas into m*n base x base tiles, top-to-bottom then left-to-right.
inline std::vector<SyntheticImage> extract_patches(const SyntheticImage& img,
                                                   const PartitionPlan& plan) {
  require(plan.m >= 1 && plan.n >= 1, "plan must have at least one tile");
  const Matrix canvas = padded_canvas(img, plan);
  const auto b = static_cast<std::size_t>(plan.base);
  std::vector<SyntheticImage> patches;
  patches.reserve(static_cast<std::size_t>(plan.tiles()));
  for (int ty = 0; ty < plan.n; ++ty) {
    for (int tx = 0; tx < plan.m; ++tx) {
      Matrix tile(b, b);
      for (std::size_t r = 0; r < b; ++r)
        std::copy_n(canvas.row(ty * b + r).begin() + tx * b, b, tile.row(r).begin());
      patches.emplace_back(std::move(tile));
    }
  }
  return patches;
}

}  // namespace slime
