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

// Local branch: per-patch compression to N_q tokens, then a text-guided
// router that keeps the smallest top-score prefix reaching mass gamma.

#pragma once

#include <algorithm>
#include <functional>
#include <iostream>
#include <numeric>
#include <string_view>

#include <nlohmann/json.hpp>

#include "slime/global_adapter.hpp"
#include "slime/numerics.hpp"

namespace slime {

inline constexpr std::size_t kDefaultLocalQueries = 144;
inline constexpr double kDefaultGamma = 0.75;
inline constexpr double kDefaultRouterNoise = 0.1;

/// Receives non-fatal diagnostics. Defaults to std::clog.
inline std::function<void(std::string_view)>& warning_sink() {
  static std::function<void(std::string_view)> sink = [](std::string_view msg) {
    std::clog << "warning: " << msg << '\n';
  };
  return sink;
}

/// Compresses each patch's L tokens to N_q tokens; outputs are stacked in patch order.
inline Matrix compress_local(std::span<const Matrix> patch_tokens, const QFormerParams& p) {
  std::vector<Matrix> parts;
  parts.reserve(patch_tokens.size());
  bool expands = false;
  for (const Matrix& tokens : patch_tokens) {
    expands = expands || p.num_queries() >= tokens.rows();
    parts.push_back(qformer_forward(tokens, p));
  }
  if (expands) warning_sink()("local compression does not reduce tokens (N_q >= L)");
  if (parts.empty()) return Matrix(0, p.out_dim());
  return vstack(parts);
}

inline Matrix compress_local(const Matrix& patch_tokens, const QFormerParams& p) {
  return compress_local(std::span<const Matrix>(&patch_tokens, 1), p);
}

struct RouterConfig {
  double gamma = kDefaultGamma;
  double train_noise_sigma = kDefaultRouterNoise;
  bool training_mode = false;
};

inline void validate(const RouterConfig& cfg) {
  require(cfg.gamma > 0.0 && cfg.gamma <= 1.0, "router gamma must lie in (0, 1]");
  require(cfg.train_noise_sigma >= 0.0, "router noise sigma must be non-negative");
}

struct RouterSelection {
  double gamma = kDefaultGamma;
  std::vector<std::size_t> kept_indices;  // descending (possibly perturbed) score
  Vector scores;                          // noiseless post-softmax scores
  double cumulative_at_cut = 0.0;
};

/// Sorts by `sort_keys` descending (ties to the lower index) and keeps the
/// shortest prefix whose noiseless mass reaches gamma (inclusive).
inline RouterSelection select_by_scores(Vector scores, std::span<const double> sort_keys,
                                        double gamma) {
  require(!scores.empty(), "empty inputs");
  require(sort_keys.size() == scores.size(), "router: key length mismatch");
  require(gamma > 0.0 && gamma <= 1.0, "router gamma must lie in (0, 1]");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sort_keys[a] > sort_keys[b]; });

  RouterSelection sel;
  sel.gamma = gamma;
  double mass = 0.0;
  // gamma = 1 keeps everything even when rounding lets a partial sum reach 1.
  for (std::size_t idx : order) {
    sel.kept_indices.push_back(idx);
    mass += scores[idx];
    if (mass >= gamma && gamma < 1.0) break;
  }
  sel.cumulative_at_cut = mass;
  sel.scores = std::move(scores);
  return sel;
}

inline RouterSelection select_by_scores(Vector scores, double gamma) {
  const Vector keys = scores;
  return select_by_scores(std::move(scores), keys, gamma);
}

/// softmax over image tokens of the text-averaged similarity z_v z_x^T.
inline Vector router_scores(const Matrix& z_v, const Matrix& z_x) {
  require(z_v.rows() >= 1 && z_x.rows() >= 1, "empty inputs");
  require(z_v.cols() == z_x.cols(), "router: image/text width mismatch");
  const Matrix sim = matmul_nt(z_v, z_x);
  Vector mean_sim(sim.rows());
  for (std::size_t i = 0; i < sim.rows(); ++i)
    mean_sim[i] = std::accumulate(sim.row(i).begin(), sim.row(i).end(), 0.0) /
                  static_cast<double>(sim.cols());
  return softmax(mean_sim);
}

inline RouterSelection route_tokens(const Matrix& z_v, const Matrix& z_x, const RouterConfig& cfg,
                                    Rng& rng) {
  validate(cfg);
  Vector scores = router_scores(z_v, z_x);
  Vector keys = scores;
  if (cfg.training_mode && cfg.train_noise_sigma > 0.0)
    for (double& k : keys) k += rng.normal(0.0, cfg.train_noise_sigma);
  return select_by_scores(std::move(scores), keys, cfg.gamma);
}

inline Matrix apply_selection(const Matrix& z_v, const RouterSelection& sel) {
  for (std::size_t idx : sel.kept_indices)
    require(idx < z_v.rows(), "router selection index out of range");
  return gather_rows(z_v, sel.kept_indices);
}

inline nlohmann::json to_json(const RouterSelection& sel) {
  return {{"gamma", sel.gamma},
          {"kept", sel.kept_indices},
          {"scores", sel.scores},
          {"cumulative", sel.cumulative_at_cut}};
}

}  // namespace slime
