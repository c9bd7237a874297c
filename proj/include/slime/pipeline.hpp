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

// Toy student-teacher task wiring slicing -> global MoE -> local compression
// -> router -> mean-pool -> linear readout, plus staged full-batch training.
//
// The teacher reads the full-resolution feature grid: a linear term on the
// mean token plus a gelu term on region-pooled tokens. Images carry a fine
// checker texture that the downsampled global view cannot resolve, so only
// the local branch can recover that part of the target.

#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slime/global_adapter.hpp"
#include "slime/local_path.hpp"
#include "slime/numerics.hpp"
#include "slime/params.hpp"
#include "slime/slicing.hpp"

namespace slime::pipeline {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TaskConfig {
  int tile = 48;        // base resolution of one tile in the toy
  int token_grid = 3;   // tokens per tile side
  int max_grid = kMaxGrid;
  int min_tiles = 2;    // image sides are drawn from tile * [min_tiles, max_tiles]
  int max_tiles = 4;
  std::size_t vision_dim = 8;
  std::size_t output_dim = 4;
  std::size_t text_tokens = 2;
  std::size_t train_images = 32;
  std::size_t eval_images = 32;
  double texture_amplitude = 0.25;
  int texture_period = 4;  // pixels, must be even
  double teacher_nonlinear = 0.5;  // weight of the gelu region term in the target

  int cell() const { return tile / token_grid; }
  std::size_t tokens_per_tile() const {
    return static_cast<std::size_t>(token_grid) * static_cast<std::size_t>(token_grid);
  }
};

inline void validate(const TaskConfig& c) {
  require(c.tile >= 1 && c.token_grid >= 1 && c.tile % c.token_grid == 0,
          "tile must be a positive multiple of token_grid");
  require(c.max_grid >= 1, "max_grid must be positive");
  require(c.min_tiles >= 1 && c.max_tiles >= c.min_tiles, "invalid tile range");
  require(c.vision_dim >= 1 && c.output_dim >= 1 && c.text_tokens >= 1, "dimensions must be positive");
  require(c.train_images >= 1 && c.eval_images >= 1, "need at least one train and eval image");
  require(c.texture_period >= 2 && c.texture_period % 2 == 0, "texture_period must be even");
}

struct ModelConfig {
  std::size_t llm_dim = 8;
  std::size_t local_queries = 4;
  double gamma = kDefaultGamma;
  double router_noise = kDefaultRouterNoise;
  bool gate_noise = true;
  std::optional<std::array<double, 2>> forced_gate;
};

inline void validate(const ModelConfig& c) {
  require(c.llm_dim >= 1 && c.local_queries >= 1, "model dimensions must be positive");
  validate(RouterConfig{c.gamma, c.router_noise, false});
  if (c.forced_gate) {
    const auto& g = *c.forced_gate;
    require(g[0] >= 0.0 && g[1] >= 0.0 && std::abs(g[0] + g[1] - 1.0) < 1e-12,
            "forced gate must lie in the 2-simplex");
  }
}

// ---------------------------------------------------------------------------
// Task
// ---------------------------------------------------------------------------

/// One image after planning, slicing and feature extraction.
struct Example {
  ImageGeom geom;
  PartitionPlan plan;
  Matrix global_tokens;              // tokens_per_tile x D_I
  std::vector<Matrix> patch_tokens;  // one tokens_per_tile x D_I block per tile
  Vector target;
};

/// Frozen linear encoder over non-overlapping cell x cell blocks, row-major.
inline Matrix encode_cells(const Matrix& pixels, const Matrix& encoder, int cell) {
  const auto c = static_cast<std::size_t>(cell);
  require(encoder.cols() == c * c, "encoder width must equal cell^2");
  const std::size_t gy = pixels.rows() / c;
  const std::size_t gx = pixels.cols() / c;
  require(gy >= 1 && gx >= 1, "image smaller than one cell");
  Matrix tokens(gy * gx, encoder.rows());
  Vector block(c * c);
  for (std::size_t by = 0; by < gy; ++by)
    for (std::size_t bx = 0; bx < gx; ++bx) {
      for (std::size_t r = 0; r < c; ++r)
        std::copy_n(pixels.row(by * c + r).begin() + bx * c, c, block.begin() + r * c);
      const Vector t = matvec(encoder, block);
      std::copy(t.begin(), t.end(), tokens.row(by * gx + bx).begin());
    }
  return tokens;
}

/// Averages a gy x gx token grid over a regions x regions partition
/// (region bounds rounded down, every region non-empty).
inline Matrix region_pool(const Matrix& grid, std::size_t gy, std::size_t gx, std::size_t regions) {
  require(grid.rows() == gy * gx, "region_pool: grid size mismatch");
  require(regions >= 1 && regions <= gy && regions <= gx, "region_pool: too many regions");
  Matrix out(regions * regions, grid.cols());
  for (std::size_t ry = 0; ry < regions; ++ry)
    for (std::size_t rx = 0; rx < regions; ++rx) {
      const std::size_t y0 = ry * gy / regions, y1 = (ry + 1) * gy / regions;
      const std::size_t x0 = rx * gx / regions, x1 = (rx + 1) * gx / regions;
      auto dst = out.row(ry * regions + rx);
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) axpy(1.0, grid.row(y * gx + x), dst);
      const double inv = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
      for (double& v : dst) v *= inv;
    }
  return out;
}

/// Smooth random field plus a checker texture with smoothly varying amplitude.
inline SyntheticImage generate_image(const TaskConfig& cfg, Rng& rng) {
  const int w = cfg.tile * static_cast<int>(rng.uniform_int(cfg.min_tiles, cfg.max_tiles));
  const int h = cfg.tile * static_cast<int>(rng.uniform_int(cfg.min_tiles, cfg.max_tiles));
  struct Wave {
    double amp, fx, fy, phase;
  };
  std::array<Wave, 3> waves{};
  for (auto& wv : waves)
    wv = {rng.uniform(-0.15, 0.15), static_cast<double>(rng.uniform_int(0, 2)),
          static_cast<double>(rng.uniform_int(0, 2)), rng.uniform(0.0, 2.0 * std::numbers::pi)};
  const double tex = cfg.texture_amplitude * rng.uniform();
  const double gx = static_cast<double>(rng.uniform_int(0, 2));
  const double gy = static_cast<double>(rng.uniform_int(0, 2));
  const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double brightness = rng.uniform(0.35, 0.65);
  const int half = cfg.texture_period / 2;

  SyntheticImage img(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double x = static_cast<double>(c) / w;
      const double y = static_cast<double>(r) / h;
      double v = brightness;
      for (const auto& wv : waves)
        v += wv.amp * std::cos(2.0 * std::numbers::pi * (wv.fx * x + wv.fy * y) + wv.phase);
      const double amp = tex * (0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * (gx * x + gy * y) + psi));
      const double checker = ((r / half + c / half) % 2 == 0) ? 1.0 : -1.0;
      v += amp * checker;
      img.pixels(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::clamp(v, 0.0, 1.0);
    }
  return img;
}

struct ToyTask {
  TaskConfig config;
  Matrix encoder;  // D_I x cell^2
  Matrix teacher;            // D_I x output_dim, linear in the mean full-resolution token
  Matrix teacher_mix;        // D_I x D_I
  Matrix teacher_nonlinear;  // D_I x output_dim, on the mean of gelu(region token * teacher_mix)
  Matrix text;     // text_tokens x D (the question embedding used for routing)
  std::vector<Example> train;
  std::vector<Example> eval;

  // Per-output affine map fixed from the training split so every target
  // dimension has zero mean and unit variance there.
  Vector target_shift;
  Vector target_scale;

  void standardize_targets() {
    const std::size_t k = config.output_dim;
    target_shift.assign(k, 0.0);
    target_scale.assign(k, 1.0);
    const auto n = static_cast<double>(train.size());
    for (const Example& ex : train) axpy(1.0 / n, ex.target, target_shift);
    Vector var(k, 0.0);
    for (const Example& ex : train)
      for (std::size_t j = 0; j < k; ++j) var[j] += (ex.target[j] - target_shift[j]) * (ex.target[j] - target_shift[j]) / n;
    for (std::size_t j = 0; j < k; ++j) target_scale[j] = var[j] > 1e-24 ? 1.0 / std::sqrt(var[j]) : 1.0;
    for (auto* split : {&train, &eval})
      for (Example& ex : *split)
        for (std::size_t j = 0; j < k; ++j) ex.target[j] = (ex.target[j] - target_shift[j]) * target_scale[j];
  }

  Example encode(const SyntheticImage& img) const {
    Example ex;
    ex.geom = img.geom();
    ex.plan = plan_partition(ex.geom, config.tile, config.max_grid);
    ex.global_tokens = encode_cells(make_global_view(img, config.tile).pixels, encoder, config.cell());
    for (const SyntheticImage& patch : extract_patches(img, ex.plan))
      ex.patch_tokens.push_back(encode_cells(patch.pixels, encoder, config.cell()));
    const Matrix full_res = encode_cells(img.pixels, encoder, config.cell());
    ex.target = vecmat(column_mean(full_res), teacher);
    const Matrix regions = region_pool(full_res, static_cast<std::size_t>(img.height() / config.cell()),
                                       static_cast<std::size_t>(img.width() / config.cell()),
                                       static_cast<std::size_t>(config.token_grid));
    Matrix summary = matmul(regions, teacher_mix);
    for (double& v : summary.data()) v = gelu(v);
    axpy(config.teacher_nonlinear, vecmat(column_mean(summary), teacher_nonlinear), ex.target);
    if (!target_shift.empty())
      for (std::size_t j = 0; j < ex.target.size(); ++j)
        ex.target[j] = (ex.target[j] - target_shift[j]) * target_scale[j];
    return ex;
  }

  static ToyTask make(const TaskConfig& cfg, std::size_t llm_dim, std::uint64_t seed) {
    validate(cfg);
    Rng rng = Rng(seed).fork(1);
    ToyTask t;
    t.config = cfg;
    const auto cell = static_cast<std::size_t>(cfg.cell());
    t.encoder = rng.normal_matrix(cfg.vision_dim, cell * cell, 1.0 / static_cast<double>(cell));
    t.teacher = rng.normal_matrix(cfg.vision_dim, cfg.output_dim,
                                  1.0 / std::sqrt(static_cast<double>(cfg.vision_dim)));
    t.teacher_mix = rng.normal_matrix(cfg.vision_dim, cfg.vision_dim,
                                      4.0 / std::sqrt(static_cast<double>(cfg.vision_dim)));
    t.teacher_nonlinear = rng.normal_matrix(cfg.vision_dim, cfg.output_dim,
                                            1.0 / std::sqrt(static_cast<double>(cfg.vision_dim)));
    t.text = rng.normal_matrix(cfg.text_tokens, llm_dim, 1.0);
    for (std::size_t i = 0; i < cfg.train_images; ++i) t.train.push_back(t.encode(generate_image(cfg, rng)));
    for (std::size_t i = 0; i < cfg.eval_images; ++i) t.eval.push_back(t.encode(generate_image(cfg, rng)));
    t.standardize_targets();
    return t;
  }
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ModelParams {
  MlpParams mlp;
  QFormerParams global_qformer;  // N_q = tokens per global view
  GateParams gate;
  QFormerParams local_qformer;   // the local compression layer
  Matrix readout;                // D x output_dim

  static ModelParams random(const TaskConfig& task, const ModelConfig& model, Rng& rng) {
    const std::size_t di = task.vision_dim;
    const std::size_t d = model.llm_dim;
    ModelParams p;
    p.mlp = MlpParams::random(di, d, d, rng);
    p.global_qformer = QFormerParams::random(task.tokens_per_tile(), di, d, rng);
    p.gate = GateParams::random(di, rng);
    p.local_qformer = QFormerParams::random(model.local_queries, di, d, rng);
    p.readout = rng.normal_matrix(d, task.output_dim, 1.0 / std::sqrt(static_cast<double>(d)));
    return p;
  }

  template <class F> void visit(F&& f) { visit_impl(*this, f); }
  template <class F> void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    auto prefixed = [&f](const char* prefix) {
      return [&f, prefix](std::string_view name, auto& m) { f(std::string(prefix) + std::string(name), m); };
    };
    s.mlp.visit(prefixed("mlp."));
    s.global_qformer.visit(prefixed("global_qformer."));
    s.gate.visit(prefixed("gate."));
    s.local_qformer.visit(prefixed("local_qformer."));
    f(std::string("readout"), s.readout);
  }
};

/// Which parameter groups an update may touch.
struct Trainable {
  bool adapter = true;      // MLP, global query former, gate
  bool compression = true;  // local query former
  bool readout = true;

  static Trainable all() { return {true, true, true}; }
};

enum class TokenSet { full, global_only, local_only };

inline std::string to_string(TokenSet t) {
  switch (t) {
    case TokenSet::full: return "full";
    case TokenSet::global_only: return "only_global";
    case TokenSet::local_only: return "only_local";
  }
  return "full";
}

struct ForwardPass {
  TokenSet tokens = TokenSet::full;
  MoeResult global;
  Matrix local;  // compressed tokens of every patch, stacked
  RouterSelection selection;
  Vector pooled;
  Vector prediction;
  std::size_t global_count = 0;
  std::size_t local_count = 0;
};

inline bool uses_global(TokenSet t) { return t != TokenSet::local_only; }
inline bool uses_local(TokenSet t) { return t != TokenSet::global_only; }

/// Prediction = mean-pool([global tokens | kept local tokens]) * readout.
/// `fixed_selection` replaces the router decision (used for gradient checks).
inline ForwardPass forward(const Example& ex, const ModelParams& p, const ModelConfig& cfg,
                           const Matrix& text, TokenSet tokens, bool training, Rng& rng,
                           const RouterSelection* fixed_selection = nullptr) {
  ForwardPass fp;
  fp.tokens = tokens;
  const std::size_t d = p.readout.rows();
  Vector sum(d, 0.0);
  if (uses_global(tokens)) {
    GateParams gate = p.gate;
    gate.noise_enabled = training && cfg.gate_noise;
    fp.global = moe_forward_detailed(ex.global_tokens, p.mlp, p.global_qformer, gate, rng, cfg.forced_gate);
    fp.global_count = fp.global.out.rows();
    axpy(1.0, column_sum(fp.global.out), sum);
  }
  if (uses_local(tokens)) {
    fp.local = compress_local(ex.patch_tokens, p.local_qformer);
    if (fixed_selection) {
      fp.selection = *fixed_selection;
    } else {
      fp.selection = route_tokens(fp.local, text, RouterConfig{cfg.gamma, cfg.router_noise, training}, rng);
    }
    const Matrix kept = apply_selection(fp.local, fp.selection);
    fp.local_count = kept.rows();
    axpy(1.0, column_sum(kept), sum);
  }
  const std::size_t count = fp.global_count + fp.local_count;
  require(count > 0, "forward: no tokens to pool");
  fp.pooled = scaled(sum, 1.0 / static_cast<double>(count));
  fp.prediction = vecmat(fp.pooled, p.readout);
  return fp;
}

/// Encodes a raw image and runs the evaluation-mode forward pass.
inline Vector predict(const SyntheticImage& img, const ToyTask& task, const ModelParams& p,
                      const ModelConfig& cfg) {
  Rng unused(0);
  return forward(task.encode(img), p, cfg, task.text, TokenSet::full, false, unused).prediction;
}

/// Gradients of a loss with respect to every parameter, given dL/d(prediction).
inline ModelParams backward(const Example& ex, const ModelParams& p, const ForwardPass& fp,
                            std::span<const double> d_prediction) {
  ModelParams g = zeros_like(p);
  g.readout = matmul(Matrix(fp.pooled.size(), 1, fp.pooled),
                     Matrix::row_vector(d_prediction));
  const Vector d_pooled = matvec(p.readout, d_prediction);
  const double inv_count = 1.0 / static_cast<double>(fp.global_count + fp.local_count);
  const Vector d_token = scaled(d_pooled, inv_count);

  if (fp.global_count > 0) {
    Matrix d_out(fp.global_count, d_pooled.size());
    for (std::size_t r = 0; r < d_out.rows(); ++r) std::copy(d_token.begin(), d_token.end(), d_out.row(r).begin());
    AdapterGrads ag = adapter_grads(ex.global_tokens, p.mlp, p.global_qformer, p.gate, fp.global, d_out);
    g.mlp = std::move(ag.mlp);
    g.global_qformer = std::move(ag.qformer);
    g.gate = std::move(ag.gate);
  }
  if (fp.local_count > 0) {
    Matrix d_local(fp.local.rows(), fp.local.cols());
    for (std::size_t idx : fp.selection.kept_indices)
      std::copy(d_token.begin(), d_token.end(), d_local.row(idx).begin());
    const std::size_t nq = p.local_qformer.num_queries();
    for (std::size_t k = 0; k < ex.patch_tokens.size(); ++k) {
      Matrix d_patch(nq, d_local.cols());
      bool any = false;
      for (std::size_t q = 0; q < nq; ++q) {
        auto src = d_local.row(k * nq + q);
        std::copy(src.begin(), src.end(), d_patch.row(q).begin());
        any = any || std::any_of(src.begin(), src.end(), [](double v) { return v != 0.0; });
      }
      if (!any) continue;
      QFormerBackward qb = qformer_backward(ex.patch_tokens[k], p.local_qformer, d_patch);
      add_scaled_params(g.local_qformer, 1.0, qb.grads);
    }
  }
  return g;
}

inline double squared_error(std::span<const double> pred, std::span<const double> target) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return 0.5 * s;
}

/// Mean over examples of 1/2 |prediction - target|^2, evaluation mode.
inline double dataset_loss(std::span<const Example> data, const ModelParams& p, const ModelConfig& cfg,
                           const Matrix& text, TokenSet tokens) {
  Rng unused(0);
  double total = 0.0;
  for (const Example& ex : data)
    total += squared_error(forward(ex, p, cfg, text, tokens, false, unused).prediction, ex.target);
  return total / static_cast<double>(data.size());
}

struct BatchGradient {
  double loss = 0.0;
  ModelParams grads;
};

inline BatchGradient batch_gradient(std::span<const Example> data, const ModelParams& p,
                                    const ModelConfig& cfg, const Matrix& text, TokenSet tokens,
                                    bool training, Rng& rng) {
  BatchGradient out;
  out.grads = zeros_like(p);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (const Example& ex : data) {
    const ForwardPass fp = forward(ex, p, cfg, text, tokens, training, rng);
    out.loss += inv_n * squared_error(fp.prediction, ex.target);
    Vector d_pred(fp.prediction.size());
    for (std::size_t i = 0; i < d_pred.size(); ++i) d_pred[i] = inv_n * (fp.prediction[i] - ex.target[i]);
    add_scaled_params(out.grads, 1.0, backward(ex, p, fp, d_pred));
  }
  return out;
}

/// Zeroes the gradient of every frozen group.
inline void mask_frozen(ModelParams& g, const Trainable& t) {
  if (!t.adapter) {
    g.mlp = zeros_like(g.mlp);
    g.global_qformer = zeros_like(g.global_qformer);
    g.gate = zeros_like(g.gate);
  }
  if (!t.compression) g.local_qformer = zeros_like(g.local_qformer);
  if (!t.readout) std::fill(g.readout.data().begin(), g.readout.data().end(), 0.0);
}

inline double ablate(const ModelParams& p, const ToyTask& task, const ModelConfig& cfg, TokenSet arm) {
  return dataset_loss(task.eval, p, cfg, task.text, arm);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class Mode { alternating, e2e, only_global, only_local };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::alternating: return "alternating";
    case Mode::e2e: return "e2e";
    case Mode::only_global: return "only_global";
    case Mode::only_local: return "only_local";
  }
  return "e2e";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "alternating") return Mode::alternating;
  if (s == "e2e") return Mode::e2e;
  if (s == "only_global") return Mode::only_global;
  if (s == "only_local") return Mode::only_local;
  throw Error("unknown training mode '" + s + "'");
}

struct Stage {
  std::string name;
  long steps = 0;
  double lr = 0.0;
  Trainable trainable;
  TokenSet tokens = TokenSet::full;
};

struct TrainingConfig {
  std::array<long, 3> stage_steps{150, 150, 150};
  std::array<double, 3> stage_lr{0.2, 0.2, 0.2};
  double max_grad_norm = 1.0;  // global gradient-norm clip; 0 disables
};

inline void validate(const TrainingConfig& t) {
  for (long s : t.stage_steps) require(s >= 0, "stage steps must be non-negative");
  for (double lr : t.stage_lr) require(lr > 0.0, "stage learning rate must be positive");
  require(t.max_grad_norm >= 0.0, "max_grad_norm must be non-negative");
}

struct StageSchedule {
  Mode mode = Mode::alternating;
  std::vector<Stage> stages;
  std::uint64_t seed = 0;
  double max_grad_norm = 1.0;

  /// alternating: I global adapter on the global view, II local compression
  /// alone with the adapter frozen, III everything jointly. The single-stage
  /// modes run for the same total number of steps at the Stage I rate.
  static StageSchedule make(Mode mode, const TrainingConfig& t, std::uint64_t seed) {
    StageSchedule s;
    s.mode = mode;
    s.seed = seed;
    s.max_grad_norm = t.max_grad_norm;
    require(t.max_grad_norm >= 0.0, "max_grad_norm must be non-negative");
    const long total = t.stage_steps[0] + t.stage_steps[1] + t.stage_steps[2];
    switch (mode) {
      case Mode::alternating:
        s.stages = {{"stage1", t.stage_steps[0], t.stage_lr[0], {true, false, true}, TokenSet::global_only},
                    {"stage2", t.stage_steps[1], t.stage_lr[1], {false, true, false}, TokenSet::full},
                    {"stage3", t.stage_steps[2], t.stage_lr[2], Trainable::all(), TokenSet::full}};
        break;
      case Mode::e2e:
        s.stages = {{"e2e", total, t.stage_lr[0], Trainable::all(), TokenSet::full}};
        break;
      case Mode::only_global:
        s.stages = {{"only_global", total, t.stage_lr[0], {true, false, true}, TokenSet::global_only}};
        break;
      case Mode::only_local:
        s.stages = {{"only_local", total, t.stage_lr[0], {false, true, true}, TokenSet::local_only}};
        break;
    }
    for (const Stage& st : s.stages) {
      require(st.steps >= 0, "stage steps must be non-negative");
      require(st.lr > 0.0, "stage learning rate must be positive");
    }
    return s;
  }

  TokenSet eval_tokens() const {
    switch (mode) {
      case Mode::only_global: return TokenSet::global_only;
      case Mode::only_local: return TokenSet::local_only;
      default: return TokenSet::full;
    }
  }
};

struct StepRecord {
  long step = 0;
  std::string stage;
  double loss = 0.0;
};

struct RunReport {
  Mode mode = Mode::alternating;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  double initial_eval = 0.0;
  double final_eval = 0.0;
  double only_global_eval = 0.0;
  double only_local_eval = 0.0;
  bool diverged = false;
  ModelParams params;
};

inline constexpr double kDivergenceLoss = 1e10;

/// Full-batch gradient descent through the schedule. Row 0 is the initial
/// training loss; row t is the noiseless training loss after update t,
/// measured on the token set of the stage that made the update.
inline RunReport train(const StageSchedule& schedule, const ToyTask& task, const ModelConfig& cfg,
                       std::optional<ModelParams> init = std::nullopt) {
  validate(cfg);
  Rng root(schedule.seed);
  Rng init_rng = root.fork(2);
  Rng noise_rng = root.fork(3);

  RunReport rep;
  rep.mode = schedule.mode;
  rep.seed = schedule.seed;
  rep.params = init ? std::move(*init) : ModelParams::random(task.config, cfg, init_rng);
  ModelParams& p = rep.params;

  const TokenSet first_tokens = schedule.stages.empty() ? TokenSet::full : schedule.stages.front().tokens;
  rep.steps.push_back({0, "init", dataset_loss(task.train, p, cfg, task.text, first_tokens)});
  rep.initial_eval = dataset_loss(task.eval, p, cfg, task.text, schedule.eval_tokens());

  long step = 0;
  for (const Stage& st : schedule.stages) {
    if (rep.diverged) break;
    for (long i = 0; i < st.steps; ++i) {
      BatchGradient bg = batch_gradient(task.train, p, cfg, task.text, st.tokens, true, noise_rng);
      mask_frozen(bg.grads, st.trainable);
      double scale = st.lr;
      if (schedule.max_grad_norm > 0.0) {
        const double gn = norm(flatten(bg.grads));
        if (gn > schedule.max_grad_norm) scale *= schedule.max_grad_norm / gn;
      }
      add_scaled_params(p, -scale, bg.grads);
      const double l = dataset_loss(task.train, p, cfg, task.text, st.tokens);
      rep.steps.push_back({++step, st.name, l});
      if (!std::isfinite(l) || l > kDivergenceLoss || !params_finite(p)) {
        rep.diverged = true;
        break;
      }
    }
  }
  if (rep.diverged) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rep.final_eval = rep.only_global_eval = rep.only_local_eval = nan;
    return rep;
  }
  rep.final_eval = ablate(p, task, cfg, schedule.eval_tokens());
  rep.only_global_eval = ablate(p, task, cfg, TokenSet::global_only);
  rep.only_local_eval = ablate(p, task, cfg, TokenSet::local_only);
  return rep;
}

inline void write_report_csv(std::ostream& os, const RunReport& rep) {
  char buf[32];
  os << "step,stage,loss\n";
  for (const StepRecord& r : rep.steps) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    os << r.step << ',' << r.stage << ',' << buf << '\n';
  }
}

inline nlohmann::json summary_json(const RunReport& rep) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  return {{"mode", to_string(rep.mode)},
          {"seed", rep.seed},
          {"final_eval", num(rep.final_eval)},
          {"only_global_eval", num(rep.only_global_eval)},
          {"only_local_eval", num(rep.only_local_eval)},
          {"initial_eval", num(rep.initial_eval)},
          {"diverged", rep.diverged}};
}

}  // namespace slime::pipeline
