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

// Global adapters: an MLP projector, a learnable-query cross-attention
// projector, and a noisy two-way gate that mixes them softly.

#pragma once

#include <array>
#include <optional>

#include "slime/numerics.hpp"
#include "slime/params.hpp"

namespace slime {

/// out = gelu(x * w1 + b1) * w2 + b2, applied per token row.
struct MlpParams {
  Matrix w1;  // D_I x D_h
  Matrix b1;  // 1 x D_h
  Matrix w2;  // D_h x D
  Matrix b2;  // 1 x D

  static MlpParams random(std::size_t d_in, std::size_t d_hidden, std::size_t d_out, Rng& rng) {
    MlpParams p;
    p.w1 = rng.normal_matrix(d_in, d_hidden, 1.0 / std::sqrt(static_cast<double>(d_in)));
    p.b1 = Matrix(1, d_hidden);
    p.w2 = rng.normal_matrix(d_hidden, d_out, 1.0 / std::sqrt(static_cast<double>(d_hidden)));
    p.b2 = Matrix(1, d_out);
    return p;
  }

  std::size_t in_dim() const { return w1.rows(); }
  std::size_t out_dim() const { return w2.cols(); }

  template <class F> void visit(F&& f) { visit_impl(*this, f); }
  template <class F> void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("W1", s.w1);
    f("b1", s.b1);
    f("W2", s.w2);
    f("b2", s.b2);
  }
};

/// A single cross-attention layer whose queries are learned embeddings,
/// followed by an output projection to the LLM width.
struct QFormerParams {
  Matrix queries;  // N_q x D_I
  Matrix wk;       // D_I x D_I
  Matrix wv;       // D_I x D_I
  Matrix wo;       // D_I x D

  static QFormerParams random(std::size_t num_queries, std::size_t d_in, std::size_t d_out,
                              Rng& rng) {
    require(num_queries >= 1, "query former needs at least one query");
    const double s = 1.0 / std::sqrt(static_cast<double>(d_in));
    QFormerParams p;
    p.queries = rng.normal_matrix(num_queries, d_in, 1.0);
    p.wk = rng.normal_matrix(d_in, d_in, s);
    p.wv = rng.normal_matrix(d_in, d_in, s);
    p.wo = rng.normal_matrix(d_in, d_out, s);
    return p;
  }

  std::size_t num_queries() const { return queries.rows(); }
  std::size_t in_dim() const { return queries.cols(); }
  std::size_t out_dim() const { return wo.cols(); }

  template <class F> void visit(F&& f) { visit_impl(*this, f); }
  template <class F> void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("queries", s.queries);
    f("Wk", s.wk);
    f("Wv", s.wv);
    f("Wo", s.wo);
  }
};

struct GateParams {
  Matrix w_gate;   // D_I x 2
  Matrix w_noise;  // D_I x 2
  bool noise_enabled = false;

  static GateParams random(std::size_t d_in, Rng& rng, double stddev = 0.1) {
    GateParams p;
    p.w_gate = rng.normal_matrix(d_in, 2, stddev);
    p.w_noise = rng.normal_matrix(d_in, 2, stddev);
    return p;
  }

  template <class F> void visit(F&& f) { visit_impl(*this, f); }
  template <class F> void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("W_g", s.w_gate);
    f("W_noise", s.w_noise);
  }
};

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

inline Matrix mlp_forward(const Matrix& tokens, const MlpParams& p) {
  require(tokens.cols() == p.w1.rows(), "mlp: token width does not match W1");
  require(p.b1.cols() == p.w1.cols() && p.w2.rows() == p.w1.cols() && p.b2.cols() == p.w2.cols(),
          "mlp: inconsistent parameter shapes");
  Matrix hidden = matmul(tokens, p.w1);
  add_row(hidden, p.b1.row(0));
  for (double& v : hidden.data()) v = gelu(v);
  Matrix out = matmul(hidden, p.w2);
  add_row(out, p.b2.row(0));
  return out;
}

inline Matrix qformer_forward(const Matrix& tokens, const QFormerParams& p) {
  require(tokens.rows() >= 1, "query former: no input tokens");
  require(tokens.cols() == p.wk.rows() && tokens.cols() == p.wv.rows(),
          "query former: token width does not match Wk/Wv");
  require(p.queries.cols() == p.wk.cols() && p.wo.rows() == p.wv.cols(),
          "query former: inconsistent parameter shapes");
  const Matrix keys = matmul(tokens, p.wk);
  const Matrix values = matmul(tokens, p.wv);
  return matmul(cross_attention(p.queries, keys, values), p.wo);
}

/// One draw of the gate: logits_i = (x W_g)_i + eps_i * softplus((x W_noise)_i).
struct GateSample {
  Vector pooled;
  Vector noise;  // eps, zero when noise is disabled
  Vector noise_logits;  // x W_noise
  Vector logits;
  Vector weights;
};

inline GateSample sample_gate(std::span<const double> pooled, const GateParams& p, Rng& rng) {
  require(pooled.size() == p.w_gate.rows() && p.w_gate.cols() == 2 && p.w_noise.cols() == 2 &&
              p.w_noise.rows() == p.w_gate.rows(),
          "gate: shape mismatch");
  GateSample s;
  s.pooled.assign(pooled.begin(), pooled.end());
  s.logits = vecmat(pooled, p.w_gate);
  s.noise_logits = vecmat(pooled, p.w_noise);
  s.noise.assign(2, 0.0);
  if (p.noise_enabled) {
    for (std::size_t i = 0; i < 2; ++i) {
      s.noise[i] = rng.normal();
      s.logits[i] += s.noise[i] * softplus(s.noise_logits[i]);
    }
  }
  s.weights = softmax(s.logits);
  return s;
}

inline Vector gate_weights(std::span<const double> pooled, const GateParams& p, Rng& rng) {
  return sample_gate(pooled, p, rng).weights;
}

struct MoeResult {
  Matrix out;
  Matrix mlp_out;
  Matrix qformer_out;
  GateSample gate;
  bool forced = false;
};

inline MoeResult moe_forward_detailed(const Matrix& tokens, const MlpParams& mlp,
                                      const QFormerParams& qf, const GateParams& gate, Rng& rng,
                                      std::optional<std::array<double, 2>> forced = std::nullopt) {
  require(qf.num_queries() == tokens.rows(), "global expert shape mismatch");
  MoeResult r;
  r.mlp_out = mlp_forward(tokens, mlp);
  r.qformer_out = qformer_forward(tokens, qf);
  require(r.mlp_out.same_shape(r.qformer_out), "global expert shape mismatch");
  if (forced) {
    r.forced = true;
    r.gate.weights = {(*forced)[0], (*forced)[1]};
  } else {
    r.gate = sample_gate(column_mean(tokens), gate, rng);
  }
  r.out = scaled(r.mlp_out, r.gate.weights[0]);
  add_scaled(r.out, r.gate.weights[1], r.qformer_out);
  return r;
}

/// G(x)_0 * f_m(x) + G(x)_1 * f_q(x) with x the mean-pooled token.
inline Matrix moe_forward(const Matrix& tokens, const MlpParams& mlp, const QFormerParams& qf,
                          const GateParams& gate, Rng& rng) {
  return moe_forward_detailed(tokens, mlp, qf, gate, rng).out;
}

// ---------------------------------------------------------------------------
// Backward passes
// ---------------------------------------------------------------------------

struct MlpBackward {
  MlpParams grads;
  Matrix d_tokens;
};

inline MlpBackward mlp_backward(const Matrix& tokens, const MlpParams& p, const Matrix& d_out) {
  Matrix pre = matmul(tokens, p.w1);
  add_row(pre, p.b1.row(0));
  Matrix act = pre;
  for (double& v : act.data()) v = gelu(v);

  MlpBackward b;
  b.grads.b2 = Matrix::row_vector(column_sum(d_out));
  b.grads.w2 = matmul_tn(act, d_out);
  Matrix d_pre = matmul_nt(d_out, p.w2);
  for (std::size_t i = 0; i < d_pre.size(); ++i) d_pre.data()[i] *= gelu_grad(pre.data()[i]);
  b.grads.b1 = Matrix::row_vector(column_sum(d_pre));
  b.grads.w1 = matmul_tn(tokens, d_pre);
  b.d_tokens = matmul_nt(d_pre, p.w1);
  return b;
}

struct QFormerBackward {
  QFormerParams grads;
  Matrix d_tokens;
};

inline QFormerBackward qformer_backward(const Matrix& tokens, const QFormerParams& p,
                                        const Matrix& d_out) {
  const Matrix keys = matmul(tokens, p.wk);
  const Matrix values = matmul(tokens, p.wv);
  const Matrix weights = attention_weights(p.queries, keys);
  const Matrix attended = matmul(weights, values);

  QFormerBackward b;
  b.grads.wo = matmul_tn(attended, d_out);
  const Matrix d_attended = matmul_nt(d_out, p.wo);
  AttentionGrads ag = cross_attention_backward(p.queries, keys, values, weights, d_attended);
  b.grads.queries = std::move(ag.queries);
  b.grads.wk = matmul_tn(tokens, ag.keys);
  b.grads.wv = matmul_tn(tokens, ag.values);
  b.d_tokens = matmul_nt(ag.keys, p.wk);
  add_scaled(b.d_tokens, 1.0, matmul_nt(ag.values, p.wv));
  return b;
}

struct AdapterGrads {
  MlpParams mlp;
  QFormerParams qformer;
  GateParams gate;
  Matrix d_tokens;
};

/// Gradients of a downstream loss through moe_forward, given dL/d(out).
/// A recorded noise draw is held constant (reparameterized path); a forced
/// gate contributes no gate gradient.
inline AdapterGrads adapter_grads(const Matrix& tokens, const MlpParams& mlp,
                                  const QFormerParams& qf, const GateParams& gate,
                                  const MoeResult& fwd, const Matrix& d_out) {
  const Vector& g = fwd.gate.weights;
  MlpBackward mb = mlp_backward(tokens, mlp, scaled(d_out, g[0]));
  QFormerBackward qb = qformer_backward(tokens, qf, scaled(d_out, g[1]));

  AdapterGrads out;
  out.mlp = std::move(mb.grads);
  out.qformer = std::move(qb.grads);
  out.d_tokens = std::move(mb.d_tokens);
  add_scaled(out.d_tokens, 1.0, qb.d_tokens);
  out.gate = zeros_like(gate);
  if (fwd.forced) return out;

  const Vector d_weights{dot(fwd.mlp_out.data(), d_out.data()),
                         dot(fwd.qformer_out.data(), d_out.data())};
  const Vector d_logits = softmax_backward(g, d_weights);
  const Vector& x = fwd.gate.pooled;
  Vector d_pooled(x.size(), 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    const double noise_scale_grad = fwd.gate.noise[i] * sigmoid(fwd.gate.noise_logits[i]);
    for (std::size_t k = 0; k < x.size(); ++k) {
      out.gate.w_gate(k, i) = x[k] * d_logits[i];
      out.gate.w_noise(k, i) = x[k] * d_logits[i] * noise_scale_grad;
      d_pooled[k] += d_logits[i] * (gate.w_gate(k, i) + noise_scale_grad * gate.w_noise(k, i));
    }
  }
  const double inv_rows = 1.0 / static_cast<double>(tokens.rows());
  for (std::size_t r = 0; r < tokens.rows(); ++r) axpy(inv_rows, d_pooled, out.d_tokens.row(r));
  return out;
}

}  // namespace slime
