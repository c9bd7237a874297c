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

// Rank-1 approximation of X = a b^T + b a^T: simultaneous gradient descent
// versus exact alternating minimization, with the (alpha, beta) coordinates
// u = alpha a + beta b and eigen-coordinates tau = z.w+, nu = z.w-.
//
//   loss(u, v) = 1/2 |u v^T - X|_F^2
//   M = [[1, c], [c, 1]],  c = a.b,  w+- = (1, +-1)/sqrt(2),  lambda+- = 1 +- c

#pragma once

#include <array>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "slime/numerics.hpp"

namespace slime::bilinear {

inline constexpr std::size_t kDefaultDim = 16;
inline constexpr double kDefaultEta = 0.01;
inline constexpr long kDefaultSteps = 100000;
inline constexpr double kDivergenceNorm = 1e6;
inline constexpr double kClassifyRelTol = 1e-4;
inline constexpr double kDegenerateTol = 1e-12;

using Mat2 = std::array<std::array<double, 2>, 2>;
using Vec2 = std::array<double, 2>;

inline Vec2 mat_vec(const Mat2& m, const Vec2& z) {
  return {m[0][0] * z[0] + m[0][1] * z[1], m[1][0] * z[0] + m[1][1] * z[1]};
}

inline Mat2 product(const Mat2& p, const Mat2& q) {
  Mat2 r{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r[i][j] = p[i][0] * q[0][j] + p[i][1] * q[1][j];
  return r;
}

inline const Vec2 kWPlus{1.0 / std::numbers::sqrt2, 1.0 / std::numbers::sqrt2};
inline const Vec2 kWMinus{1.0 / std::numbers::sqrt2, -1.0 / std::numbers::sqrt2};

class Instance {
 public:
  /// a, b must be unit vectors of equal length.
  Instance(Vector a, Vector b) : a_(std::move(a)), b_(std::move(b)) {
    require(!a_.empty() && a_.size() == b_.size(), "bilinear: a and b must have equal length");
    require(std::abs(norm(a_) - 1.0) < 1e-12 && std::abs(norm(b_) - 1.0) < 1e-12,
            "bilinear: a and b must be unit vectors");
    c_ = dot(a_, b_);
    const std::size_t d = a_.size();
    x_ = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) x_(i, j) = a_[i] * b_[j] + b_[i] * a_[j];
  }

  /// a uniform on the sphere; b = c a + sqrt(1 - c^2) e with e a unit vector orthogonal to a.
  static Instance random(std::size_t d, double c, Rng& rng) {
    require(d >= 2, "bilinear: dimension must be at least 2");
    require(c >= -1.0 && c <= 1.0, "bilinear: c must lie in [-1, 1]");
    Vector a = rng.normal_vector(d);
    a = scaled(a, 1.0 / norm(a));
    Vector e = rng.normal_vector(d);
    axpy(-dot(e, a), a, e);
    axpy(-dot(e, a), a, e);
    e = scaled(e, 1.0 / norm(e));
    Vector b = scaled(a, c);
    axpy(std::sqrt(std::max(0.0, 1.0 - c * c)), e, b);
    b = scaled(b, 1.0 / norm(b));
    return Instance(std::move(a), std::move(b));
  }

  std::size_t dim() const { return a_.size(); }
  const Vector& a() const { return a_; }
  const Vector& b() const { return b_; }
  double c() const { return c_; }
  const Matrix& x() const { return x_; }
  Mat2 m() const { return {{{1.0, c_}, {c_, 1.0}}}; }
  double lambda_plus() const { return 1.0 + c_; }
  double lambda_minus() const { return 1.0 - c_; }

  bool degenerate() const {
    return std::abs(c_) < kDegenerateTol || std::abs(c_) > 1.0 - kDegenerateTol;
  }

  /// Best rank-1 residual: the dominant |eigenvalue| of X is 1 + |c|.
  double optimal_loss() const { return 0.5 * (1.0 - std::abs(c_)) * (1.0 - std::abs(c_)); }
  /// Residual at the gradient-descent fixed point on the subdominant eigen-direction.
  double suboptimal_loss() const { return 0.5 * (1.0 + std::abs(c_)) * (1.0 + std::abs(c_)); }

  /// u = alpha a + beta b, z = M^{-1} A^T u.
  Vec2 coords(std::span<const double> u) const {
    const double pa = dot(a_, u);
    const double pb = dot(b_, u);
    const double det = 1.0 - c_ * c_;
    require(std::abs(det) > kDegenerateTol, "bilinear: coordinates undefined when |c| = 1");
    return {(pa - c_ * pb) / det, (pb - c_ * pa) / det};
  }

  Vector from_coords(const Vec2& z) const {
    Vector u = scaled(a_, z[0]);
    axpy(z[1], b_, u);
    return u;
  }

  /// Norm of the component of u outside span{a, b}.
  double span_residual(std::span<const double> u) const {
    Vector r(u.begin(), u.end());
    axpy(-1.0, from_coords(coords(u)), r);
    return norm(r);
  }

 private:
  Vector a_;
  Vector b_;
  double c_ = 0.0;
  Matrix x_;
};

inline double tau_of(const Vec2& z) { return z[0] * kWPlus[0] + z[1] * kWPlus[1]; }
inline double nu_of(const Vec2& z) { return z[0] * kWMinus[0] + z[1] * kWMinus[1]; }

struct State {
  Vector u;
  Vector v;
  double alpha = 0.0;
  double beta = 0.0;
  double tau = 0.0;
  double nu = 0.0;
};

inline State make_state(Vector u, Vector v, const Instance& inst) {
  State s{std::move(u), std::move(v)};
  const Vec2 z = inst.coords(s.u);
  s.alpha = z[0];
  s.beta = z[1];
  s.tau = tau_of(z);
  s.nu = nu_of(z);
  return s;
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

inline double loss(std::span<const double> u, std::span<const double> v, const Instance& inst) {
  const Matrix& x = inst.x();
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double r = u[i] * v[j] - x(i, j);
      s += r * r;
    }
  return 0.5 * s;
}

struct Grads {
  Vector u;
  Vector v;
};

/// g_u = (u v^T - X) v,  g_v = (v u^T - X) u.
inline Grads loss_grads(std::span<const double> u, std::span<const double> v, const Instance& inst) {
  require(u.size() == inst.dim() && v.size() == inst.dim(), "bilinear: dimension mismatch");
  Grads g;
  g.u = scaled(u, dot(v, v));
  axpy(-1.0, matvec(inst.x(), v), g.u);
  g.v = scaled(v, dot(u, u));
  axpy(-1.0, matvec(inst.x(), u), g.v);
  return g;
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

/// Simultaneous update of u and v from their pre-step values.
inline State gd_step(const State& s, const Instance& inst, double eta) {
  require(eta > 0.0, "bilinear: step size must be positive");
  const Grads g = loss_grads(s.u, s.v, inst);
  Vector u = s.u;
  Vector v = s.v;
  axpy(-eta, g.u, u);
  axpy(-eta, g.v, v);
  return make_state(std::move(u), std::move(v), inst);
}

/// tau' = (1 + eta (1 + c - |u|^2)) tau,  nu' = (1 + eta (1 - c - |u|^2)) nu.
inline std::pair<double, double> gd_coord_step(double tau, double nu, double norm_u_sq,
                                               const Instance& inst, double eta) {
  const double c = inst.c();
  return {(1.0 + eta * (1.0 + c - norm_u_sq)) * tau, (1.0 + eta * (1.0 - c - norm_u_sq)) * nu};
}

/// |u|^2 = z^T M z = (1 + c) tau^2 + (1 - c) nu^2 for u in span{a, b}.
inline double energy(double tau, double nu, const Instance& inst) {
  return inst.lambda_plus() * tau * tau + inst.lambda_minus() * nu * nu;
}

/// 2x2 matrix F_t = (1 - eta |u|^2) I + eta M acting on z under symmetric initialization.
inline Mat2 gd_coord_matrix(double norm_u_sq, const Instance& inst, double eta) {
  const double diag = 1.0 + eta * (1.0 - norm_u_sq);
  return {{{diag, eta * inst.c()}, {eta * inst.c(), diag}}};
}

struct AltStep {
  Vector v;       // argmin_v loss(u, v) = X u / |u|^2
  Vector u_next;  // argmin_u loss(u, v) = X v / |v|^2
};

inline AltStep alt_step(std::span<const double> u, const Instance& inst) {
  const double uu = dot(u, u);
  if (std::sqrt(uu) < 1e-12) throw Error("degenerate iterate");
  AltStep r;
  r.v = scaled(matvec(inst.x(), u), 1.0 / uu);
  const double vv = dot(r.v, r.v);
  if (std::sqrt(vv) < 1e-12) throw Error("degenerate iterate");
  r.u_next = scaled(matvec(inst.x(), r.v), 1.0 / vv);
  return r;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

enum class InitKind { generic, antisymmetric, aligned, custom };

/// u0 = alpha0 a + beta0 b, v0 = beta0 a + alpha0 b.
struct Init {
  InitKind kind = InitKind::generic;
  double alpha0 = 0.9;
  double beta0 = 0.1;

  static Init generic() { return {InitKind::generic, 0.9, 0.1}; }
  static Init antisymmetric(double scale = 0.1) { return {InitKind::antisymmetric, scale, -scale}; }
  static Init aligned(double scale = 0.1) { return {InitKind::aligned, scale, scale}; }
  static Init custom(double alpha0, double beta0) { return {InitKind::custom, alpha0, beta0}; }
};

inline std::string to_string(InitKind k) {
  switch (k) {
    case InitKind::generic: return "generic";
    case InitKind::antisymmetric: return "antisym";
    case InitKind::aligned: return "aligned";
    case InitKind::custom: return "custom";
  }
  return "custom";
}

inline State initial_state(const Instance& inst, const Init& init) {
  return make_state(inst.from_coords({init.alpha0, init.beta0}),
                    inst.from_coords({init.beta0, init.alpha0}), inst);
}

enum class MethodKind { gd, alternating };

struct Method {
  MethodKind kind = MethodKind::gd;
  double eta = kDefaultEta;

  static Method gd(double eta = kDefaultEta) { return {MethodKind::gd, eta}; }
  static Method alternating() { return {MethodKind::alternating, 0.0}; }
};

inline std::string to_string(MethodKind k) { return k == MethodKind::gd ? "gd" : "alt"; }

enum class Outcome { optimal, suboptimal, diverged, undecided, degenerate };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::optimal: return "optimal";
    case Outcome::suboptimal: return "suboptimal";
    case Outcome::diverged: return "diverged";
    case Outcome::undecided: return "undecided";
    case Outcome::degenerate: return "degenerate";
  }
  return "undecided";
}

struct TraceRow {
  long step = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double tau = 0.0;
  double nu = 0.0;
  double norm_u = 0.0;
  double norm_v = 0.0;
  double loss = 0.0;
};

struct Trace {
  std::vector<TraceRow> rows;
  State final_state;
  Outcome outcome = Outcome::undecided;
  std::optional<long> steps_to_converge;
  bool diverged = false;

  double final_loss() const { return rows.back().loss; }
};

/// Converged at step t when |loss_t - loss_{t-window}| < tol.
struct ConvergenceRule {
  long window = 100;
  double tol = 1e-6;

  static ConvergenceRule for_method(MethodKind k) {
    return k == MethodKind::gd ? ConvergenceRule{100, 1e-6} : ConvergenceRule{1, 1e-12};
  }
};

inline TraceRow make_row(long step, const State& s, const Instance& inst) {
  return {step, s.alpha, s.beta, s.tau, s.nu, norm(s.u), norm(s.v), loss(s.u, s.v, inst)};
}

inline Outcome classify(double final_loss, const Instance& inst, bool diverged) {
  if (diverged) return Outcome::diverged;
  if (inst.degenerate()) return Outcome::degenerate;
  auto near = [&](double target) {
    return std::abs(final_loss - target) < kClassifyRelTol * std::abs(target);
  };
  if (near(inst.optimal_loss())) return Outcome::optimal;
  if (near(inst.suboptimal_loss())) return Outcome::suboptimal;
  return Outcome::undecided;
}

/// Runs exactly `steps` updates (fewer only on divergence). Row t holds u_t
/// and the v paired with it: the GD iterate, or for alternating the v solved
/// from u_{t-1}.
inline Trace run_experiment(const Instance& inst, const Init& init, const Method& method, long steps,
                            std::optional<ConvergenceRule> rule = std::nullopt) {
  require(steps >= 0, "bilinear: steps must be non-negative");
  if (method.kind == MethodKind::gd) require(method.eta > 0.0, "bilinear: step size must be positive");
  const ConvergenceRule conv = rule.value_or(ConvergenceRule::for_method(method.kind));
  Trace trace;
  State s = initial_state(inst, init);
  trace.rows.reserve(static_cast<std::size_t>(steps) + 1);
  trace.rows.push_back(make_row(0, s, inst));
  for (long t = 1; t <= steps; ++t) {
    if (method.kind == MethodKind::gd) {
      s = gd_step(s, inst, method.eta);
    } else {
      AltStep r = alt_step(s.u, inst);
      s = make_state(std::move(r.u_next), std::move(r.v), inst);
    }
    const TraceRow row = make_row(t, s, inst);
    if (!std::isfinite(row.loss) || row.norm_u > kDivergenceNorm || row.norm_v > kDivergenceNorm) {
      trace.diverged = true;
      break;
    }
    trace.rows.push_back(row);
    if (!trace.steps_to_converge && t >= conv.window) {
      const double prev = trace.rows[static_cast<std::size_t>(t - conv.window)].loss;
      if (std::abs(row.loss - prev) < conv.tol) trace.steps_to_converge = t;
    }
  }
  trace.final_state = s;
  trace.outcome = classify(trace.final_loss(), inst, trace.diverged);
  return trace;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceHeader = "step,alpha,beta,tau,nu,norm_u,norm_v,loss";

/// Shortest round-trip decimal form of a double.
inline std::string format_real(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << kTraceHeader << '\n';
  for (const TraceRow& r : trace.rows) {
    os << r.step << ',' << format_real(r.alpha) << ',' << format_real(r.beta) << ','
       << format_real(r.tau) << ',' << format_real(r.nu) << ',' << format_real(r.norm_u) << ','
       << format_real(r.norm_v) << ',' << format_real(r.loss) << '\n';
  }
}

struct RunSpec {
  double c = 0.5;
  Method method;
  Init init;
  long steps = kDefaultSteps;
  std::size_t dim = kDefaultDim;
  std::uint64_t seed = 0;
};

inline nlohmann::json summary_json(const RunSpec& spec, const Trace& trace) {
  nlohmann::json j;
  j["c"] = spec.c;
  j["eta"] = spec.method.kind == MethodKind::gd ? nlohmann::json(spec.method.eta) : nlohmann::json();
  j["method"] = to_string(spec.method.kind);
  j["init"] = to_string(spec.init.kind);
  j["classification"] = to_string(trace.outcome);
  j["final_loss"] = trace.final_loss();
  j["steps_to_converge"] =
      trace.steps_to_converge ? nlohmann::json(*trace.steps_to_converge) : nlohmann::json();
  return j;
}

inline Trace run(const RunSpec& spec) {
  Rng rng(spec.seed);
  const Instance inst = Instance::random(spec.dim, spec.c, rng);
  return run_experiment(inst, spec.init, spec.method, spec.steps);
}

}  // namespace slime::bilinear
