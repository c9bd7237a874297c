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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace slime {

/// Error raised for contract violations (bad shapes, empty inputs, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "matrix data length mismatch");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vector scaled(std::span<const double> x, double alpha) {
  Vector out(x.begin(), x.end());
  for (double& v : out) v *= alpha;
  return out;
}

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Matrix algebra
// ---------------------------------------------------------------------------

/// A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

/// A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn: inner dimension mismatch");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto a_row = a.row(k);
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

/// A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// row vector x (as span) times matrix: x * A
inline Vector vecmat(std::span<const double> x, const Matrix& a) {
  require(x.size() == a.rows(), "vecmat: dimension mismatch");
  Vector out(a.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) axpy(x[k], a.row(k), out);
  return out;
}

/// A * x
inline Vector matvec(const Matrix& a, std::span<const double> x) {
  require(x.size() == a.cols(), "matvec: dimension mismatch");
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

/// a += alpha * b
inline void add_scaled(Matrix& a, double alpha, const Matrix& b) {
  require(a.same_shape(b), "add_scaled: shape mismatch");
  axpy(alpha, b.data(), a.data());
}

inline Matrix scaled(const Matrix& a, double alpha) {
  Matrix out = a;
  for (double& v : out.data()) v *= alpha;
  return out;
}

/// Adds a row vector to every row.
inline void add_row(Matrix& a, std::span<const double> r) {
  require(a.cols() == r.size(), "add_row: width mismatch");
  for (std::size_t i = 0; i < a.rows(); ++i) axpy(1.0, r, a.row(i));
}

inline Vector column_sum(const Matrix& a) {
  Vector out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) axpy(1.0, a.row(i), out);
  return out;
}

inline Vector column_mean(const Matrix& a) {
  require(a.rows() > 0, "column_mean: empty matrix");
  return scaled(column_sum(a), 1.0 / static_cast<double>(a.rows()));
}

inline double frobenius_norm(const Matrix& a) { return norm(a.data()); }

/// Stacks matrices of equal width on top of each other.
inline Matrix vstack(std::span<const Matrix> parts) {
  std::size_t rows = 0;
  std::size_t cols = parts.empty() ? 0 : parts.front().cols();
  for (const auto& p : parts) {
    require(p.cols() == cols || p.rows() == 0, "vstack: width mismatch");
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Matrix(rows, cols, std::move(data));
}

inline Matrix gather_rows(const Matrix& a, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    require(idx[k] < a.rows(), "gather_rows: index out of range");
    std::copy_n(a.row(idx[k]).begin(), a.cols(), out.row(k).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

/// Numerically stable softmax (max-subtracted).
inline Vector softmax(std::span<const double> v) {
  require(!v.empty(), "empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

/// Backward through softmax: given y = softmax(x) and dL/dy, returns dL/dx.
inline Vector softmax_backward(std::span<const double> y, std::span<const double> dy) {
  const double inner = dot(y, dy);
  Vector dx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * (dy[i] - inner);
  return dx;
}

/// log(1 + e^x) without overflow or cancellation.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// d/dx softplus(x)
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Exact (erf) GELU: x * Phi(x).
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// ---------------------------------------------------------------------------
// Scaled dot-product cross attention
// ---------------------------------------------------------------------------

/// Row-softmax of queries * keys^T / sqrt(d).
inline Matrix attention_weights(const Matrix& queries, const Matrix& keys) {
  require(queries.cols() == keys.cols(), "cross_attention: query/key width mismatch");
  require(keys.rows() >= 1, "cross_attention: no keys");
  Matrix scores = matmul_nt(queries, keys);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto r = scores.row(i);
    for (double& s : r) s *= inv_sqrt_d;
    Vector w = softmax(r);
    std::copy(w.begin(), w.end(), r.begin());
  }
  return scores;
}

inline Matrix cross_attention(const Matrix& queries, const Matrix& keys, const Matrix& values) {
  require(keys.rows() == values.rows(), "cross_attention: key/value count mismatch");
  return matmul(attention_weights(queries, keys), values);
}

struct AttentionGrads {
  Matrix queries;
  Matrix keys;
  Matrix values;
};

/// Gradients of cross_attention given the attention weights of the forward pass.
inline AttentionGrads cross_attention_backward(const Matrix& queries, const Matrix& keys,
                                               const Matrix& values, const Matrix& weights,
                                               const Matrix& d_out) {
  AttentionGrads g;
  g.values = matmul_tn(weights, d_out);
  Matrix d_weights = matmul_nt(d_out, values);
  Matrix d_scores(weights.rows(), weights.cols());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    Vector ds = softmax_backward(weights.row(i), d_weights.row(i));
    for (std::size_t j = 0; j < ds.size(); ++j) d_scores(i, j) = ds[j] * inv_sqrt_d;
  }
  g.queries = matmul(d_scores, keys);
  g.keys = matmul_tn(d_scores, queries);
  return g;
}

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

/// Seeded generator: std::mt19937_64 (whose output sequence is fixed by the
/// standard) with 53-bit uniforms and Box-Muller normals computed here, so
/// draws do not depend on the standard library's distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi]; modulo bias is below 2^-40 for the ranges used here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    require(hi >= lo, "uniform_int: empty range");
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  double normal() {
    if (spare_) {
      const double z = *spare_;
      spare_.reset();
      return z;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = normal(0.0, stddev);
    return m;
  }

  Vector normal_vector(std::size_t n, double stddev = 1.0) {
    Vector v(n);
    for (double& x : v) x = normal(0.0, stddev);
    return v;
  }

  /// Independent child stream derived from this generator's seed.
  Rng fork(std::uint64_t stream) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::uint64_t words[2];
    std::uint32_t raw[4];
    seq.generate(raw, raw + 4);
    words[0] = (static_cast<std::uint64_t>(raw[0]) << 32) | raw[1];
    words[1] = (static_cast<std::uint64_t>(raw[2]) << 32) | raw[3];
    return Rng(words[0] ^ (words[1] << 1));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

inline constexpr double kDefaultFdStep = 1e-5;

/// Central differences of `f` at `point`, compared coordinatewise with
/// `analytic`. Returns max_i |fd_i - g_i| / max(1, |g_i|).
inline double fd_grad_check(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> analytic, std::span<const double> point,
                            double step = kDefaultFdStep) {
  require(step > 0.0, "fd_grad_check: step must be positive");
  require(analytic.size() == point.size(), "fd_grad_check: gradient length mismatch");
  Vector p(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x0 = p[i];
    p[i] = x0 + step;
    const double f_plus = f(p);
    p[i] = x0 - step;
    const double f_minus = f(p);
    p[i] = x0;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw Error("fd_grad_check: non-finite function value");
    const double fd = (f_plus - f_minus) / (2.0 * step);
    const double err = std::abs(fd - analytic[i]) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace slime
