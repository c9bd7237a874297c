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

// Generic helpers over parameter bundles. A bundle is any type with
//   template <class F> void visit(F&& f);        // f(std::string_view, Matrix&)
//   template <class F> void visit(F&& f) const;  // f(std::string_view, const Matrix&)

#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "slime/numerics.hpp"

namespace slime {

template <class P>
std::size_t param_count(const P& p) {
  std::size_t n = 0;
  p.visit([&](std::string_view, const Matrix& m) { n += m.size(); });
  return n;
}

template <class P>
Vector flatten(const P& p) {
  Vector out;
  out.reserve(param_count(p));
  p.visit([&](std::string_view, const Matrix& m) {
    out.insert(out.end(), m.data().begin(), m.data().end());
  });
  return out;
}

template <class P>
void unflatten(P& p, std::span<const double> flat) {
  require(flat.size() == param_count(p), "unflatten: length mismatch");
  std::size_t off = 0;
  p.visit([&](std::string_view, Matrix& m) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), m.size(), m.data().begin());
    off += m.size();
  });
}

template <class P>
P zeros_like(const P& p) {
  P out = p;
  out.visit([](std::string_view, Matrix& m) { std::fill(m.data().begin(), m.data().end(), 0.0); });
  return out;
}

/// p += alpha * g, tensor by tensor.
template <class P>
void add_scaled_params(P& p, double alpha, const P& g) {
  std::vector<const Matrix*> src;
  g.visit([&](std::string_view, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  p.visit([&](std::string_view, Matrix& m) { add_scaled(m, alpha, *src.at(i++)); });
}

template <class P>
bool params_finite(const P& p) {
  bool ok = true;
  p.visit([&](std::string_view, const Matrix& m) { ok = ok && all_finite(m.data()); });
  return ok;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.storage()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  return Matrix(rows, cols, j.at("data").get<std::vector<double>>());
}

/// {name -> {rows, cols, data}} with `prefix` prepended to every name.
template <class P>
void params_to_json(const P& p, nlohmann::json& out, const std::string& prefix = "") {
  p.visit([&](std::string_view name, const Matrix& m) {
    out[prefix + std::string(name)] = matrix_to_json(m);
  });
}

template <class P>
nlohmann::json params_to_json(const P& p) {
  nlohmann::json out = nlohmann::json::object();
  params_to_json(p, out, "");
  return out;
}

/// Loads into an already-shaped bundle; shapes must match exactly.
template <class P>
void params_from_json(P& p, const nlohmann::json& in, const std::string& prefix = "") {
  p.visit([&](std::string_view name, Matrix& m) {
    const std::string key = prefix + std::string(name);
    require(in.contains(key), "checkpoint is missing tensor '" + key + "'");
    Matrix loaded = matrix_from_json(in.at(key));
    require(loaded.same_shape(m), "checkpoint tensor '" + key + "' has the wrong shape");
    m = std::move(loaded);
  });
}

}  // namespace slime
