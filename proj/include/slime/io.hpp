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

// Plain-text matrix files: a header line "rows cols" followed by rows*cols
// whitespace-separated numbers in row-major order.

#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "slime/bilinear.hpp"
#include "slime/numerics.hpp"

namespace slime {

inline Matrix read_matrix(std::istream& in, const std::string& what = "matrix") {
  std::string header;
  if (!std::getline(in, header)) throw Error(what + ": missing 'rows cols' header");
  std::istringstream hs(header);
  long rows = -1, cols = -1;
  std::string extra;
  if (!(hs >> rows >> cols) || (hs >> extra) || rows < 0 || cols < 0)
    throw Error(what + ": header must be two non-negative integers");
  Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  for (double& v : m.data())
    if (!(in >> v)) throw Error(what + ": expected " + std::to_string(m.size()) + " numbers");
  if (in >> extra) throw Error(what + ": trailing data after " + std::to_string(m.size()) + " numbers");
  return m;
}

inline Matrix read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_matrix(in, path);
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? " " : "") << bilinear::format_real(m(r, c));
    os << '\n';
  }
}

}  // namespace slime
