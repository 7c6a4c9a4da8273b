#pragma once

// MatrixMarket reading and writing for real matrices.
//
// Supported headers: "matrix coordinate|array real|integer|double general|symmetric".
// Coordinate files are read into sparse storage, array files into dense storage;
// either can be converted. Values are written with max_digits10 significant
// digits so that a write/read round trip is exact.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "lrdre/error.hpp"
#include "lrdre/expaction.hpp"
#include "lrdre/lowrank.hpp"

namespace lrdre::io {

enum class MMFormat { Coordinate, Array };

struct MMMatrix {
  MMFormat format = MMFormat::Array;
  bool symmetric = false;
  Matrix dense;         // array files
  SparseMatrix sparse;  // coordinate files

  Index rows() const { return format == MMFormat::Array ? dense.rows() : sparse.rows(); }
  Index cols() const { return format == MMFormat::Array ? dense.cols() : sparse.cols(); }

  Matrix to_dense() const { return format == MMFormat::Array ? dense : Matrix(sparse); }
  SparseMatrix to_sparse() const {
    if (format == MMFormat::Coordinate) return sparse;
    SparseMatrix s = dense.sparseView(0.0, 0.0);
    s.makeCompressed();
    return s;
  }
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool blank_or_comment(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '%';
}

// Parses exactly `n` whitespace-separated tokens; anything else is an error.
template <typename T>
std::vector<T> tokens(const std::string& line, std::size_t n, const std::string& file, long lineno) {
  std::istringstream in(line);
  std::vector<T> out;
  std::string tok;
  while (in >> tok) {
    std::istringstream t(tok);
    T v;
    if (!(t >> v) || !t.eof()) throw IngestionError(file, lineno, "cannot parse '" + tok + "'");
    out.push_back(v);
  }
  if (out.size() != n) {
    throw IngestionError(file, lineno, "expected " + std::to_string(n) + " entries, found " + std::to_string(out.size()));
  }
  return out;
}

}  // namespace detail

inline MMMatrix read_matrix_market(std::istream& in, const std::string& name) {
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw IngestionError(name, 0, "empty file");
  ++lineno;
  std::istringstream hs(detail::lower(line));
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%matrixmarket" || object != "matrix") {
    throw IngestionError(name, lineno, "missing '%%MatrixMarket matrix' header");
  }
  MMMatrix m;
  if (format == "coordinate") {
    m.format = MMFormat::Coordinate;
  } else if (format == "array") {
    m.format = MMFormat::Array;
  } else {
    throw IngestionError(name, lineno, "unsupported format '" + format + "'");
  }
  if (field != "real" && field != "double" && field != "integer") {
    throw IngestionError(name, lineno, "unsupported field '" + field + "'");
  }
  if (symmetry == "symmetric") {
    m.symmetric = true;
  } else if (symmetry != "general") {
    throw IngestionError(name, lineno, "unsupported symmetry '" + symmetry + "'");
  }

  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::blank_or_comment(line)) break;
    line.clear();
  }
  if (line.empty()) throw IngestionError(name, lineno, "missing size line");

  if (m.format == MMFormat::Coordinate) {
    const auto size = detail::tokens<long>(line, 3, name, lineno);
    const long rows = size[0], cols = size[1], nnz = size[2];
    if (rows < 0 || cols < 0 || nnz < 0) throw IngestionError(name, lineno, "negative size");
    if (m.symmetric && rows != cols) throw IngestionError(name, lineno, "symmetric matrix must be square");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(m.symmetric ? 2 * nnz : nnz));
    long seen = 0;
    while (seen < nnz && std::getline(in, line)) {
      ++lineno;
      if (detail::blank_or_comment(line)) continue;
      std::istringstream es(line);
      long i = 0, j = 0;
      double v = 0.0;
      std::string extra;
      if (!(es >> i >> j >> v) || (es >> extra)) {
        throw IngestionError(name, lineno, "entry " + std::to_string(seen + 1) + ": expected 'row col value'");
      }
      if (i < 1 || i > rows || j < 1 || j > cols) {
        throw IngestionError(name, lineno, "entry " + std::to_string(seen + 1) + ": index (" + std::to_string(i) +
                                               ", " + std::to_string(j) + ") out of range");
      }
      if (m.symmetric && j > i) {
        throw IngestionError(name, lineno, "entry " + std::to_string(seen + 1) + ": symmetric files store the lower triangle");
      }
      trips.emplace_back(i - 1, j - 1, v);
      if (m.symmetric && i != j) trips.emplace_back(j - 1, i - 1, v);
      ++seen;
    }
    if (seen < nnz) {
      throw IngestionError(name, lineno, "expected " + std::to_string(nnz) + " entries, found " + std::to_string(seen));
    }
    m.sparse.resize(rows, cols);
    m.sparse.setFromTriplets(trips.begin(), trips.end());
    m.sparse.makeCompressed();
  } else {
    const auto size = detail::tokens<long>(line, 2, name, lineno);
    const long rows = size[0], cols = size[1];
    if (rows < 0 || cols < 0) throw IngestionError(name, lineno, "negative size");
    if (m.symmetric && rows != cols) throw IngestionError(name, lineno, "symmetric matrix must be square");
    m.dense = Matrix::Zero(rows, cols);
    // Column-major; symmetric files list the lower triangle only.
    std::vector<std::pair<long, long>> order;
    for (long j = 0; j < cols; ++j)
      for (long i = m.symmetric ? j : 0; i < rows; ++i) order.emplace_back(i, j);
    std::size_t seen = 0;
    while (seen < order.size() && std::getline(in, line)) {
      ++lineno;
      if (detail::blank_or_comment(line)) continue;
      const double v = detail::tokens<double>(line, 1, name, lineno)[0];
      const auto [i, j] = order[seen];
      m.dense(i, j) = v;
      if (m.symmetric) m.dense(j, i) = v;
      ++seen;
    }
    if (seen < order.size()) {
      throw IngestionError(name, lineno, "expected " + std::to_string(order.size()) + " values, found " + std::to_string(seen));
    }
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::blank_or_comment(line)) throw IngestionError(name, lineno, "unexpected trailing data");
  }
  return m;
}

inline MMMatrix read_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path.string(), 0, "cannot open file");
  return read_matrix_market(in, path.string());
}

inline void write_array(std::ostream& out, const Matrix& M) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "%%MatrixMarket matrix array real general\n" << M.rows() << ' ' << M.cols() << '\n';
  for (Index j = 0; j < M.cols(); ++j)
    for (Index i = 0; i < M.rows(); ++i) out << M(i, j) << '\n';
}

inline void write_coordinate(std::ostream& out, const SparseMatrix& S) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "%%MatrixMarket matrix coordinate real general\n"
      << S.rows() << ' ' << S.cols() << ' ' << S.nonZeros() << '\n';
  for (Index j = 0; j < S.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(S, j); it; ++it) out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline void write_array(const std::filesystem::path& path, const Matrix& M) {
  auto out = detail::open_for_write(path);
  write_array(out, M);
}

inline void write_coordinate(const std::filesystem::path& path, const SparseMatrix& S) {
  auto out = detail::open_for_write(path);
  write_coordinate(out, S);
}

// Factor output: <stem>_L.mtx and <stem>_D.mtx.
inline void write_factor(const std::filesystem::path& dir, const std::string& stem, const LDLTFactor& F) {
  write_array(dir / (stem + "_L.mtx"), F.L());
  write_array(dir / (stem + "_D.mtx"), F.D());
}

inline LDLTFactor read_factor(const std::filesystem::path& L_path, const std::filesystem::path& D_path) {
  const Matrix L = read_matrix_market(L_path).to_dense();
  const Matrix D = read_matrix_market(D_path).to_dense();
  if (D.rows() != L.cols() || D.cols() != L.cols()) {
    throw IngestionError(D_path.string(), 0, "core is " + std::to_string(D.rows()) + "x" + std::to_string(D.cols()) +
                                                 " but L has " + std::to_string(L.cols()) + " columns");
  }
  return LDLTFactor(L, D);
}

}  // namespace lrdre::io
