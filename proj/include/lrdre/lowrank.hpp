#pragma once

// LDL^T factor arithmetic. A factor (L, D) with tall L (N x r) and a small
// symmetric core D (r x r) stands for the N x N matrix L D L^T. Cores may be
// indefinite, which is what allows linear combinations with negative weights.

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lrdre/error.hpp"

namespace lrdre {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class LDLTFactor {
 public:
  LDLTFactor() = default;

  // D is symmetrized on construction.
  LDLTFactor(Matrix L, Matrix D) : L_(std::move(L)), D_(std::move(D)) {
    if (D_.rows() != D_.cols() || D_.rows() != L_.cols()) {
      throw InvalidInput("LDLTFactor: core is " + std::to_string(D_.rows()) + "x" +
                         std::to_string(D_.cols()) + " but L has " + std::to_string(L_.cols()) +
                         " columns");
    }
    D_ = (0.5 * (D_ + D_.transpose())).eval();
  }

  // Rank-0 representation of the N x N zero matrix.
  static LDLTFactor zero(Index n) { return LDLTFactor(Matrix(n, 0), Matrix(0, 0)); }

  const Matrix& L() const noexcept { return L_; }
  const Matrix& D() const noexcept { return D_; }
  Index dim() const noexcept { return L_.rows(); }
  Index rank() const noexcept { return L_.cols(); }

 private:
  Matrix L_;
  Matrix D_;
};

struct CompressionOptions {
  // Relative truncation threshold; unset means N * machine epsilon.
  std::optional<double> rel_tol;
  // Hard cap on the output rank. Takes precedence over rel_tol.
  std::optional<Index> max_rank;

  double resolved_tol(Index n) const {
    return rel_tol ? *rel_tol : static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  }

  void validate() const {
    if (rel_tol && !(*rel_tol >= 0.0)) throw InvalidInput("compression rel_tol must be >= 0");
    if (max_rank && *max_rank < 1) throw InvalidInput("compression max_rank must be >= 1");
  }
};

struct WeightedFactor {
  double weight;
  const LDLTFactor& factor;
};

namespace detail {

// Column compression of (L, D) by thin QR of L followed by a symmetric
// eigendecomposition of R D R^T. Trailing eigenpairs are dropped while each
// is below tol * max|lambda| and the dropped tail stays within
// tol * ||lambda||_2 in Frobenius norm. `floor` raises both reference
// magnitudes, so that combinations which cancel are measured against the
// size of their inputs rather than against their own rounding noise.
inline LDLTFactor compress_core(const Matrix& L, const Matrix& D, double tol,
                                std::optional<Index> max_rank, double floor = 0.0) {
  const Index n = L.rows();
  const Index r = L.cols();
  if (r == 0) return LDLTFactor::zero(n);

  Eigen::HouseholderQR<Matrix> qr(L);
  const Index k = std::min(n, r);
  const Matrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Matrix M = R * D * R.transpose();
  M = (0.5 * (M + M.transpose())).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  const Vector& lambda = es.eigenvalues();
  const Index m = lambda.size();

  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(lambda(a)) < std::abs(lambda(b));
  });

  const double max_abs = std::abs(lambda(order.back()));
  const double ref_max = std::max(max_abs, floor);
  const double ref_tot = std::max(lambda.norm(), floor);
  if (ref_max == 0.0) return LDLTFactor::zero(n);

  const double threshold = tol * ref_max;
  const double budget = tol * ref_tot * tol * ref_tot;
  double dropped = 0.0;
  Index first_kept = 0;
  for (; first_kept < m; ++first_kept) {
    const double v = lambda(order[static_cast<std::size_t>(first_kept)]);
    if (!(std::abs(v) < threshold) || dropped + v * v > budget) break;
    dropped += v * v;
  }
  Index kept = m - first_kept;
  if (max_rank && kept > *max_rank) kept = *max_rank;
  if (kept == 0) return LDLTFactor::zero(n);

  // Largest magnitude first.
  Matrix V(k, kept);
  Vector d(kept);
  for (Index c = 0; c < kept; ++c) {
    const Index idx = order[static_cast<std::size_t>(m - 1 - c)];
    V.col(c) = es.eigenvectors().col(idx);
    d(c) = lambda(idx);
  }
  Matrix Q = qr.householderQ() * Matrix::Identity(n, k);
  return LDLTFactor(Q * V, d.asDiagonal().toDenseMatrix());
}

}  // namespace detail

// ||L D L^T||_F evaluated as sqrt(trace((L^T L D)^2)) without forming the N x N product.
inline double frob_norm(const LDLTFactor& F) {
  if (F.rank() == 0) return 0.0;
  const Matrix X = (F.L().transpose() * F.L()) * F.D();
  const double tr = X.cwiseProduct(X.transpose()).sum();
  return std::sqrt(std::max(tr, 0.0));
}

// Rank-reduced factor with ||P_in - P_out||_F <= rel_tol * ||P_in||_F and a diagonal core.
inline LDLTFactor compress(const LDLTFactor& F, const CompressionOptions& opts = {}) {
  opts.validate();
  return detail::compress_core(F.L(), F.D(), opts.resolved_tol(F.dim()), opts.max_rank);
}

// Compressed factor of sum_i w_i L_i D_i L_i^T. Columns are concatenated in the
// given order, so the result does not depend on how the terms were produced.
inline LDLTFactor combine(std::span<const WeightedFactor> terms, const CompressionOptions& opts = {}) {
  opts.validate();
  if (terms.empty()) throw InvalidInput("combine: empty term list");
  const Index n = terms.front().factor.dim();
  Index cols = 0;
  double scale = 0.0;
  for (const auto& t : terms) {
    if (t.factor.dim() != n) {
      throw InvalidInput("combine: factor dimension " + std::to_string(t.factor.dim()) +
                         " does not match " + std::to_string(n));
    }
    cols += t.factor.rank();
    scale += std::abs(t.weight) * frob_norm(t.factor);
  }
  Matrix L(n, cols);
  Matrix D = Matrix::Zero(cols, cols);
  Index at = 0;
  for (const auto& t : terms) {
    const Index r = t.factor.rank();
    L.middleCols(at, r) = t.factor.L();
    D.block(at, at, r, r) = t.weight * t.factor.D();
    at += r;
  }
  return detail::compress_core(L, D, opts.resolved_tol(n), opts.max_rank, scale);
}

inline LDLTFactor combine(std::initializer_list<WeightedFactor> terms,
                          const CompressionOptions& opts = {}) {
  return combine(std::span<const WeightedFactor>(terms.begin(), terms.size()), opts);
}

// alpha * P1 + (1 - alpha) * P2, at the cost of one column compression.
inline LDLTFactor interpolate(const LDLTFactor& F1, const LDLTFactor& F2, double alpha,
                              const CompressionOptions& opts = {}) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("interpolate: alpha must lie in [0, 1]");
  return combine({{alpha, F1}, {1.0 - alpha, F2}}, opts);
}

inline constexpr Index kDefaultDenseGuard = 4096;

// Dense L D L^T, symmetrized so that the output equals its transpose bit for bit.
inline Matrix to_dense(const LDLTFactor& F, Index max_dim = kDefaultDenseGuard) {
  if (F.dim() > max_dim) {
    throw RefusedDense("to_dense: N = " + std::to_string(F.dim()) + " exceeds guard " +
                       std::to_string(max_dim));
  }
  if (F.rank() == 0) return Matrix::Zero(F.dim(), F.dim());
  const Matrix X = F.L() * F.D() * F.L().transpose();
  return 0.5 * (X + X.transpose());
}

}  // namespace lrdre
