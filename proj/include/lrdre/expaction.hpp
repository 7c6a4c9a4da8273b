#pragma once

// Action of the matrix exponential, V -> exp(t A^T) V, on tall blocks.
//
// The linear ODE W' = A^T W is integrated with the 3-stage Radau IA scheme
// (order 5). The number of substeps is doubled until two successive
// approximations agree to the requested relative tolerance in the Frobenius
// norm over the whole block; the finer one is returned.

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "lrdre/error.hpp"
#include "lrdre/lowrank.hpp"

namespace lrdre {

using SparseMatrix = Eigen::SparseMatrix<double>;

// The operator A of A^T P + P A. Stored as ingested (dense or compressed sparse).
class StiffOperator {
 public:
  StiffOperator() = default;
  explicit StiffOperator(Matrix dense) : storage_(std::move(dense)) { check_square(); }
  explicit StiffOperator(SparseMatrix sparse) : storage_(std::move(sparse)) {
    std::get<SparseMatrix>(storage_).makeCompressed();
    check_square();
  }

  Index dim() const {
    return std::visit([](const auto& a) { return static_cast<Index>(a.rows()); }, storage_);
  }
  bool is_sparse() const noexcept { return std::holds_alternative<SparseMatrix>(storage_); }
  const Matrix& dense() const { return std::get<Matrix>(storage_); }
  const SparseMatrix& sparse() const { return std::get<SparseMatrix>(storage_); }

  // A^T W for an N-row block W.
  Matrix apply_transpose(const Matrix& W) const {
    return std::visit([&](const auto& a) -> Matrix { return a.transpose() * W; }, storage_);
  }

  Matrix to_dense() const {
    if (is_sparse()) return Matrix(sparse());
    return dense();
  }

 private:
  void check_square() const {
    std::visit(
        [](const auto& a) {
          if (a.rows() != a.cols()) throw InvalidInput("StiffOperator: A must be square");
        },
        storage_);
  }

  std::variant<Matrix, SparseMatrix> storage_{Matrix(0, 0)};
};

struct ExpActionOptions {
  double rel_tol = 1e-10;
  int initial_substeps = 1;
  int max_doublings = 30;

  void validate() const {
    if (!(rel_tol > 0.0)) throw InvalidInput("exp_action: rel_tol must be > 0");
    if (initial_substeps < 1) throw InvalidInput("exp_action: initial_substeps must be >= 1");
    if (max_doublings < 1) throw InvalidInput("exp_action: max_doublings must be >= 1");
  }
};

// Raised when max_doublings is exhausted. Carries the finest iterate and its estimate.
class ToleranceNotMet : public Error {
 public:
  ToleranceNotMet(Matrix best, double estimate, double requested)
      : Error("exp_action: estimated relative error " + std::to_string(estimate) +
              " above requested " + std::to_string(requested)),
        best_(std::move(best)),
        estimate_(estimate) {}

  const Matrix& best() const noexcept { return best_; }
  double estimate() const noexcept { return estimate_; }

 private:
  Matrix best_;
  double estimate_;
};

namespace detail {

// Radau IA, s = 3, order 5.
struct RadauIA5 {
  static constexpr int stages = 3;
  std::array<std::array<double, 3>, 3> a;
  std::array<double, 3> b;

  RadauIA5() {
    const double r6 = std::sqrt(6.0);
    a = {{{1.0 / 9.0, (-1.0 - r6) / 18.0, (-1.0 + r6) / 18.0},
          {1.0 / 9.0, (88.0 + 7.0 * r6) / 360.0, (88.0 - 43.0 * r6) / 360.0},
          {1.0 / 9.0, (88.0 + 43.0 * r6) / 360.0, (88.0 - 7.0 * r6) / 360.0}}};
    b = {1.0 / 9.0, (16.0 + r6) / 36.0, (16.0 - r6) / 36.0};
  }
};

inline const RadauIA5& radau() {
  static const RadauIA5 tableau;
  return tableau;
}

// Solver for the stage system (I - tau * (a kron A^T)) Y = [y; y; y].
class StageSolver {
 public:
  StageSolver(const StiffOperator& A, double tau) : n_(A.dim()) {
    const auto& rk = radau();
    const Index s = RadauIA5::stages;
    if (A.is_sparse()) {
      const SparseMatrix At = A.sparse().transpose();
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(static_cast<std::size_t>(s * s * At.nonZeros() + s * n_));
      for (Index i = 0; i < s; ++i) {
        for (Index r = 0; r < n_; ++r) trips.emplace_back(i * n_ + r, i * n_ + r, 1.0);
        for (Index j = 0; j < s; ++j) {
          const double c = -tau * rk.a[i][j];
          for (Index col = 0; col < At.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(At, col); it; ++it) {
              trips.emplace_back(i * n_ + it.row(), j * n_ + it.col(), c * it.value());
            }
          }
        }
      }
      system_.resize(s * n_, s * n_);
      system_.setFromTriplets(trips.begin(), trips.end());
      system_.makeCompressed();
      sparse_lu_.analyzePattern(system_);
      sparse_lu_.factorize(system_);
      if (sparse_lu_.info() != Eigen::Success) {
        throw Error("exp_action: sparse stage factorization failed");
      }
      sparse_ = true;
    } else {
      const Matrix At = A.dense().transpose();
      Matrix M = Matrix::Identity(s * n_, s * n_);
      for (Index i = 0; i < s; ++i)
        for (Index j = 0; j < s; ++j) M.block(i * n_, j * n_, n_, n_) -= tau * rk.a[i][j] * At;
      dense_lu_.compute(M);
    }
  }

  Matrix solve(const Matrix& rhs) const {
    if (!sparse_) return dense_lu_.solve(rhs);
    // Two rounds of iterative refinement on top of the sparse direct solve.
    Matrix x = sparse_lu_.solve(rhs);
    for (int it = 0; it < 2; ++it) {
      const Matrix res = rhs - system_ * x;
      x += sparse_lu_.solve(res);
    }
    return x;
  }

 private:
  Index n_;
  bool sparse_ = false;
  Eigen::PartialPivLU<Matrix> dense_lu_;
  SparseMatrix system_;
  Eigen::SparseLU<SparseMatrix> sparse_lu_;
};

inline Matrix radau_integrate(const StiffOperator& A, double t, const Matrix& V, long substeps) {
  const auto& rk = radau();
  const Index n = V.rows();
  const Index m = V.cols();
  const double tau = t / static_cast<double>(substeps);
  const StageSolver solver(A, tau);
  Matrix y = V;
  Matrix rhs(3 * n, m);
  for (long step = 0; step < substeps; ++step) {
    for (Index i = 0; i < 3; ++i) rhs.middleRows(i * n, n) = y;
    const Matrix Y = solver.solve(rhs);
    const Matrix mix = rk.b[0] * Y.middleRows(0, n) + rk.b[1] * Y.middleRows(n, n) +
                       rk.b[2] * Y.middleRows(2 * n, n);
    y += tau * A.apply_transpose(mix);
  }
  return y;
}

}  // namespace detail

// Result of exp_action together with the bookkeeping of how it was obtained.
struct ExpActionResult {
  Matrix value;
  double estimate = 0.0;
  long substeps = 0;
};

inline ExpActionResult exp_action_detailed(const StiffOperator& A, double t, const Matrix& V,
                                           const ExpActionOptions& opts = {}) {
  opts.validate();
  if (!(t >= 0.0)) throw InvalidInput("exp_action: t must be >= 0");
  if (V.rows() != A.dim()) {
    throw InvalidInput("exp_action: block has " + std::to_string(V.rows()) + " rows, operator is " +
                       std::to_string(A.dim()));
  }
  if (V.cols() == 0 || t == 0.0) return {V, 0.0, 0};

  long n = opts.initial_substeps;
  Matrix coarse = detail::radau_integrate(A, t, V, n);
  Matrix fine;
  double est = 0.0;
  for (int d = 0; d < opts.max_doublings; ++d) {
    n *= 2;
    fine = detail::radau_integrate(A, t, V, n);
    const double diff = (fine - coarse).norm();
    const double ref = fine.norm();
    est = ref > 0.0 ? diff / ref : diff;
    if (est <= opts.rel_tol) return {std::move(fine), est, n};
    coarse = std::move(fine);
  }
  throw ToleranceNotMet(std::move(coarse), est, opts.rel_tol);
}

// W ~ exp(t A^T) V.
inline Matrix exp_action(const StiffOperator& A, double t, const Matrix& V,
                         const ExpActionOptions& opts = {}) {
  return exp_action_detailed(A, t, V, opts).value;
}

}  // namespace lrdre
