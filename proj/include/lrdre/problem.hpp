#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <variant>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "lrdre/error.hpp"
#include "lrdre/expaction.hpp"
#include "lrdre/lowrank.hpp"

namespace lrdre {

// S = B R^{-1} B^T kept in factored form.
struct LowRankQuadratic {
  Matrix B;      // N x m
  Matrix R_inv;  // m x m, symmetric
};

// The operator S of the quadratic term P S P.
class QuadraticOperator {
 public:
  QuadraticOperator() = default;
  explicit QuadraticOperator(Matrix dense) : storage_(std::move(dense)) {}
  explicit QuadraticOperator(SparseMatrix sparse) : storage_(std::move(sparse)) {}
  explicit QuadraticOperator(LowRankQuadratic lr) : storage_(std::move(lr)) {
    const auto& q = std::get<LowRankQuadratic>(storage_);
    if (q.R_inv.rows() != q.B.cols() || q.R_inv.cols() != q.B.cols()) {
      throw InvalidInput("QuadraticOperator: R^{-1} does not match B");
    }
  }

  static QuadraticOperator zero(Index n) {
    return QuadraticOperator(LowRankQuadratic{Matrix(n, 0), Matrix(0, 0)});
  }

  Index dim() const {
    return std::visit(
        [](const auto& s) -> Index {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, LowRankQuadratic>) {
            return s.B.rows();
          } else {
            return s.rows();
          }
        },
        storage_);
  }

  // S * X for an N-row block X.
  Matrix apply(const Matrix& X) const {
    return std::visit(
        [&](const auto& s) -> Matrix {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, LowRankQuadratic>) {
            if (s.B.cols() == 0) return Matrix::Zero(X.rows(), X.cols());
            return s.B * (s.R_inv * (s.B.transpose() * X));
          } else {
            return s * X;
          }
        },
        storage_);
  }

  // X^T S Y, the small r x k coupling used by the nonlinear subflow.
  Matrix coupling(const Matrix& X, const Matrix& Y) const {
    if (const auto* lr = std::get_if<LowRankQuadratic>(&storage_)) {
      if (lr->B.cols() == 0) return Matrix::Zero(X.cols(), Y.cols());
      return (lr->B.transpose() * X).transpose() * lr->R_inv * (lr->B.transpose() * Y);
    }
    return X.transpose() * apply(Y);
  }

  Matrix to_dense() const {
    return std::visit(
        [](const auto& s) -> Matrix {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, LowRankQuadratic>) {
            if (s.B.cols() == 0) return Matrix::Zero(s.B.rows(), s.B.rows());
            return s.B * s.R_inv * s.B.transpose();
          } else {
            return Matrix(s);
          }
        },
        storage_);
  }

  const auto& storage() const noexcept { return storage_; }

 private:
  std::variant<Matrix, SparseMatrix, LowRankQuadratic> storage_{Matrix(0, 0)};
};

struct ProblemData {
  StiffOperator A;
  Matrix L_Q;  // N x r_Q
  Matrix D_Q;  // r_Q x r_Q
  QuadraticOperator S;
  LDLTFactor P0;
  double T = 1.0;

  Index dim() const { return A.dim(); }
  LDLTFactor Q_factor() const { return LDLTFactor(L_Q, D_Q); }
};

namespace detail {

inline void require_psd_core(const Matrix& D, const char* what) {
  if (D.rows() == 0) return;
  const Matrix Ds = 0.5 * (D + D.transpose());
  const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(Ds, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (lo < -1e-12) {
    throw InvalidInput(std::string(what) + " core is not positive semi-definite (min eigenvalue " +
                       std::to_string(lo) + ")");
  }
}

}  // namespace detail

// Dimension consistency plus positive semi-definiteness of the Q and P0 cores.
inline void validate(const ProblemData& p) {
  const Index n = p.dim();
  if (p.L_Q.rows() != n) throw InvalidInput("problem: L_Q row count differs from N");
  if (p.D_Q.rows() != p.L_Q.cols() || p.D_Q.cols() != p.L_Q.cols()) {
    throw InvalidInput("problem: D_Q does not match L_Q");
  }
  if (p.S.dim() != n) throw InvalidInput("problem: S dimension differs from N");
  if (p.P0.dim() != n) throw InvalidInput("problem: P0 dimension differs from N");
  if (!(p.T > 0.0)) throw InvalidInput("problem: final time must be > 0");
  detail::require_psd_core(p.D_Q, "Q");
  detail::require_psd_core(p.P0.D(), "P0");
}

}  // namespace lrdre
