#pragma once

// Dense reference solutions for small problems, used to validate the
// factored solvers.

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lrdre/error.hpp"
#include "lrdre/lowrank.hpp"
#include "lrdre/problem.hpp"
#include "lrdre/quadrature.hpp"

namespace lrdre {

inline constexpr Index kMaxOracleDim = 256;

struct DenseProblem {
  Matrix A, Q, S, P0;
  double T = 1.0;

  Index dim() const { return A.rows(); }
};

inline void validate(const DenseProblem& p) {
  const Index n = p.dim();
  if (n > kMaxOracleDim) throw RefusedDense("oracle: N = " + std::to_string(n) + " exceeds 256");
  for (const Matrix* m : {&p.A, &p.Q, &p.S, &p.P0}) {
    if (m->rows() != n || m->cols() != n) throw InvalidInput("oracle: matrices must all be N x N");
  }
  const auto psd = [](const Matrix& M, const char* what) {
    if ((M - M.transpose()).norm() > 1e-12 * std::max(1.0, M.norm())) {
      throw InvalidInput(std::string("oracle: ") + what + " is not symmetric");
    }
    if (M.rows() == 0) return;
    const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(M, Eigen::EigenvaluesOnly).eigenvalues()(0);
    if (lo < -1e-12 * std::max(1.0, M.norm())) {
      throw InvalidInput(std::string("oracle: ") + what + " is not positive semi-definite");
    }
  };
  psd(p.Q, "Q");
  psd(p.S, "S");
  psd(p.P0, "P0");
}

inline DenseProblem densify(const ProblemData& p) {
  return DenseProblem{p.A.to_dense(), to_dense(p.Q_factor(), kMaxOracleDim), p.S.to_dense(),
                      to_dense(p.P0, kMaxOracleDim), p.T};
}

// Classical RK4 on the matrix ODE with n_fine steps, carried out in extended
// precision and symmetrized after every step. Accuracy O(n_fine^-4).
inline Matrix dense_dre_reference(const DenseProblem& p, long n_fine) {
  validate(p);
  if (n_fine < 1) throw InvalidInput("dense_dre_reference: n_fine must be >= 1");
  using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const LMatrix A = p.A.cast<long double>();
  const LMatrix At = A.transpose();
  const LMatrix Q = p.Q.cast<long double>();
  const LMatrix S = p.S.cast<long double>();
  LMatrix P = p.P0.cast<long double>();
  const long double h = static_cast<long double>(p.T) / n_fine;

  const auto rhs = [&](const LMatrix& X) -> LMatrix { return At * X + X * A + Q - X * S * X; };
  for (long i = 0; i < n_fine; ++i) {
    const LMatrix k1 = rhs(P);
    const LMatrix k2 = rhs(P + 0.5L * h * k1);
    const LMatrix k3 = rhs(P + 0.5L * h * k2);
    const LMatrix k4 = rhs(P + h * k3);
    P += (h / 6.0L) * (k1 + 2.0L * k2 + 2.0L * k3 + k4);
    P = (0.5L * (P + P.transpose())).eval();
    if (!P.allFinite()) {
      throw OracleDiverged("dense_dre_reference: non-finite solution at step " + std::to_string(i) +
                           "; use a larger n_fine or a smaller T");
    }
  }
  return P.cast<double>();
}

enum class Subflow { F, G };

namespace detail {

// int_0^h exp(s A^T) Q exp(s A) ds by composite 8-point Gauss-Legendre, with
// the panel count doubled until successive sums agree to 1e-13.
inline Matrix dense_integral_term(const Matrix& A, const Matrix& Q, double h) {
  const auto rule = gauss_legendre(8, 1.0);
  const auto composite = [&](int panels) {
    Matrix acc = Matrix::Zero(A.rows(), A.cols());
    const double width = h / panels;
    for (int j = 0; j < panels; ++j) {
      for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const double s = width * (j + rule.nodes[k]);
        const Matrix E = (s * A).exp();
        acc += (width * rule.weights[k]) * (E.transpose() * Q * E);
      }
    }
    return acc;
  };
  Matrix coarse = composite(1);
  for (int panels = 2; panels <= 1 << 12; panels *= 2) {
    Matrix fine = composite(panels);
    const double ref = fine.norm();
    if ((fine - coarse).norm() <= 1e-13 * std::max(ref, 1e-300)) return fine;
    coarse = std::move(fine);
  }
  return coarse;
}

}  // namespace detail

// Closed-form subflows evaluated densely:
//   G: (I + h P S)^{-1} P        F: e^{hA^T} P e^{hA} + int_0^h e^{sA^T} Q e^{sA} ds
inline Matrix dense_subflow(Subflow kind, const Matrix& P, double h, const DenseProblem& p) {
  const Index n = p.dim();
  if (P.rows() != n || P.cols() != n) throw InvalidInput("dense_subflow: P must be N x N");
  if (!(h >= 0.0)) throw InvalidInput("dense_subflow: h must be >= 0");
  Matrix out;
  if (kind == Subflow::G) {
    const Matrix M = Matrix::Identity(n, n) + h * P * p.S;
    Eigen::FullPivLU<Matrix> lu(M);
    if (!lu.isInvertible() || lu.rcond() < 1e-14) {
      throw StepTooLarge("dense_subflow: I + h P S is singular at h = " + std::to_string(h));
    }
    out = lu.solve(P);
  } else {
    const Matrix E = (h * p.A).exp();
    out = E.transpose() * P * E;
    if (h > 0.0) out += detail::dense_integral_term(p.A, p.Q, h);
  }
  return 0.5 * (out + out.transpose());
}

// ||P_approx - P_ref||_F / ||P_ref||_F
inline double relative_error(const Matrix& approx, const Matrix& ref) {
  if (approx.rows() != ref.rows() || approx.cols() != ref.cols()) {
    throw InvalidInput("relative_error: shape mismatch");
  }
  const double denom = ref.norm();
  if (!(denom > 0.0)) throw InvalidReference("relative_error: reference has zero norm");
  return (approx - ref).norm() / denom;
}

}  // namespace lrdre
