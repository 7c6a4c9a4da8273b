#pragma once

// Exact flows of the two halves of P' = A^T P + P A + Q - P S P in factored form.
//
//   G (nonlinear): T_G(h) L D L^T = L (I + h D L^T S L)^{-1} D L^T
//   F (affine):    T_F(h) L D L^T = e^{hA^T} L D L^T e^{hA} + I_Q(h)

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "lrdre/error.hpp"
#include "lrdre/expaction.hpp"
#include "lrdre/lowrank.hpp"
#include "lrdre/problem.hpp"
#include "lrdre/quadrature.hpp"

namespace lrdre {

inline LDLTFactor solve_G(const LDLTFactor& F, double h, const QuadraticOperator& S) {
  if (!(h >= 0.0)) throw InvalidInput("solve_G: h must be >= 0");
  if (S.dim() != F.dim()) throw InvalidInput("solve_G: S does not match the factor dimension");
  const Index r = F.rank();
  if (r == 0 || h == 0.0) return F;

  const Matrix K = S.coupling(F.L(), F.L());
  const Matrix M = Matrix::Identity(r, r) + h * F.D() * K;
  Eigen::PartialPivLU<Matrix> lu(M);
  const double rcond = lu.rcond();
  if (!(rcond > std::numeric_limits<double>::epsilon())) {
    throw StepTooLarge("solve_G: I + h D L^T S L is singular to working precision (rcond " +
                       std::to_string(rcond) + ") at h = " + std::to_string(h));
  }
  Matrix Dhat = lu.solve(F.D());
  if (!Dhat.allFinite()) throw StepTooLarge("solve_G: non-finite core at h = " + std::to_string(h));
  return LDLTFactor(F.L(), std::move(Dhat));
}

// Requires `quad.h == h`.
inline LDLTFactor solve_F(const LDLTFactor& F, double h, const ProblemData& p,
                          const QuadratureState& quad, const ExpActionOptions& exp_opts = {},
                          const CompressionOptions& comp = {}) {
  if (!(h >= 0.0)) throw InvalidInput("solve_F: h must be >= 0");
  if (F.dim() != p.dim()) throw InvalidInput("solve_F: factor does not match the problem dimension");
  if (h == 0.0) return F;
  if (quad.h != h) {
    throw InvalidInput("solve_F: quadrature prepared for h = " + std::to_string(quad.h) +
                       ", step is " + std::to_string(h));
  }
  const LDLTFactor moved(exp_action(p.A, h, F.L(), exp_opts), F.D());
  return combine({{1.0, moved}, {1.0, integral_factor(quad)}}, comp);
}

}  // namespace lrdre
