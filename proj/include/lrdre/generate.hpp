#pragma once

// Reproducible test problems.
//
//   random_lowrank: dense Gaussian A scaled by 1/sqrt(N); Q = C^T C, S = B B^T
//                   and P0 = L0 L0^T with Gaussian rank-r factors scaled by 1/sqrt(N).
//   laplacian_lqr:  finite-difference Laplacian on the unit interval (dims = 1)
//                   or unit square (dims = 2) with Dirichlet boundary, scaled by
//                   `diffusion`; B and C average the state over r disjoint strips.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "lrdre/error.hpp"
#include "lrdre/expaction.hpp"
#include "lrdre/lowrank.hpp"
#include "lrdre/oracle.hpp"
#include "lrdre/problem.hpp"

namespace lrdre {

enum class ProblemKind { RandomLowRank, LaplacianLQR };

struct GeneratorParams {
  ProblemKind kind = ProblemKind::RandomLowRank;
  Index n = 10;
  Index rank = 4;
  std::uint64_t seed = 1;
  double T = 1.0;
  int dims = 1;             // laplacian_lqr only
  double diffusion = 0.01;  // laplacian_lqr only
};

// Operators in the LQR layout: Q = C^T R_x C, S = B R_u^{-1} B^T, P0 = L0 D0 L0^T.
struct LQRData {
  StiffOperator A;
  Matrix B;       // N x m_B
  Matrix C;       // m_C x N
  Matrix R_x;     // m_C x m_C
  Matrix R_u_inv; // m_B x m_B
  Matrix P0_L;    // N x r0
  Matrix P0_D;    // r0 x r0
  double T = 1.0;
};

inline ProblemData to_problem(const LQRData& d) {
  ProblemData p;
  p.A = d.A;
  p.L_Q = d.C.transpose();
  p.D_Q = d.R_x;
  p.S = QuadraticOperator(LowRankQuadratic{d.B, d.R_u_inv});
  p.P0 = LDLTFactor(d.P0_L, d.P0_D);
  p.T = d.T;
  validate(p);
  return p;
}

namespace detail {

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix M(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = scale * nd(rng);
  return M;
}

inline SparseMatrix laplacian_1d(Index m) {
  std::vector<Eigen::Triplet<double>> t;
  const double inv_h2 = static_cast<double>((m + 1) * (m + 1));
  for (Index i = 0; i < m; ++i) {
    t.emplace_back(i, i, -2.0 * inv_h2);
    if (i > 0) t.emplace_back(i, i - 1, inv_h2);
    if (i + 1 < m) t.emplace_back(i, i + 1, inv_h2);
  }
  SparseMatrix L(m, m);
  L.setFromTriplets(t.begin(), t.end());
  return L;
}

// Columns average the state over `r` contiguous strips of the index range.
inline Matrix strip_indicators(Index n, Index r) {
  Matrix B = Matrix::Zero(n, r);
  for (Index i = 0; i < n; ++i) {
    const Index strip = std::min<Index>(r - 1, i * r / n);
    B(i, strip) = 1.0;
  }
  for (Index j = 0; j < r; ++j) {
    const double c = B.col(j).sum();
    if (c > 0) B.col(j) /= std::sqrt(c);
  }
  return B;
}

}  // namespace detail

inline LQRData generate_lqr(const GeneratorParams& g) {
  if (g.n < 1) throw InvalidInput("generate: N must be >= 1");
  if (g.rank < 1) throw InvalidInput("generate: rank must be >= 1");
  if (!(g.T > 0.0)) throw InvalidInput("generate: T must be > 0");
  std::mt19937_64 rng(g.seed);
  LQRData d;
  d.T = g.T;
  const Index n = g.n;
  const Index r = g.rank;
  if (g.kind == ProblemKind::RandomLowRank) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    d.A = StiffOperator(detail::gaussian(n, n, rng, scale));
    d.C = detail::gaussian(n, r, rng, scale).transpose();
    d.B = detail::gaussian(n, r, rng, scale);
    d.P0_L = detail::gaussian(n, r, rng, scale);
    d.P0_D = Matrix::Identity(r, r);
  } else {
    if (g.dims != 1 && g.dims != 2) throw InvalidInput("generate: dims must be 1 or 2");
    SparseMatrix A;
    if (g.dims == 1) {
      A = detail::laplacian_1d(n);
    } else {
      const Index m = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
      if (m * m != n) throw InvalidInput("generate: 2-D Laplacian needs a square N");
      const SparseMatrix L1 = detail::laplacian_1d(m);
      // Kronecker sum L1 (x) I + I (x) L1 on the m x m grid.
      std::vector<Eigen::Triplet<double>> t;
      for (Index a = 0; a < m; ++a)
        for (SparseMatrix::InnerIterator it(L1, a); it; ++it)
          for (Index b = 0; b < m; ++b) {
            t.emplace_back(it.row() * m + b, it.col() * m + b, it.value());
            t.emplace_back(b * m + it.row(), b * m + it.col(), it.value());
          }
      A.resize(n, n);
      A.setFromTriplets(t.begin(), t.end());
    }
    A *= g.diffusion;
    d.A = StiffOperator(std::move(A));
    d.B = detail::strip_indicators(n, r);
    d.C = detail::strip_indicators(n, r).transpose();
    d.P0_L = Matrix(n, 0);
    d.P0_D = Matrix(0, 0);
  }
  d.R_x = Matrix::Identity(d.C.rows(), d.C.rows());
  d.R_u_inv = Matrix::Identity(d.B.cols(), d.B.cols());
  return d;
}

struct GeneratedProblem {
  LQRData lqr;
  ProblemData problem;
  std::optional<DenseProblem> dense;  // present when N <= 256
};

inline GeneratedProblem generate_problem(const GeneratorParams& g) {
  GeneratedProblem out{generate_lqr(g), {}, std::nullopt};
  out.problem = to_problem(out.lqr);
  if (g.n <= kMaxOracleDim) out.dense = densify(out.problem);
  return out;
}

inline std::optional<ProblemKind> parse_problem_kind(const std::string& s) {
  if (s == "random_lowrank") return ProblemKind::RandomLowRank;
  if (s == "laplacian_lqr") return ProblemKind::LaplacianLQR;
  return std::nullopt;
}

inline std::string to_string(ProblemKind k) {
  return k == ProblemKind::RandomLowRank ? "random_lowrank" : "laplacian_lqr";
}

}  // namespace lrdre
