#pragma once

// Interpolatory quadrature for the integral term
//
//   I_Q(h) = int_0^h exp(s A^T) Q exp(s A) ds,   Q = L_Q D_Q L_Q^T,
//
// approximated by sum_k w_k L(s_k) D_Q L(s_k)^T with cached blocks
// L(s) = exp(s A^T) L_Q. When the step size changes only mildly, nodes are
// added, dropped or relocated one at a time so that most cached blocks survive.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lrdre/error.hpp"
#include "lrdre/expaction.hpp"
#include "lrdre/lowrank.hpp"
#include "lrdre/problem.hpp"

namespace lrdre {

// Weights w with sum_k w_k s_k^j = h^{j+1} / (j+1), j = 0..n-1, for n distinct nodes.
// The moment system is scaled to [0, 1] and solved in extended precision.
inline std::vector<double> quad_weights(std::span<const double> nodes, double h) {
  if (!(h > 0.0)) throw InvalidInput("quad_weights: h must be > 0");
  const Index n = static_cast<Index>(nodes.size());
  if (n == 0) throw InvalidNodes("quad_weights: no nodes");
  std::vector<double> sorted(nodes.begin(), nodes.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    if (!(sorted[k] - sorted[k - 1] > 1e-12 * h)) {
      throw InvalidNodes("quad_weights: nodes " + std::to_string(sorted[k - 1]) + " and " +
                         std::to_string(sorted[k]) + " coincide");
    }
  }

  using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  LMatrix V(n, n);
  LVector rhs(n);
  for (Index k = 0; k < n; ++k) {
    const long double x = static_cast<long double>(nodes[static_cast<std::size_t>(k)]) / h;
    long double p = 1.0L;
    for (Index j = 0; j < n; ++j) {
      V(j, k) = p;
      p *= x;
    }
  }
  for (Index j = 0; j < n; ++j) rhs(j) = 1.0L / static_cast<long double>(j + 1);
  Eigen::FullPivLU<LMatrix> lu(V);
  if (lu.rank() < n) throw InvalidNodes("quad_weights: singular moment system");
  const LVector w = lu.solve(rhs);

  std::vector<double> out(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    out[static_cast<std::size_t>(k)] = static_cast<double>(w(k) * static_cast<long double>(h));
    if (!std::isfinite(out[static_cast<std::size_t>(k)])) {
      throw InvalidNodes("quad_weights: non-finite weight");
    }
  }
  return out;
}

struct NodesAndWeights {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// n-point Gauss-Legendre rule on [0, h] (Golub-Welsch).
inline NodesAndWeights gauss_legendre(int n, double h) {
  if (n < 1) throw InvalidInput("gauss_legendre: need at least one node");
  Matrix J = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  NodesAndWeights out;
  for (int k = 0; k < n; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    out.nodes.push_back(0.5 * h * (es.eigenvalues()(k) + 1.0));
    out.weights.push_back(h * v0 * v0);
  }
  return out;
}

enum class QuadratureRule {
  // Equidistant initial nodes, incrementally updated when h changes.
  Incremental,
  // Gauss-Legendre, fully recomputed on every change of h.
  Gauss,
};

struct QuadratureState {
  int degree = 0;  // polynomial exactness degree
  QuadratureRule rule = QuadratureRule::Incremental;
  double h = 0.0;
  std::vector<double> nodes;    // strictly increasing, inside [0, h]
  std::vector<double> weights;  // solve the moment system for `nodes` and `h`
  std::vector<Matrix> blocks;   // blocks[k] = exp(nodes[k] A^T) L_Q
  LDLTFactor assembled;         // compressed factor of the quadrature sum
  int fresh_blocks = 0;         // blocks computed by the transition that produced this state
};

namespace detail {

inline Matrix node_block(const ProblemData& p, double s, const ExpActionOptions& exp_opts) {
  if (s == 0.0) return p.L_Q;
  return exp_action(p.A, s, p.L_Q, exp_opts);
}

inline void assemble(QuadratureState& st, const ProblemData& p, const CompressionOptions& comp) {
  const Index n = p.dim();
  const Index rq = p.L_Q.cols();
  const Index m = static_cast<Index>(st.nodes.size());
  if (rq == 0) {
    st.assembled = LDLTFactor::zero(n);
    return;
  }
  Matrix L(n, m * rq);
  Matrix D = Matrix::Zero(m * rq, m * rq);
  for (Index k = 0; k < m; ++k) {
    L.middleCols(k * rq, rq) = st.blocks[static_cast<std::size_t>(k)];
    D.block(k * rq, k * rq, rq, rq) = st.weights[static_cast<std::size_t>(k)] * p.D_Q;
  }
  st.assembled = compress(LDLTFactor(std::move(L), std::move(D)), comp);
}

inline QuadratureState fresh_state(const ProblemData& p, double h, int degree, QuadratureRule rule,
                                   const ExpActionOptions& exp_opts, const CompressionOptions& comp) {
  QuadratureState st;
  st.degree = degree;
  st.rule = rule;
  st.h = h;
  if (rule == QuadratureRule::Gauss) {
    auto gl = gauss_legendre((degree + 2) / 2, h);
    st.nodes = std::move(gl.nodes);
    st.weights = std::move(gl.weights);
  } else {
    for (int k = 0; k <= degree; ++k) st.nodes.push_back(k * h / degree);
    st.weights = quad_weights(st.nodes, h);
  }
  for (double s : st.nodes) st.blocks.push_back(node_block(p, s, exp_opts));
  st.fresh_blocks = static_cast<int>(st.nodes.size());
  assemble(st, p, comp);
  return st;
}

// Midpoint of the largest gap among {0, nodes..., h}; ties go to the leftmost gap.
// A midpoint within 1e-12 h of an existing node falls through to the next-largest gap.
inline double largest_gap_midpoint(const std::vector<double>& nodes, double h) {
  std::vector<double> pts;
  pts.reserve(nodes.size() + 2);
  pts.push_back(0.0);
  pts.insert(pts.end(), nodes.begin(), nodes.end());
  pts.push_back(h);
  std::vector<std::size_t> gaps(pts.size() - 1);
  for (std::size_t i = 0; i < gaps.size(); ++i) gaps[i] = i;
  std::stable_sort(gaps.begin(), gaps.end(), [&](std::size_t a, std::size_t b) {
    return (pts[a + 1] - pts[a]) > (pts[b + 1] - pts[b]);
  });
  for (std::size_t g : gaps) {
    const double mid = 0.5 * (pts[g] + pts[g + 1]);
    const bool collides = std::any_of(nodes.begin(), nodes.end(),
                                      [&](double s) { return std::abs(s - mid) <= 1e-12 * h; });
    if (!collides) return mid;
  }
  throw InvalidNodes("update_quadrature: no room for a new node");
}

}  // namespace detail

// Equidistant nodes k h / d, k = 0..d (or ceil((d+1)/2) Gauss points), all blocks computed.
inline QuadratureState init_quadrature(const ProblemData& p, double h, int degree,
                                       const ExpActionOptions& exp_opts = {},
                                       const CompressionOptions& comp = {},
                                       QuadratureRule rule = QuadratureRule::Incremental) {
  if (!(h > 0.0)) throw InvalidInput("init_quadrature: h must be > 0");
  if (degree < 1) throw InvalidInput("init_quadrature: degree must be >= 1");
  return detail::fresh_state(p, h, degree, rule, exp_opts, comp);
}

// Move the rule from [0, state.h] to [0, h_new], reusing cached blocks where possible.
inline QuadratureState update_quadrature(const QuadratureState& state, const ProblemData& p,
                                         double h_new, const ExpActionOptions& exp_opts = {},
                                         const CompressionOptions& comp = {}) {
  if (!(h_new > 0.0)) throw InvalidInput("update_quadrature: h must be > 0");
  const double h_old = state.h;

  if (h_new == h_old) {
    QuadratureState st = state;
    st.fresh_blocks = 0;
    detail::assemble(st, p, comp);
    return st;
  }
  if (state.rule == QuadratureRule::Gauss || h_new <= 0.8 * h_old || h_new >= 1.25 * h_old) {
    return detail::fresh_state(p, h_new, state.degree, state.rule, exp_opts, comp);
  }

  QuadratureState st;
  st.degree = state.degree;
  st.rule = state.rule;
  st.h = h_new;

  if (h_new > h_old) {
    // Append h_new, then drop the node whose removal leaves the most even spacing.
    std::vector<double> s = state.nodes;
    s.push_back(h_new);
    const std::size_t last = s.size() - 1;
    std::vector<double> d(s.size());
    d[0] = s[1];
    d[last] = h_new - s[last - 1];
    for (std::size_t k = 1; k < last; ++k) d[k] = s[k + 1] - s[k - 1];
    const std::size_t j = static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());

    st.nodes = s;
    st.nodes.erase(st.nodes.begin() + static_cast<std::ptrdiff_t>(j));
    st.blocks = state.blocks;
    if (j == last) {
      st.fresh_blocks = 0;
    } else {
      st.blocks.erase(st.blocks.begin() + static_cast<std::ptrdiff_t>(j));
      st.blocks.push_back(detail::node_block(p, h_new, exp_opts));
      st.fresh_blocks = 1;
    }
  } else {
    // Keep the nodes inside [0, h_new]; relocate the rest one by one into the largest gaps.
    const std::size_t total = state.nodes.size();
    std::size_t keep = 0;
    while (keep < total && state.nodes[keep] <= h_new) ++keep;
    st.nodes.assign(state.nodes.begin(), state.nodes.begin() + static_cast<std::ptrdiff_t>(keep));
    st.blocks.assign(state.blocks.begin(), state.blocks.begin() + static_cast<std::ptrdiff_t>(keep));
    st.fresh_blocks = 0;
    for (std::size_t l = keep; l < total; ++l) {
      const double s_new = detail::largest_gap_midpoint(st.nodes, h_new);
      const auto at = std::upper_bound(st.nodes.begin(), st.nodes.end(), s_new);
      const auto pos = at - st.nodes.begin();
      st.nodes.insert(at, s_new);
      st.blocks.insert(st.blocks.begin() + pos, detail::node_block(p, s_new, exp_opts));
      ++st.fresh_blocks;
    }
  }
  st.weights = quad_weights(st.nodes, h_new);
  detail::assemble(st, p, comp);
  return st;
}

// Rebuild from equidistant nodes on [0, state.h], discarding every cached block.
inline QuadratureState recompute_quadrature(const QuadratureState& state, const ProblemData& p,
                                            const ExpActionOptions& exp_opts = {},
                                            const CompressionOptions& comp = {}) {
  return detail::fresh_state(p, state.h, state.degree, state.rule, exp_opts, comp);
}

inline const LDLTFactor& integral_factor(const QuadratureState& state) { return state.assembled; }

}  // namespace lrdre
