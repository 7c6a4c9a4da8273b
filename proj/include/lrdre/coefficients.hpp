#pragma once

// Coefficients of the additive splitting schemes
//
//   asymmetric:  sum_k gamma_k (T_F(h/k) T_G(h/k))^k                           order s
//   symmetric:   sum_k gamma_k [(T_F(h/k) T_G(h/k))^k + (T_G(h/k) T_F(h/k))^k]   order 2s
//
// The order conditions are sum_k gamma_k x_k^j = c delta_{j0}, j = 0..s-1, with
// x_k = 1/k (c = 1) or x_k = 1/k^2 (c = 1/2). Their solution is c times the
// Lagrange basis at x_k evaluated at zero, which is computed here exactly.

#include <cmath>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "lrdre/error.hpp"

namespace lrdre {

using Rational = boost::multiprecision::cpp_rational;

// Stage counts above this are computed but flagged as poorly conditioned.
inline constexpr int kWellConditionedStages = 12;

struct Coefficients {
  std::vector<double> values;
  bool conditioning_warning = false;
};

inline std::vector<Rational> additive_coeffs_exact(int s, bool symmetric) {
  if (s < 1) throw InvalidInput("additive_coeffs: stage count must be >= 1");
  std::vector<Rational> gamma;
  gamma.reserve(static_cast<std::size_t>(s));
  for (int m = 1; m <= s; ++m) {
    Rational g = symmetric ? Rational(1) / 2 : Rational(1);
    for (int i = 1; i <= s; ++i) {
      if (i == m) continue;
      // Divide rather than use the (num, den) constructor, which rejects negative denominators.
      if (symmetric) {
        g *= Rational(m * m) / Rational(m * m - i * i);
      } else {
        g *= Rational(m) / Rational(m - i);
      }
    }
    gamma.push_back(g);
  }
  return gamma;
}

// Residuals of the order conditions, evaluated in double precision.
inline std::vector<double> order_condition_residuals(const std::vector<double>& gamma, bool symmetric) {
  const int s = static_cast<int>(gamma.size());
  std::vector<double> res(static_cast<std::size_t>(s));
  for (int j = 0; j < s; ++j) {
    double acc = 0.0;
    for (int k = 1; k <= s; ++k) {
      acc += gamma[static_cast<std::size_t>(k - 1)] * std::pow(static_cast<double>(k), symmetric ? -2 * j : -j);
    }
    const double target = j == 0 ? (symmetric ? 0.5 : 1.0) : 0.0;
    res[static_cast<std::size_t>(j)] = acc - target;
  }
  return res;
}

inline Coefficients additive_coeffs(int s, bool symmetric) {
  const auto exact = additive_coeffs_exact(s, symmetric);
  Coefficients out;
  for (const auto& g : exact) out.values.push_back(static_cast<double>(g));
  out.conditioning_warning = s > kWellConditionedStages;
  if (!out.conditioning_warning) {
    // Scale of the largest term in each sum bounds the attainable accuracy.
    double scale = 0.0;
    for (double g : out.values) scale = std::max(scale, std::abs(g));
    for (double r : order_condition_residuals(out.values, symmetric)) {
      if (std::abs(r) > 1e-12 * std::max(1.0, scale)) {
        throw Error("additive_coeffs: order conditions violated (residual " + std::to_string(r) + ")");
      }
    }
  }
  return out;
}

// beta = (additive_coeffs(s - 1), 0): the embedded method reuses the first s-1 chains.
inline Coefficients embedded_coeffs(int s, bool symmetric) {
  if (s < 2) throw NoEmbeddedMethod("embedded_coeffs: a single-stage scheme has no embedded method");
  Coefficients out = additive_coeffs(s - 1, symmetric);
  out.values.push_back(0.0);
  return out;
}

struct SchemeCoefficients {
  std::vector<double> gamma;
  std::vector<double> beta;   // empty when s == 1
  std::vector<double> alpha;  // gamma - beta; empty when s == 1
  bool conditioning_warning = false;

  bool has_embedded() const noexcept { return !beta.empty(); }
};

inline SchemeCoefficients scheme_coefficients(int s, bool symmetric) {
  SchemeCoefficients c;
  auto g = additive_coeffs(s, symmetric);
  c.gamma = std::move(g.values);
  c.conditioning_warning = g.conditioning_warning;
  if (s >= 2) {
    c.beta = embedded_coeffs(s, symmetric).values;
    for (int k = 0; k < s; ++k) {
      c.alpha.push_back(k + 1 < s ? c.gamma[static_cast<std::size_t>(k)] - c.beta[static_cast<std::size_t>(k)]
                                  : c.gamma[static_cast<std::size_t>(k)]);
    }
  }
  return c;
}

}  // namespace lrdre
