#pragma once

// Time-stepping operators built from the two subflows: Lie, Strang and the
// additive asymmetric/symmetric schemes with their embedded error estimates.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lrdre/coefficients.hpp"
#include "lrdre/error.hpp"
#include "lrdre/expaction.hpp"
#include "lrdre/lowrank.hpp"
#include "lrdre/problem.hpp"
#include "lrdre/quadrature.hpp"
#include "lrdre/subflows.hpp"

namespace lrdre {

enum class SchemeKind { Lie, Strang, AsymmetricAdditive, SymmetricAdditive };

// FG: T_F is the outer operator, i.e. T_G acts first within each Lie step.
enum class OperatorOrder { FG, GF };

struct SchemeSpec {
  SchemeKind kind = SchemeKind::SymmetricAdditive;
  int stages = 1;
  OperatorOrder order = OperatorOrder::FG;

  bool additive() const noexcept {
    return kind == SchemeKind::AsymmetricAdditive || kind == SchemeKind::SymmetricAdditive;
  }
  bool symmetric() const noexcept { return kind == SchemeKind::SymmetricAdditive; }

  int convergence_order() const noexcept {
    switch (kind) {
      case SchemeKind::Lie: return 1;
      case SchemeKind::Strang: return 2;
      case SchemeKind::AsymmetricAdditive: return stages;
      case SchemeKind::SymmetricAdditive: return 2 * stages;
    }
    return 0;
  }

  bool has_embedded() const noexcept { return additive() && stages >= 2; }

  // Order of the embedded estimate: s - 1 (asymmetric) or 2s - 2 (symmetric).
  int estimate_order() const noexcept {
    if (!has_embedded()) return 0;
    return symmetric() ? 2 * stages - 2 : stages - 1;
  }

  // Divisors k of h for which T_F(h / k) is evaluated.
  std::vector<int> substep_divisors() const {
    if (additive()) {
      std::vector<int> d(static_cast<std::size_t>(stages));
      for (int k = 1; k <= stages; ++k) d[static_cast<std::size_t>(k - 1)] = k;
      return d;
    }
    if (kind == SchemeKind::Strang && order == OperatorOrder::GF) return {2};
    return {1};
  }

  void validate() const {
    if (stages < 1) throw InvalidInput("scheme: stage count must be >= 1");
  }

  std::string name() const {
    switch (kind) {
      case SchemeKind::Lie: return "lie";
      case SchemeKind::Strang: return "strang";
      case SchemeKind::AsymmetricAdditive: return "asym" + std::to_string(stages);
      case SchemeKind::SymmetricAdditive: return "sym" + std::to_string(stages);
    }
    return "?";
  }
};

struct SolverOptions {
  ExpActionOptions exp;
  CompressionOptions comp;
  int quad_degree = 0;  // 0 selects convergence order + 1
  QuadratureRule quad_rule = QuadratureRule::Incremental;
  int threads = 1;

  int resolved_degree(const SchemeSpec& spec) const {
    return quad_degree > 0 ? quad_degree : spec.convergence_order() + 1;
  }
};

// One quadrature state per substep size h / k used by a scheme.
class SubstepQuadratures {
 public:
  SubstepQuadratures() = default;

  static SubstepQuadratures build(const ProblemData& p, const SchemeSpec& spec, double h,
                                  const SolverOptions& opts) {
    SubstepQuadratures q;
    q.h_ = h;
    const int degree = opts.resolved_degree(spec);
    for (int k : spec.substep_divisors()) {
      q.states_.emplace(k, init_quadrature(p, h / k, degree, opts.exp, opts.comp, opts.quad_rule));
    }
    return q;
  }

  double h() const noexcept { return h_; }

  const QuadratureState& at(int k) const {
    const auto it = states_.find(k);
    if (it == states_.end()) throw InvalidInput("no quadrature prepared for substep h/" + std::to_string(k));
    return it->second;
  }

  // Incremental transition of every state to step size h_new.
  SubstepQuadratures update(const ProblemData& p, double h_new, const SolverOptions& opts) const {
    SubstepQuadratures q;
    q.h_ = h_new;
    for (const auto& [k, st] : states_) {
      q.states_.emplace(k, update_quadrature(st, p, h_new / k, opts.exp, opts.comp));
    }
    return q;
  }

  SubstepQuadratures recompute(const ProblemData& p, const SolverOptions& opts) const {
    SubstepQuadratures q;
    q.h_ = h_;
    for (const auto& [k, st] : states_) q.states_.emplace(k, recompute_quadrature(st, p, opts.exp, opts.comp));
    return q;
  }

  // Blocks computed by the transition that produced these states.
  int fresh_blocks() const {
    int n = 0;
    for (const auto& [k, st] : states_) n += st.fresh_blocks;
    return n;
  }

  const std::map<int, QuadratureState>& states() const noexcept { return states_; }

 private:
  double h_ = 0.0;
  std::map<int, QuadratureState> states_;
};

namespace detail {

// Runs task(i) for i in [0, count) on up to `threads` workers. The first
// failing index (in index order) is rethrown.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  const auto guarded = [&](std::size_t i) {
    try {
      task(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) guarded(i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < count; i += workers) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

// k repetitions of T_F(h/k) T_G(h/k) (FG) or T_G(h/k) T_F(h/k) (GF).
// `quad` must be prepared for the substep h / k.
inline LDLTFactor chain(const LDLTFactor& F, double h, int k, OperatorOrder direction,
                        const ProblemData& p, const QuadratureState& quad, const SolverOptions& opts) {
  if (k < 1) throw InvalidInput("chain: k must be >= 1");
  const double sub = h / k;
  LDLTFactor cur = F;
  for (int rep = 0; rep < k; ++rep) {
    if (direction == OperatorOrder::FG) {
      cur = solve_F(solve_G(cur, sub, p.S), sub, p, quad, opts.exp, opts.comp);
    } else {
      cur = solve_G(solve_F(cur, sub, p, quad, opts.exp, opts.comp), sub, p.S);
    }
  }
  return cur;
}

// One Lie step T_F(h) T_G(h), or one Strang step T_G(h/2) T_F(h) T_G(h/2);
// GF swaps the roles of the two subflows.
inline LDLTFactor multiplicative_step(const LDLTFactor& F, double h, const SchemeSpec& spec,
                                      const ProblemData& p, const SubstepQuadratures& quads,
                                      const SolverOptions& opts) {
  if (spec.kind == SchemeKind::Lie) return chain(F, h, 1, spec.order, p, quads.at(1), opts);
  if (spec.kind != SchemeKind::Strang) throw InvalidInput("multiplicative_step: not a Lie or Strang scheme");
  if (spec.order == OperatorOrder::FG) {
    const LDLTFactor a = solve_G(F, 0.5 * h, p.S);
    const LDLTFactor b = solve_F(a, h, p, quads.at(1), opts.exp, opts.comp);
    return solve_G(b, 0.5 * h, p.S);
  }
  const QuadratureState& half = quads.at(2);
  const LDLTFactor a = solve_F(F, 0.5 * h, p, half, opts.exp, opts.comp);
  const LDLTFactor b = solve_G(a, h, p.S);
  return solve_F(b, 0.5 * h, p, half, opts.exp, opts.comp);
}

struct StepResult {
  LDLTFactor next;
  std::optional<double> err_est;  // Frobenius norm of the embedded difference
  double min_core_eigenvalue = 0.0;
};

namespace detail {

inline double min_core_eigenvalue(const LDLTFactor& F) {
  if (F.rank() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Matrix>(F.D(), Eigen::EigenvaluesOnly).eigenvalues()(0);
}

}  // namespace detail

// sum_k gamma_k chain_k, plus the estimate ||sum_k alpha_k chain_k||_F when an
// embedded method exists. Chains are independent and may run concurrently;
// they are always combined in (k, FG before GF) order.
inline StepResult additive_step(const LDLTFactor& F, double h, const SchemeSpec& spec,
                                const SchemeCoefficients& coeffs, const ProblemData& p,
                                const SubstepQuadratures& quads, const SolverOptions& opts) {
  if (!spec.additive()) throw InvalidInput("additive_step: not an additive scheme");
  const int s = spec.stages;
  if (static_cast<int>(coeffs.gamma.size()) != s) throw InvalidInput("additive_step: coefficient count mismatch");

  struct Job {
    int k;
    OperatorOrder direction;
  };
  std::vector<Job> jobs;
  for (int k = 1; k <= s; ++k) {
    if (spec.symmetric()) {
      jobs.push_back({k, OperatorOrder::FG});
      jobs.push_back({k, OperatorOrder::GF});
    } else {
      jobs.push_back({k, spec.order});
    }
  }
  std::vector<LDLTFactor> chains(jobs.size());
  detail::parallel_for(jobs.size(), opts.threads, [&](std::size_t i) {
    chains[i] = chain(F, h, jobs[i].k, jobs[i].direction, p, quads.at(jobs[i].k), opts);
  });

  const auto weighted = [&](const std::vector<double>& w) {
    std::vector<WeightedFactor> terms;
    terms.reserve(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      terms.push_back({w[static_cast<std::size_t>(jobs[i].k - 1)], chains[i]});
    }
    return combine(terms, opts.comp);
  };

  StepResult out{weighted(coeffs.gamma), std::nullopt, 0.0};
  if (coeffs.has_embedded()) out.err_est = frob_norm(weighted(coeffs.alpha));
  out.min_core_eigenvalue = detail::min_core_eigenvalue(out.next);
  return out;
}

// Any scheme: multiplicative schemes carry no estimate.
inline StepResult scheme_step(const LDLTFactor& F, double h, const SchemeSpec& spec,
                              const SchemeCoefficients& coeffs, const ProblemData& p,
                              const SubstepQuadratures& quads, const SolverOptions& opts) {
  if (spec.additive()) return additive_step(F, h, spec, coeffs, p, quads, opts);
  StepResult out{multiplicative_step(F, h, spec, p, quads, opts), std::nullopt, 0.0};
  out.min_core_eigenvalue = detail::min_core_eigenvalue(out.next);
  return out;
}

inline SchemeCoefficients coefficients_for(const SchemeSpec& spec) {
  if (!spec.additive()) return {};
  return scheme_coefficients(spec.stages, spec.symmetric());
}

}  // namespace lrdre
