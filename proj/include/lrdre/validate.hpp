#pragma once

// Oracle comparisons for a configured run on a problem small enough for dense storage.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lrdre/study.hpp"

namespace lrdre {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

}  // namespace detail

// Minimum fitted slope accepted for a scheme of order p.
inline double order_threshold(int p) { return 0.85 * p; }

inline std::vector<Check> run_validation(const LoadedProblem& lp, const RunConfig& cfg) {
  if (!lp.dense) throw RefusedDense("validate: N = " + std::to_string(lp.problem.dim()) + " exceeds the oracle limit");
  const ProblemData& p = lp.problem;
  const DenseProblem& dp = *lp.dense;
  std::vector<Check> checks;

  StudySpec study = default_study(StudyKind::Order);
  study.schemes = {cfg.scheme};
  const Reference ref = oracle_reference(dp, study.oracle_steps, study.reference_tol);
  checks.push_back({"reference self-consistency", ref.self_difference <= 1e-10,
                    ref.method + ", self-difference " + detail::sci(ref.self_difference)});

  // Subflows from P0 and from a random symmetric state, against their dense closed forms.
  {
    SolverOptions tight;
    tight.exp.rel_tol = 1e-13;
    tight.comp.rel_tol = 1e-15;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd;
    Matrix L(p.dim(), 2);
    for (Index j = 0; j < L.cols(); ++j)
      for (Index i = 0; i < L.rows(); ++i) L(i, j) = nd(rng) / std::sqrt(static_cast<double>(p.dim()));
    const LDLTFactor X(L, Matrix::Identity(2, 2));
    const double h = p.T / 10.0;
    const auto quad = init_quadrature(p, h, 8, tight.exp, tight.comp);
    double worst_g = 0.0, worst_f = 0.0;
    for (const LDLTFactor* F : {&p.P0, &X}) {
      const Matrix P = to_dense(*F);
      if (P.norm() == 0.0) continue;
      worst_g = std::max(worst_g, relative_error(to_dense(solve_G(*F, h, p.S)), dense_subflow(Subflow::G, P, h, dp)));
      worst_f = std::max(worst_f, relative_error(to_dense(solve_F(*F, h, p, quad, tight.exp, tight.comp)),
                                                 dense_subflow(Subflow::F, P, h, dp)));
    }
    checks.push_back({"solve_G matches dense subflow", worst_g <= 1e-10, "max rel. error " + detail::sci(worst_g)});
    checks.push_back({"solve_F matches dense subflow", worst_f <= 1e-10, "max rel. error " + detail::sci(worst_f)});
  }

  {
    std::vector<RunRow> rows;
    for (long n : study.ladder) rows.push_back(run_fixed(p, cfg.scheme, n, cfg, ref));
    const SlopeRow s = fit_slope(cfg.scheme.name(), rows, study.window_lo, study.window_hi);
    const double want = order_threshold(cfg.scheme.convergence_order());
    checks.push_back({cfg.scheme.name() + " convergence order", s.points >= 2 && s.slope >= want,
                      "slope " + (std::isnan(s.slope) ? std::string("n/a") : detail::sci(s.slope)) + " over " +
                          std::to_string(s.points) + " points, need >= " + detail::sci(want)});
  }

  if (cfg.adaptive) {
    ControllerParams c;
    c.tol = cfg.adaptive->tol;
    c.epus = cfg.adaptive->epus;
    DriverOptions opts;
    opts.solver = cfg.solver_options();
    try {
      const Trajectory traj = integrate_adaptive(p, cfg.scheme, cfg.adaptive->h1.value_or(p.T / 100), c, opts);
      bool ok = traj.steps.back().t == p.T;
      for (const auto& s : traj.steps) ok = ok && s.err_control <= c.tol;
      const double err = ref.relative_error(traj.final_state);
      checks.push_back({"adaptive run meets tolerance", ok,
                        std::to_string(traj.steps.size()) + " steps, final rel. error " + detail::sci(err)});
    } catch (const Error& e) {
      checks.push_back({"adaptive run meets tolerance", false, detail::describe(e)});
    }
  } else if (cfg.n_steps) {
    const RunRow r = run_fixed(p, cfg.scheme, *cfg.n_steps, cfg, ref);
    checks.push_back({"configured fixed-step run", r.status == "ok",
                      r.status == "ok" ? "final rel. error " + detail::sci(r.rel_error) : r.status});
  }
  return checks;
}

}  // namespace lrdre
