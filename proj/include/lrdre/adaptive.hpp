#pragma once

// Fixed-step and adaptive time integration of the Riccati equation with the
// splitting schemes, PI step-size control and the rejection/retry policy.

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lrdre/error.hpp"
#include "lrdre/lowrank.hpp"
#include "lrdre/problem.hpp"
#include "lrdre/schemes.hpp"

namespace lrdre {

struct ControllerParams {
  double tol = 1e-6;
  double safety = 0.9;
  // Unset gains default to 0.2 / p with p the order of the error estimate.
  std::optional<double> k_I;
  std::optional<double> k_P;
  // Divide estimates by h before comparing them with tol.
  bool epus = false;
  // Step sizes below this abort the run; unset means 1e-12 * T.
  std::optional<double> h_min;
  double max_growth = 5.0;

  double gain_I(int p_est) const { return k_I ? *k_I : 0.2 / p_est; }
  double gain_P(int p_est) const { return k_P ? *k_P : 0.2 / p_est; }
  double error_floor() const { return 1e-4 * safety * tol; }

  void validate() const {
    if (!(tol > 0.0)) throw InvalidInput("controller: tol must be > 0");
    if (!(safety > 0.0 && safety < 1.0)) throw InvalidInput("controller: safety factor must lie in (0, 1)");
    if (!(max_growth > 1.0)) throw InvalidInput("controller: growth cap must exceed 1");
  }
};

struct StepRecord {
  double t = 0.0;  // time at the end of the step
  double h = 0.0;
  double err_est = std::numeric_limits<double>::quiet_NaN();  // raw ||embedded difference||_F
  double err_control = std::numeric_limits<double>::quiet_NaN();  // compared with tol (EPUS-scaled if enabled)
  bool accepted = true;
  int rejections = 0;
  Index rank = 0;
  int fresh_quad_blocks = 0;
  bool clamped = false;  // final step shortened to land on T
  double min_core_eigenvalue = 0.0;
};

struct Trajectory {
  std::vector<StepRecord> steps;     // accepted steps, t strictly increasing
  std::vector<StepRecord> rejected;  // rejected attempts in order of occurrence
  std::vector<LDLTFactor> factors;   // state after each accepted step (when stored)
  LDLTFactor final_state;
};

using StepSink = std::function<void(const StepRecord&)>;

struct DriverOptions {
  SolverOptions solver;
  bool store_all = false;
  StepSink sink;
};

// A step failed; the original error is nested.
class SolverFailure : public Error {
 public:
  SolverFailure(std::size_t step_index, const std::string& what)
      : Error("step " + std::to_string(step_index) + ": " + what), step_index_(step_index) {}
  std::size_t step_index() const noexcept { return step_index_; }

 private:
  std::size_t step_index_;
};

class StepSizeCollapse : public Error {
 public:
  StepSizeCollapse(double h, double t, Trajectory partial)
      : Error("adaptive driver: step size " + std::to_string(h) + " collapsed at t = " + std::to_string(t)),
        partial_(std::move(partial)) {}
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  Trajectory partial_;
};

// h_{n+1} = (eps TOL / e_new)^{k_I} (e_prev / e_new)^{k_P} h_n, with both
// estimates floored at 1e-4 eps TOL and growth capped at max_growth.
inline double pi_update(double e_prev, double e_new, double h, const ControllerParams& params, int p_est) {
  const double floor = params.error_floor();
  const double en = std::max(e_new, floor);
  const double ep = std::max(e_prev, floor);
  const double factor = std::pow(params.safety * params.tol / en, params.gain_I(p_est)) *
                        std::pow(ep / en, params.gain_P(p_est));
  return h * std::min(factor, params.max_growth);
}

// Shrunk retry step (eps TOL / e_new)^{1/est_order} h after a rejection.
inline double reject_resize(double e_new, double h, const ControllerParams& params, int est_order) {
  return h * std::pow(params.safety * params.tol / e_new, 1.0 / est_order);
}

namespace detail {

inline void emit(const DriverOptions& opts, const StepRecord& rec) {
  if (opts.sink) opts.sink(rec);
}

}  // namespace detail

inline Trajectory integrate_fixed(const ProblemData& p, const SchemeSpec& spec, long n_steps,
                                  const DriverOptions& opts = {}) {
  spec.validate();
  if (n_steps < 1) throw InvalidInput("integrate_fixed: need at least one step");
  const double h = p.T / static_cast<double>(n_steps);
  const SchemeCoefficients coeffs = coefficients_for(spec);
  const SubstepQuadratures quads = SubstepQuadratures::build(p, spec, h, opts.solver);

  Trajectory traj;
  LDLTFactor cur = p.P0;
  for (long i = 0; i < n_steps; ++i) {
    StepResult res;
    try {
      res = scheme_step(cur, h, spec, coeffs, p, quads, opts.solver);
    } catch (const std::exception& e) {
      std::throw_with_nested(SolverFailure(static_cast<std::size_t>(i), e.what()));
    }
    cur = std::move(res.next);
    StepRecord rec;
    rec.t = i + 1 == n_steps ? p.T : static_cast<double>(i + 1) * h;
    rec.h = h;
    if (res.err_est) {
      rec.err_est = *res.err_est;
      rec.err_control = *res.err_est;
    }
    rec.rank = cur.rank();
    rec.fresh_quad_blocks = i == 0 ? quads.fresh_blocks() : 0;
    rec.min_core_eigenvalue = res.min_core_eigenvalue;
    detail::emit(opts, rec);
    traj.steps.push_back(rec);
    if (opts.store_all) traj.factors.push_back(cur);
  }
  traj.final_state = std::move(cur);
  return traj;
}

// Adaptive integration over [0, T]: quadrature updated incrementally for each
// trial step; a rejected step is first retried at the same h with freshly
// recomputed quadrature, then with a shrunk step; accepted steps feed the PI
// controller; the last step is clamped to land exactly on T.
inline Trajectory integrate_adaptive(const ProblemData& p, const SchemeSpec& spec, double h1,
                                     const ControllerParams& params, const DriverOptions& opts = {}) {
  spec.validate();
  params.validate();
  if (!spec.has_embedded()) {
    throw NoEmbeddedMethod("integrate_adaptive: scheme " + spec.name() + " has no embedded estimate");
  }
  if (!(h1 > 0.0)) throw InvalidInput("integrate_adaptive: initial step must be > 0");

  const SchemeCoefficients coeffs = coefficients_for(spec);
  const int p_est = spec.estimate_order();
  const double T = p.T;
  const double h_min = params.h_min ? *params.h_min : 1e-12 * T;

  Trajectory traj;
  LDLTFactor cur = p.P0;
  double t = 0.0;
  double h = std::min(h1, T);
  double e_prev = params.safety * params.tol;

  SubstepQuadratures quads = SubstepQuadratures::build(p, spec, h, opts.solver);
  int fresh = quads.fresh_blocks();
  int rejections = 0;
  bool recomputed = false;

  while (true) {
    bool last = false;
    if (t + h > T - h_min) {
      h = T - t;
      last = true;
    }
    if (h != quads.h()) {
      quads = quads.update(p, h, opts.solver);
      fresh += quads.fresh_blocks();
    }

    StepResult res;
    try {
      res = additive_step(cur, h, spec, coeffs, p, quads, opts.solver);
    } catch (const std::exception& e) {
      std::throw_with_nested(SolverFailure(traj.steps.size(), e.what()));
    }
    const double e_raw = *res.err_est;
    const double e = params.epus ? e_raw / h : e_raw;

    StepRecord rec;
    rec.t = last ? T : t + h;
    rec.h = h;
    rec.err_est = e_raw;
    rec.err_control = e;
    rec.rank = res.next.rank();
    rec.min_core_eigenvalue = res.min_core_eigenvalue;
    rec.clamped = last;

    if (e > params.tol) {
      ++rejections;
      rec.accepted = false;
      rec.rejections = rejections;
      rec.fresh_quad_blocks = fresh;
      detail::emit(opts, rec);
      traj.rejected.push_back(rec);
      if (!recomputed) {
        quads = quads.recompute(p, opts.solver);
        fresh += quads.fresh_blocks();
        recomputed = true;
        continue;
      }
      h = reject_resize(e, h, params, p_est);
      if (h < h_min) {
        traj.final_state = cur;
        throw StepSizeCollapse(h, t, std::move(traj));
      }
      continue;
    }

    rec.rejections = rejections;
    rec.fresh_quad_blocks = fresh;
    detail::emit(opts, rec);
    traj.steps.push_back(rec);
    cur = std::move(res.next);
    if (opts.store_all) traj.factors.push_back(cur);
    t = rec.t;
    if (last) break;

    const double h_next = pi_update(e_prev, e, h, params, p_est);
    e_prev = e;
    h = h_next;
    fresh = 0;
    rejections = 0;
    recomputed = false;
  }
  traj.final_state = std::move(cur);
  return traj;
}

// First and second time-derivative estimates at a state P = L D L^T:
//   P'  = A^T P + P A + Q - P S P                  on [A^T L, L, L_Q]
//   P'' = A^T P' + P' A - P' S P - P S P'           on [A^T L~, L~, L]
struct DerivativeEstimates {
  LDLTFactor first;
  LDLTFactor second;
};

inline DerivativeEstimates estimate_derivatives(const LDLTFactor& F, const ProblemData& p,
                                                const CompressionOptions& comp = {}) {
  const Index n = p.dim();
  if (F.dim() != n) throw InvalidInput("estimate_derivatives: dimension mismatch");
  const Index r = F.rank();
  const Index rq = p.L_Q.cols();

  Matrix L1(n, 2 * r + rq);
  L1 << p.A.apply_transpose(F.L()), F.L(), p.L_Q;
  Matrix D1 = Matrix::Zero(2 * r + rq, 2 * r + rq);
  D1.block(0, r, r, r) = F.D();
  D1.block(r, 0, r, r) = F.D();
  D1.block(r, r, r, r) = -F.D() * p.S.coupling(F.L(), F.L()) * F.D();
  D1.block(2 * r, 2 * r, rq, rq) = p.D_Q;
  LDLTFactor first = compress(LDLTFactor(std::move(L1), std::move(D1)), comp);

  const Index r1 = first.rank();
  Matrix L2(n, 2 * r1 + r);
  L2 << p.A.apply_transpose(first.L()), first.L(), F.L();
  Matrix D2 = Matrix::Zero(2 * r1 + r, 2 * r1 + r);
  D2.block(0, r1, r1, r1) = first.D();
  D2.block(r1, 0, r1, r1) = first.D();
  const Matrix cross = -first.D() * p.S.coupling(first.L(), F.L()) * F.D();
  D2.block(r1, 2 * r1, r1, r) = cross;
  D2.block(2 * r1, r1, r, r1) = cross.transpose();
  LDLTFactor second = compress(LDLTFactor(std::move(L2), std::move(D2)), comp);
  return {std::move(first), std::move(second)};
}

// Bound on the error of piecewise-linear interpolation between accepted states
// on a step of size h: tol + h^2 ||P''|| / 8.
inline double interpolation_error_bound(double tol, double h, const LDLTFactor& second_derivative) {
  return tol + h * h * frob_norm(second_derivative) / 8.0;
}

}  // namespace lrdre
