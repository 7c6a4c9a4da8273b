#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace lrdre;
using lrdre::test::rel_diff;

namespace {

SolverOptions tight() {
  SolverOptions o;
  o.exp.rel_tol = 1e-13;
  o.comp.rel_tol = 1e-14;
  return o;
}

}  // namespace

TEST(Controller, PiUpdateExamples) {
  ControllerParams c;
  c.tol = 1.0;
  c.safety = 0.5;
  c.k_I = 0.2;
  c.k_P = 0.0;
  // (0.5 / 1)^0.2 = 2^-0.2.
  EXPECT_NEAR(pi_update(1.0, 1.0, 1.0, c, 1), std::pow(2.0, -0.2), 1e-15);
  EXPECT_NEAR(pi_update(1.0, 1.0, 1.0, c, 1), 0.87055056329612, 1e-13);
  // Tiny error: growth capped.
  EXPECT_DOUBLE_EQ(pi_update(1.0, 0.0, 2.0, c, 1), 2.0 * c.max_growth);
}

TEST(Controller, DefaultGainsUseEstimateOrder) {
  ControllerParams c;
  EXPECT_DOUBLE_EQ(c.gain_I(2), 0.1);
  EXPECT_DOUBLE_EQ(c.gain_P(4), 0.05);
}

TEST(Controller, ScaleInvariance) {
  // Scaling tol and both estimates by the same factor leaves the step unchanged.
  ControllerParams a, b;
  a.tol = 1e-4;
  b.tol = 1e-7;
  const double ha = pi_update(3e-5, 7e-5, 0.1, a, 2);
  const double hb = pi_update(3e-8, 7e-8, 0.1, b, 2);
  EXPECT_NEAR(ha, hb, 1e-14);
}

TEST(Controller, RejectResize) {
  ControllerParams c;
  c.tol = 1.0;
  c.safety = 0.5;
  EXPECT_NEAR(reject_resize(1.0, 1.0, c, 1), 0.5, 1e-15);
  EXPECT_NEAR(reject_resize(5.0, 1.0, c, 1), 0.1, 1e-15);
  EXPECT_NEAR(reject_resize(2.0, 1.0, c, 2), 0.5, 1e-15);
}

TEST(Controller, Validation) {
  ControllerParams c;
  c.safety = 1.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c.safety = 0.9;
  c.tol = -1;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(FixedDriver, Sym4ErrorRatioOnTanh) {
  DriverOptions opts;
  opts.solver = tight();
  const SchemeSpec spec{SchemeKind::SymmetricAdditive, 2};
  const double e1 = std::abs(test::scalar(integrate_fixed(test::tanh_problem(), spec, 8, opts).final_state) - std::tanh(1.0));
  const double e2 = std::abs(test::scalar(integrate_fixed(test::tanh_problem(), spec, 16, opts).final_state) - std::tanh(1.0));
  EXPECT_GE(e1 / e2, 8.0);
  EXPECT_LE(e1 / e2, 32.0);
}

TEST(FixedDriver, RecordsAndSink) {
  int calls = 0;
  DriverOptions opts;
  opts.store_all = true;
  opts.sink = [&](const StepRecord&) { ++calls; };
  const auto traj = integrate_fixed(test::tanh_problem(), {SchemeKind::AsymmetricAdditive, 2}, 4, opts);
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(traj.factors.size(), 4u);
  EXPECT_DOUBLE_EQ(traj.steps[1].t, 0.5);
  EXPECT_FALSE(std::isnan(traj.steps[0].err_est));
  EXPECT_GT(traj.steps[0].fresh_quad_blocks, 0);
  EXPECT_EQ(traj.steps[1].fresh_quad_blocks, 0);
  EXPECT_THROW(integrate_fixed(test::tanh_problem(), {SchemeKind::Lie, 1}, 0), InvalidInput);
}

TEST(AdaptiveDriver, TanhMeetsTolerance) {
  DriverOptions opts;
  opts.solver = tight();
  ControllerParams c;
  c.tol = 1e-6;
  const auto traj = integrate_adaptive(test::tanh_problem(), {SchemeKind::SymmetricAdditive, 2}, 0.1, c, opts);
  EXPECT_DOUBLE_EQ(traj.steps.back().t, 1.0);
  for (const auto& s : traj.steps) EXPECT_LE(s.err_control, c.tol);
  for (std::size_t i = 1; i < traj.steps.size(); ++i) EXPECT_GT(traj.steps[i].t, traj.steps[i - 1].t);
  EXPECT_LT(std::abs(test::scalar(traj.final_state) - std::tanh(1.0)), 1e-4);
}

TEST(AdaptiveDriver, SingleClampedStep) {
  ControllerParams c;
  c.tol = 1.0;
  const auto traj = integrate_adaptive(test::tanh_problem(0.5), {SchemeKind::AsymmetricAdditive, 2}, 10.0, c);
  ASSERT_EQ(traj.steps.size(), 1u);
  EXPECT_TRUE(traj.steps[0].clamped);
  EXPECT_EQ(traj.steps[0].t, 0.5);
  EXPECT_EQ(traj.steps[0].h, 0.5);
}

TEST(AdaptiveDriver, RejectionRecomputesThenShrinks) {
  ControllerParams c;
  c.tol = 1e-8;
  const auto traj = integrate_adaptive(test::tanh_problem(), {SchemeKind::AsymmetricAdditive, 2}, 1.0, c);
  ASSERT_GE(traj.rejected.size(), 2u);
  // First rejection retries the same h.
  EXPECT_EQ(traj.rejected[0].h, traj.rejected[1].h);
  if (traj.rejected.size() > 2) EXPECT_LT(traj.rejected[2].h, traj.rejected[1].h);
  EXPECT_DOUBLE_EQ(traj.steps.back().t, 1.0);
}

TEST(AdaptiveDriver, StepSizeCollapse) {
  ControllerParams c;
  c.tol = 1e-30;
  c.h_min = 1e-3;
  try {
    integrate_adaptive(test::tanh_problem(), {SchemeKind::AsymmetricAdditive, 2}, 0.1, c);
    FAIL() << "expected StepSizeCollapse";
  } catch (const StepSizeCollapse& e) {
    EXPECT_GE(e.partial().rejected.size(), 2u);
    EXPECT_EQ(e.partial().final_state.dim(), 1);
  }
}

TEST(AdaptiveDriver, RequiresEmbeddedMethod) {
  EXPECT_THROW(integrate_adaptive(test::tanh_problem(), {SchemeKind::Strang, 1}, 0.1, {}), NoEmbeddedMethod);
  EXPECT_THROW(integrate_adaptive(test::tanh_problem(), {SchemeKind::SymmetricAdditive, 1}, 0.1, {}), NoEmbeddedMethod);
}

TEST(AdaptiveDriver, FailureIsWrappedWithStepIndex) {
  // Negative-definite initial core drives solve_G singular.
  ProblemData p = test::tanh_problem();
  p.P0 = LDLTFactor(Matrix::Ones(1, 1), -1.0 * Matrix::Ones(1, 1));
  try {
    integrate_fixed(p, {SchemeKind::Lie, 1}, 1);
    FAIL();
  } catch (const SolverFailure& e) {
    EXPECT_EQ(e.step_index(), 0u);
    try {
      std::rethrow_if_nested(e);
      FAIL();
    } catch (const StepTooLarge&) {
    }
  }
}

TEST(Derivatives, TanhExamples) {
  const ProblemData p = test::tanh_problem();
  // At p = 0: p' = 1, p'' = -2 p p' = 0.
  const auto d0 = estimate_derivatives(LDLTFactor::zero(1), p);
  EXPECT_NEAR(test::scalar(d0.first), 1.0, 1e-15);
  EXPECT_NEAR(test::scalar(d0.second), 0.0, 1e-15);
  // At p = tanh(0.5): p' = sech^2, p'' = -2 tanh sech^2.
  Matrix L(1, 1);
  L << std::sqrt(std::tanh(0.5));
  const auto d = estimate_derivatives(LDLTFactor(L, Matrix::Ones(1, 1)), p);
  const double sech2 = 1.0 / std::pow(std::cosh(0.5), 2);
  EXPECT_NEAR(test::scalar(d.first), sech2, 1e-14);
  EXPECT_NEAR(test::scalar(d.second), -2.0 * std::tanh(0.5) * sech2, 1e-14);
  EXPECT_NEAR(interpolation_error_bound(1e-3, 0.2, d.second), 1e-3 + 0.04 * 2.0 * std::tanh(0.5) * sech2 / 8, 1e-15);
}

TEST(Derivatives, MatchDenseFormulas) {
  std::mt19937_64 rng(81);
  GeneratorParams g;
  g.n = 7;
  g.rank = 2;
  g.seed = 9;
  const auto gp = generate_problem(g);
  const DenseProblem& dp = *gp.dense;
  const LDLTFactor F = test::random_factor(7, 3, rng);
  const Matrix P = to_dense(F);
  const Matrix P1 = dp.A.transpose() * P + P * dp.A + dp.Q - P * dp.S * P;
  const Matrix P2 = dp.A.transpose() * P1 + P1 * dp.A - P1 * dp.S * P - P * dp.S * P1;
  const auto d = estimate_derivatives(F, gp.problem);
  EXPECT_LT(rel_diff(to_dense(d.first), P1), 1e-12);
  EXPECT_LT(rel_diff(to_dense(d.second), P2), 1e-12);
}
