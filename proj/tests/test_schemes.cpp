#include <gtest/gtest.h>

#include <random>
#include <vector>

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

double tanh_error(const SchemeSpec& spec, long n) {
  DriverOptions opts;
  opts.solver = tight();
  const auto traj = integrate_fixed(test::tanh_problem(), spec, n, opts);
  return std::abs(test::scalar(traj.final_state) - std::tanh(1.0));
}

double tanh_slope(const SchemeSpec& spec, const std::vector<long>& ns) {
  std::vector<double> h, e;
  for (long n : ns) {
    h.push_back(1.0 / n);
    e.push_back(tanh_error(spec, n));
  }
  return test::loglog_slope(h, e);
}

ProblemData random_problem(Index n, std::mt19937_64& rng) {
  GeneratorParams g;
  g.n = n;
  g.rank = 2;
  g.seed = rng();
  return generate_problem(g).problem;
}

}  // namespace

TEST(SchemeSpec, Properties) {
  const SchemeSpec sym3{SchemeKind::SymmetricAdditive, 3};
  EXPECT_EQ(sym3.convergence_order(), 6);
  EXPECT_EQ(sym3.estimate_order(), 4);
  EXPECT_EQ(sym3.name(), "sym3");
  EXPECT_EQ(sym3.substep_divisors(), (std::vector<int>{1, 2, 3}));
  const SchemeSpec asym1{SchemeKind::AsymmetricAdditive, 1};
  EXPECT_FALSE(asym1.has_embedded());
  EXPECT_EQ((SchemeSpec{SchemeKind::Strang, 1, OperatorOrder::GF}.substep_divisors()), std::vector<int>{2});
  EXPECT_THROW((SchemeSpec{SchemeKind::Lie, 0}.validate()), InvalidInput);
}

TEST(Chain, ScalarComposition) {
  // One FG repetition on tanh from p = 1 with h = 1: G gives 1/2, F adds 1.
  const ProblemData p = test::tanh_problem();
  const auto quad = init_quadrature(p, 1.0, 2);
  const LDLTFactor one(Matrix::Ones(1, 1), Matrix::Ones(1, 1));
  EXPECT_NEAR(test::scalar(chain(one, 1.0, 1, OperatorOrder::FG, p, quad, {})), 1.5, 1e-14);
  EXPECT_NEAR(test::scalar(chain(one, 1.0, 1, OperatorOrder::GF, p, quad, {})), 2.0 / 3.0, 1e-14);
}

TEST(Chain, CollapsesToSingleFlowWhenSubflowsCommute) {
  // With S = 0 the G flow is the identity, so the chain is T_F(h) regardless of k.
  std::mt19937_64 rng(71);
  ProblemData p = random_problem(6, rng);
  p.S = QuadraticOperator::zero(6);
  const SolverOptions o = tight();
  const auto q1 = init_quadrature(p, 0.2, 6, o.exp, o.comp);
  const auto q3 = init_quadrature(p, 0.2 / 3, 6, o.exp, o.comp);
  const Matrix one = to_dense(chain(p.P0, 0.2, 1, OperatorOrder::FG, p, q1, o));
  const Matrix three = to_dense(chain(p.P0, 0.2, 3, OperatorOrder::GF, p, q3, o));
  EXPECT_LT(rel_diff(three, one), 1e-11);
}

TEST(Schemes, LieAndStrangOrdersOnTanh) {
  const double lie = tanh_slope({SchemeKind::Lie, 1}, {16, 32, 64, 128});
  EXPECT_NEAR(lie, 1.0, 0.15);
  const double strang = tanh_slope({SchemeKind::Strang, 1}, {16, 32, 64, 128});
  EXPECT_NEAR(strang, 2.0, 0.2);
  const double strang_gf = tanh_slope({SchemeKind::Strang, 1, OperatorOrder::GF}, {16, 32, 64, 128});
  EXPECT_NEAR(strang_gf, 2.0, 0.2);
}

TEST(Schemes, AdditiveOrdersOnTanh) {
  EXPECT_NEAR(tanh_slope({SchemeKind::AsymmetricAdditive, 2}, {8, 16, 32, 64}), 2.0, 0.25);
  EXPECT_NEAR(tanh_slope({SchemeKind::AsymmetricAdditive, 3}, {8, 16, 32, 64}), 3.0, 0.3);
  EXPECT_NEAR(tanh_slope({SchemeKind::SymmetricAdditive, 2}, {16, 32, 64, 128}), 4.0, 0.3);
}

TEST(Schemes, SingleStageAdditiveIsLie) {
  std::mt19937_64 rng(72);
  const ProblemData p = random_problem(5, rng);
  DriverOptions opts;
  opts.solver = tight();
  opts.solver.quad_degree = 6;
  const auto add = integrate_fixed(p, {SchemeKind::AsymmetricAdditive, 1}, 7, opts);
  const auto lie = integrate_fixed(p, {SchemeKind::Lie, 1}, 7, opts);
  EXPECT_LT(rel_diff(to_dense(add.final_state), to_dense(lie.final_state)), 1e-13);
  // Symmetric s = 1 is the average of the two Lie orderings.
  const auto sym = integrate_fixed(p, {SchemeKind::SymmetricAdditive, 1}, 1, opts);
  const auto fg = integrate_fixed(p, {SchemeKind::Lie, 1, OperatorOrder::FG}, 1, opts);
  const auto gf = integrate_fixed(p, {SchemeKind::Lie, 1, OperatorOrder::GF}, 1, opts);
  const Matrix avg = 0.5 * (to_dense(fg.final_state) + to_dense(gf.final_state));
  EXPECT_LT(rel_diff(to_dense(sym.final_state), avg), 1e-13);
}

TEST(Schemes, EmbeddedEstimateIsTheCoefficientDifference) {
  // err_est = || sum_k gamma_k c_k - sum_k beta_k c_k ||, computed against a one-step beta scheme.
  std::mt19937_64 rng(73);
  const ProblemData p = random_problem(5, rng);
  const SolverOptions o = tight();
  const SchemeSpec s3{SchemeKind::AsymmetricAdditive, 3};
  const SchemeSpec s2{SchemeKind::AsymmetricAdditive, 2};
  const double h = 0.1;
  const auto q3 = SubstepQuadratures::build(p, s3, h, o);
  const auto r3 = additive_step(p.P0, h, s3, coefficients_for(s3), p, q3, o);
  const auto r2 = additive_step(p.P0, h, s2, coefficients_for(s2), p, q3, o);
  ASSERT_TRUE(r3.err_est.has_value());
  const double diff = (to_dense(r3.next) - to_dense(r2.next)).norm();
  EXPECT_NEAR(*r3.err_est, diff, 1e-9 * diff);
}

TEST(Schemes, MatchDenseReferenceOnRandomProblem) {
  std::mt19937_64 rng(74);
  const auto g = [&] {
    GeneratorParams gp;
    gp.n = 8;
    gp.rank = 3;
    gp.seed = 5;
    return generate_problem(gp);
  }();
  const Matrix ref = dense_dre_reference(*g.dense, 4000);
  DriverOptions opts;
  opts.solver = tight();
  const auto traj = integrate_fixed(g.problem, {SchemeKind::SymmetricAdditive, 2}, 32, opts);
  EXPECT_LT(relative_error(to_dense(traj.final_state), ref), 1e-8);
  EXPECT_EQ(traj.steps.size(), 32u);
  EXPECT_DOUBLE_EQ(traj.steps.back().t, 1.0);
}

TEST(Schemes, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 rng(75);
  const ProblemData p = random_problem(10, rng);
  DriverOptions a, b;
  b.solver.threads = 4;
  for (const SchemeSpec spec : {SchemeSpec{SchemeKind::SymmetricAdditive, 3}, SchemeSpec{SchemeKind::AsymmetricAdditive, 4}}) {
    const auto ta = integrate_fixed(p, spec, 5, a);
    const auto tb = integrate_fixed(p, spec, 5, b);
    EXPECT_EQ(ta.final_state.L(), tb.final_state.L());
    EXPECT_EQ(ta.final_state.D(), tb.final_state.D());
    for (std::size_t i = 0; i < ta.steps.size(); ++i) EXPECT_EQ(ta.steps[i].err_est, tb.steps[i].err_est);
  }
}

TEST(Schemes, ParallelForReportsFirstFailure) {
  std::vector<int> hits(10, 0);
  try {
    detail::parallel_for(10, 3, [&](std::size_t i) {
      hits[i] = 1;
      if (i == 4 || i == 7) throw InvalidInput("job " + std::to_string(i));
    });
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_STREQ(e.what(), "job 4");
  }
  for (int h : hits) EXPECT_EQ(h, 1);
}
