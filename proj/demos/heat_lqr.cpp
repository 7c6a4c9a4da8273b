// Riccati equation of a finite-horizon LQR problem for the 1-D heat equation,
// solved with the adaptive 4th-order symmetric scheme and with fixed-step Strang.
// Usage: heat_lqr [N] [quadrature degree]

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "lrdre/lrdre.hpp"

int main(int argc, char** argv) {
  using namespace lrdre;
  GeneratorParams g;
  g.kind = ProblemKind::LaplacianLQR;
  g.n = argc > 1 ? std::atol(argv[1]) : 50;
  g.rank = 2;
  g.diffusion = 0.05;
  g.T = 1.0;
  const ProblemData p = generate_problem(g).problem;

  ControllerParams c;
  c.tol = 1e-6;
  DriverOptions opts;
  opts.solver.comp.rel_tol = 1e-10;
  opts.solver.quad_degree = argc > 2 ? std::atoi(argv[2]) : 8;
  opts.sink = [](const StepRecord& r) {
    std::cout << (r.accepted ? "  accept" : "  reject") << " t=" << std::setw(10) << r.t << " h=" << std::setw(10)
              << r.h << " est=" << std::setw(10) << r.err_est << " rank=" << r.rank << '\n';
  };
  std::cout << "adaptive sym2, N = " << g.n << '\n';
  const Trajectory adaptive = integrate_adaptive(p, {SchemeKind::SymmetricAdditive, 2}, 0.01, c, opts);

  opts.sink = nullptr;
  const Trajectory strang = integrate_fixed(p, {SchemeKind::Strang, 1}, 50, opts);

  CompressionOptions exact;
  exact.rel_tol = 0.0;
  const double diff = frob_norm(combine({{1.0, adaptive.final_state}, {-1.0, strang.final_state}}, exact));
  std::cout << "accepted " << adaptive.steps.size() << ", rejected " << adaptive.rejected.size() << '\n'
            << "||P(T)||_F = " << frob_norm(adaptive.final_state) << ", rank " << adaptive.final_state.rank() << '\n'
            << "difference to Strang with 50 steps: " << diff / frob_norm(adaptive.final_state) << '\n';
}
