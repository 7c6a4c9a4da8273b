// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/factorials.hpp>

#include "lrdre/lrdre.hpp"
#include "lrdre/study.hpp"

using namespace lrdre;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      failures.push_back(what);
      passed = false;
    }
  }
};

Matrix randn(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd;
  Matrix M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = scale * nd(rng);
  return M;
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

std::string fixed2(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

ProblemData tanh_problem() {
  ProblemData p;
  p.A = StiffOperator(Matrix(Matrix::Zero(1, 1)));
  p.L_Q = Matrix::Ones(1, 1);
  p.D_Q = Matrix::Ones(1, 1);
  p.S = QuadraticOperator(Matrix(Matrix::Ones(1, 1)));
  p.P0 = LDLTFactor::zero(1);
  p.T = 1.0;
  return p;
}

RunConfig reference_config() {
  RunConfig cfg;
  cfg.n_steps = 1;
  cfg.problem.generator.n = 10;
  cfg.problem.generator.rank = 4;
  cfg.seed = 1;
  cfg.exp_tol = 1e-13;
  return cfg;
}

double max_moment_residual(const std::vector<double>& s, const std::vector<double>& w, double h) {
  double worst = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    long double acc = 0.0L;
    for (std::size_t k = 0; k < s.size(); ++k) acc += w[k] * std::pow(static_cast<long double>(s[k]), j);
    const long double exact = std::pow(static_cast<long double>(h), j + 1) / (j + 1);
    worst = std::max(worst, static_cast<double>(std::abs(acc - exact) / exact));
  }
  return worst;
}

// 1. Convergence orders against the dense reference.
Outcome order_study() {
  Outcome o;
  const RunConfig cfg = reference_config();
  const LoadedProblem lp = load_problem(cfg);
  StudySpec study = default_study(StudyKind::Order);
  study.schemes = {parse_scheme("lie"), parse_scheme("strang")};
  study.ladder = sqrt2_ladder(2, 2048);
  const StudyReport low = run_study(lp, study, cfg);
  study.schemes = {parse_scheme("asym3"), parse_scheme("sym2"), parse_scheme("sym3")};
  study.ladder = sqrt2_ladder(2, 512);
  const StudyReport high = run_study(lp, study, cfg);

  o.require(low.reference_self_difference <= 1e-10, "reference not self-verified");
  o.detail << "reference self-diff " << sci(low.reference_self_difference) << ";";
  struct Want {
    std::string name;
    double lo, hi;
  };
  const std::vector<Want> wants{{"lie", 0.8, 1e9}, {"strang", 1.7, 2.3}, {"asym3", 2.7, 1e9}, {"sym2", 3.6, 4.4}, {"sym3", 5.0, 1e9}};
  std::vector<SlopeRow> slopes = low.slopes;
  slopes.insert(slopes.end(), high.slopes.begin(), high.slopes.end());
  for (const auto& w : wants) {
    for (const auto& s : slopes) {
      if (s.scheme != w.name) continue;
      o.detail << ' ' << s.scheme << '=' << fixed2(s.slope) << '(' << s.points << ')';
      o.require(s.points >= 3 && s.slope >= w.lo && s.slope <= w.hi, w.name + " slope out of range");
    }
  }
  for (const auto* rep : {&low, &high})
    for (const auto& r : rep->runs) o.require(r.status == "ok", r.scheme + " run failed: " + r.status);
  return o;
}

// 2. Factored subflows against their dense closed forms; quadrature moments.
Outcome subflow_equivalence() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 20), rk(1, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ExpActionOptions exp;
  exp.rel_tol = 1e-13;
  CompressionOptions comp;
  comp.rel_tol = 1e-15;
  double worst_g = 0.0, worst_f = 0.0;
  const int instances = 120;
  for (int i = 0; i < instances; ++i) {
    const Index n = dim(rng);
    const double sc = 1.0 / std::sqrt(static_cast<double>(n));
    ProblemData p;
    p.A = StiffOperator(Matrix(randn(n, n, rng, sc)));
    p.L_Q = randn(n, rk(rng), rng, sc);
    p.D_Q = Matrix::Identity(p.L_Q.cols(), p.L_Q.cols());
    const Index rs = rk(rng);
    const Matrix B = randn(n, rs, rng, sc);
    // Alternate between factored and dense storage of S.
    p.S = i % 2 ? QuadraticOperator(LowRankQuadratic{B, Matrix::Identity(rs, rs)})
                : QuadraticOperator(Matrix(B * B.transpose()));
    const Index r0 = rk(rng);
    const Matrix G = randn(r0, r0, rng);
    p.P0 = LDLTFactor(randn(n, r0, rng, sc), G * G.transpose());
    p.T = 1.0;
    const DenseProblem dp = densify(p);
    const double h = 0.01 + 0.19 * u(rng);
    const Matrix P = to_dense(p.P0);
    worst_g = std::max(worst_g, relative_error(to_dense(solve_G(p.P0, h, p.S)), dense_subflow(Subflow::G, P, h, dp)));
    const auto quad = init_quadrature(p, h, 8, exp, comp);
    worst_f = std::max(worst_f, relative_error(to_dense(solve_F(p.P0, h, p, quad, exp, comp)),
                                               dense_subflow(Subflow::F, P, h, dp)));
  }
  o.require(worst_g <= 1e-10, "solve_G error " + sci(worst_g));
  o.require(worst_f <= 1e-10, "solve_F error " + sci(worst_f));

  double worst_m = 0.0;
  for (int d = 0; d <= 9; ++d) {
    for (int trial = 0; trial < 20; ++trial) {
      const double h = std::pow(10.0, -3.0 + 4.0 * u(rng));
      std::vector<double> s;
      for (int k = 0; k <= d; ++k) {
        const double jitter = (k > 0 && k < d) ? 0.3 * (u(rng) - 0.5) : 0.0;
        s.push_back(d == 0 ? h * u(rng) : h * (k + jitter) / d);
      }
      worst_m = std::max(worst_m, max_moment_residual(s, quad_weights(s, h), h));
    }
  }
  o.require(worst_m <= 1e-12, "moment residual " + sci(worst_m));
  o.detail << " " << instances << " instances, solve_G " << sci(worst_g) << ", solve_F "
           << sci(worst_f) << ", moments " << sci(worst_m);
  return o;
}

// 3. Additive coefficients.
Outcome coefficient_conditions() {
  Outcome o;
  double worst = 0.0;
  for (bool sym : {false, true}) {
    for (int s = 1; s <= 8; ++s) {
      const auto g = additive_coeffs(s, sym).values;
      double scale = 1.0;
      for (double v : g) scale = std::max(scale, std::abs(v));
      for (double r : order_condition_residuals(g, sym)) worst = std::max(worst, std::abs(r) / scale);
      if (sym) continue;
      for (int k = 1; k <= s; ++k) {
        const double closed = ((s - k) % 2 ? -1.0 : 1.0) * std::pow(k, s) /
                              (boost::math::factorial<double>(k) * boost::math::factorial<double>(s - k));
        o.require(std::abs(g[k - 1] - closed) <= 1e-12 * std::abs(closed),
                  "closed form mismatch at s=" + std::to_string(s) + " k=" + std::to_string(k));
      }
    }
  }
  o.require(worst <= 1e-12, "order condition residual " + sci(worst));
  const auto a2 = additive_coeffs(2, false).values;
  o.require(a2 == std::vector<double>{-1.0, 2.0}, "asym s=2 is not (-1, 2)");
  o.detail << " max scaled residual " << sci(worst);
  return o;
}

// 4. Scaling of the embedded estimate per unit step on the scalar tanh problem.
Outcome embedded_order() {
  Outcome o;
  ProblemData p = tanh_problem();
  // Start from P(1/2) on the tanh trajectory; at P = 0 the leading commutator vanishes.
  p.P0 = LDLTFactor(Matrix::Ones(1, 1), Matrix::Constant(1, 1, std::tanh(0.5)));
  SolverOptions solver;
  solver.exp.rel_tol = 1e-13;
  solver.comp.rel_tol = 1e-15;
  for (const char* name : {"asym2", "asym3", "sym2", "sym3"}) {
    const SchemeSpec spec = parse_scheme(name);
    const auto coeffs = coefficients_for(spec);
    std::vector<double> hs, es;
    for (double h : {0.0625, 0.03125, 0.015625, 0.0078125}) {
      const auto quads = SubstepQuadratures::build(p, spec, h, solver);
      const auto res = additive_step(p.P0, h, spec, coeffs, p, quads, solver);
      hs.push_back(std::log(h));
      es.push_back(std::log(*res.err_est / h));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      mx += hs[i] / hs.size();
      my += es[i] / hs.size();
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      sxy += (hs[i] - mx) * (es[i] - my);
      sxx += (hs[i] - mx) * (hs[i] - mx);
    }
    const double slope = sxy / sxx;
    const int want = spec.estimate_order();
    o.detail << ' ' << name << '=' << fixed2(slope) << "/" << want;
    o.require(std::abs(slope - want) <= 0.3, std::string(name) + " estimate order off");
  }
  return o;
}

// 5. Adaptive symmetric 4th-order scheme with error per unit step.
Outcome adaptive_driver() {
  Outcome o;
  const RunConfig cfg = reference_config();
  const LoadedProblem lp = load_problem(cfg);
  StudySpec study = default_study(StudyKind::Adaptivity);
  const StudyReport rep = run_study(lp, study, cfg);
  for (const auto& r : rep.runs) o.require(r.status == "ok", "tol " + sci(r.tol) + ": " + r.status);
  long covered = 0;
  for (const auto& s : rep.steps) {
    o.require(s.record.err_control <= s.tol, "accepted estimate above tol");
    covered += s.e_actual <= s.record.err_est;
  }
  for (double tol : study.tolerances) {
    double last_t = -1.0;
    for (const auto& s : rep.steps)
      if (s.tol == tol) last_t = s.record.t;
    o.require(last_t == lp.problem.T, "tol " + sci(tol) + " does not end at T");
  }
  const double frac = rep.steps.empty() ? 0.0 : static_cast<double>(covered) / rep.steps.size();
  o.require(frac >= 0.9, "actual <= estimate on only " + fixed2(100 * frac) + "% of steps");
  o.detail << ' ' << rep.steps.size() << " accepted steps, actual <= estimate on "
           << fixed2(100 * frac) << "%";
  return o;
}

// 6. Incremental quadrature updates.
Outcome quadrature_economy() {
  Outcome o;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ratio(0.81, 1.24);
  const Index n = 12;
  ProblemData p;
  p.A = StiffOperator(Matrix(randn(n, n, rng, 1.0 / std::sqrt(12.0))));
  p.L_Q = randn(n, 2, rng);
  p.D_Q = Matrix::Identity(2, 2);
  p.S = QuadraticOperator::zero(n);
  p.P0 = LDLTFactor::zero(n);
  // Growing computes at most one block; shrinking computes one per node that left [0, h_new].
  int updates = 0, at_most_one = 0, worst_grow = 0, miscounted = 0;
  double worst_m = 0.0;
  for (int d = 3; d <= 9; ++d) {
    auto st = init_quadrature(p, 0.05, d);
    for (int i = 0; i < 60; ++i) {
      const double h_new = st.h * ratio(rng);
      const auto outside = std::count_if(st.nodes.begin(), st.nodes.end(), [&](double s) { return s > h_new; });
      const bool grow = h_new > st.h;
      st = update_quadrature(st, p, h_new);
      ++updates;
      at_most_one += st.fresh_blocks <= 1;
      if (grow)
        worst_grow = std::max(worst_grow, st.fresh_blocks);
      else
        miscounted += st.fresh_blocks != outside;
      worst_m = std::max(worst_m, max_moment_residual(st.nodes, st.weights, st.h));
    }
    const auto big = update_quadrature(st, p, st.h * 1.5);
    o.require(big.fresh_blocks == d + 1, "ratio 1.5 at d=" + std::to_string(d) + " computed " +
                                             std::to_string(big.fresh_blocks) + " blocks");
    worst_m = std::max(worst_m, max_moment_residual(big.nodes, big.weights, big.h));
  }
  o.require(worst_grow <= 1, "a growing update computed " + std::to_string(worst_grow) + " blocks");
  o.require(miscounted == 0, std::to_string(miscounted) + " shrinking updates computed extra blocks");
  o.require(worst_m <= 1e-12, "moment residual " + sci(worst_m));
  o.detail << ' ' << updates << " in-band updates, " << at_most_one << " with <= 1 fresh block, max on growth "
           << worst_grow << ", moments " << sci(worst_m);
  return o;
}

// 7. Column compression.
Outcome compression_contract() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 64), rk(0, 20);
  std::uniform_real_distribution<double> tol_exp(-14.0, -1.0);
  double worst_ratio = 0.0, worst_norm = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const Index n = dim(rng), r = rk(rng);
    const Matrix G = randn(r, r, rng);
    Matrix L = randn(n, r, rng);
    // Some factors get nearly dependent columns so that truncation has work to do.
    if (r >= 2 && trial % 3 == 0) L.col(r - 1) = L.col(0) + 1e-9 * L.col(1);
    const LDLTFactor F(L, G + G.transpose());
    const Matrix P = to_dense(F, 64);
    CompressionOptions opts;
    opts.rel_tol = std::pow(10.0, tol_exp(rng));
    const LDLTFactor C = compress(F, opts);
    o.require(C.rank() <= F.rank(), "rank increased");
    const double pn = P.norm();
    if (pn > 0) {
      worst_ratio = std::max(worst_ratio, (to_dense(C, 64) - P).norm() / (*opts.rel_tol * pn));
      worst_norm = std::max(worst_norm, std::abs(frob_norm(F) - pn) / pn);
    }
  }
  o.require(worst_ratio <= 1.0 + 1e-8, "truncation error exceeds tolerance (ratio " + sci(worst_ratio) + ")");
  o.require(worst_norm <= 1e-12, "frob_norm mismatch " + sci(worst_norm));
  o.detail << " max error/tol " << fixed2(worst_ratio) << ", frob_norm " << sci(worst_norm);
  return o;
}

std::string strip_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// 8. Thread count does not change the reports.
Outcome determinism() {
  Outcome o;
  RunConfig cfg = reference_config();
  StudySpec study = default_study(StudyKind::Efficiency);
  study.schemes = {parse_scheme("strang"), parse_scheme("asym3"), parse_scheme("sym3")};
  study.ladder = {10, 20, 40};
  study.tolerances = {1e-3, 1e-5};
  const fs::path base = fs::temp_directory_path() / ("lrdre_acceptance_" + std::to_string(::getpid()));
  std::vector<std::string> results, slopes;
  for (int threads : {1, 4}) {
    cfg.threads = threads;
    const fs::path dir = base / ("threads" + std::to_string(threads));
    write_report(dir, run_study(load_problem(cfg), study, cfg));
    results.push_back(strip_last_column(slurp(dir / "results.csv")));
    slopes.push_back(slurp(dir / "slopes.csv"));
  }
  fs::remove_all(base);
  o.require(!results[0].empty() && results[0] == results[1], "results.csv differs");
  o.require(slopes[0] == slopes[1], "slopes.csv differs");
  o.detail << " results.csv " << results[0].size() << " bytes identical without wallclock";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 order study", order_study},
      {"2 subflow oracle equivalence", subflow_equivalence},
      {"3 additive coefficients", coefficient_conditions},
      {"4 embedded estimate order", embedded_order},
      {"5 adaptive driver", adaptive_driver},
      {"6 quadrature update economy", quadrature_economy},
      {"7 compression contract", compression_contract},
      {"8 determinism", determinism},
  };
  bool all = true;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail << " exception: " << detail::describe(e);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string detail = o.detail.str();
    if (!detail.empty() && detail.front() == ' ') detail.erase(0, 1);
    std::cout << (o.passed ? "PASS " : "FAIL ") << name << ": " << detail;
    for (const auto& f : o.failures) std::cout << " | " << f;
    std::cout << " [" << fixed2(secs) << " s]" << std::endl;
    all = all && o.passed;
  }
  return all ? 0 : 1;
}
