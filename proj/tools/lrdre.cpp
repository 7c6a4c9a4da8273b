// lrdre: generate problems, solve, run studies and validate against the dense oracle.
//
// Exit codes: 0 success, 2 ingestion or usage error, 3 solver failure,
// 4 failed check in `validate`.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lrdre/lrdre.hpp"
#include "lrdre/config.hpp"
#include "lrdre/io/matrix_market.hpp"
#include "lrdre/io/problem_files.hpp"
#include "lrdre/study.hpp"
#include "lrdre/validate.hpp"

namespace fs = std::filesystem;
using namespace lrdre;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIngestion = 2;
constexpr int kExitSolver = 3;
constexpr int kExitValidate = 4;

// Command-line values; unset ones leave the config file (or default) untouched.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> problem_dir;
  std::optional<std::string> kind;
  std::optional<long> n;
  std::optional<long> rank;
  std::optional<int> dims;
  std::optional<double> diffusion;
  std::optional<double> T;
  std::optional<std::string> scheme;
  std::optional<int> stages;
  std::optional<std::string> order;
  std::optional<long> steps;
  std::optional<double> tol;
  std::optional<double> h1;
  bool epus = false;
  std::optional<double> exp_tol;
  std::optional<double> comp_tol;
  std::optional<std::string> quad_degree;
  std::optional<std::string> quad_rule;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool store_all = false;

  // study only
  std::vector<std::string> schemes;
  std::vector<long> ladder;
  std::vector<double> tolerances;
  std::optional<std::string> reference;
};

void add_problem_options(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON run configuration");
  app->add_option("--problem", f.problem_dir, "problem directory (A.mtx, B.mtx, C.mtx, ...)");
  app->add_option("--kind", f.kind, "generated problem kind: random_lowrank or laplacian_lqr");
  app->add_option("--n", f.n, "generated problem dimension");
  app->add_option("--rank", f.rank, "generated factor rank");
  app->add_option("--dims", f.dims, "laplacian_lqr: 1 or 2 space dimensions");
  app->add_option("--diffusion", f.diffusion, "laplacian_lqr: diffusion coefficient");
  app->add_option("--T", f.T, "final time");
  app->add_option("--seed", f.seed, "random seed");
}

void add_solver_options(CLI::App* app, Flags& f) {
  app->add_option("--scheme", f.scheme, "lie, strang, asym or sym")
      ->check(CLI::IsMember({"lie", "strang", "asym", "sym"}));
  app->add_option("--stages", f.stages, "stage count of the additive schemes");
  app->add_option("--order", f.order, "FG or GF: which subflow is the outer one")->check(CLI::IsMember({"FG", "GF"}));
  auto* steps = app->add_option("--steps", f.steps, "fixed number of steps");
  auto* tol = app->add_option("--tol", f.tol, "adaptive: error tolerance");
  steps->excludes(tol);
  app->add_option("--h1", f.h1, "adaptive: initial step size");
  app->add_flag("--epus", f.epus, "adaptive: error per unit step");
  app->add_option("--exp-tol", f.exp_tol, "relative tolerance of the exponential actions");
  app->add_option("--comp-tol", f.comp_tol, "relative truncation tolerance of column compression");
  app->add_option("--quad-degree", f.quad_degree, "auto (order + 1), stages (s + 1) or an integer");
  app->add_option("--quad-rule", f.quad_rule, "incremental or gauss")->check(CLI::IsMember({"incremental", "gauss"}));
  app->add_option("--threads", f.threads, "worker threads for the additive chains");
  app->add_option("--out", f.out, "output directory");
}

RunConfig build_config(const Flags& f, nlohmann::json* file_json = nullptr) {
  RunConfig cfg;
  if (f.config) {
    const auto j = load_json(*f.config);
    apply_json(cfg, j);
    if (file_json) *file_json = j;
  }
  auto& g = cfg.problem.generator;
  if (f.problem_dir) cfg.problem.dir = *f.problem_dir;
  if (f.kind) {
    const auto k = parse_problem_kind(*f.kind);
    if (!k) throw InvalidInput("unknown problem kind '" + *f.kind + "'");
    g.kind = *k;
    cfg.problem.dir.reset();
  }
  if (f.n) g.n = *f.n;
  if (f.rank) g.rank = *f.rank;
  if (f.dims) g.dims = *f.dims;
  if (f.diffusion) g.diffusion = *f.diffusion;
  if (f.T) cfg.problem.T = *f.T;
  if (f.scheme) {
    cfg.scheme = parse_scheme(*f.scheme, f.stages);
  } else if (f.stages) {
    cfg.scheme.stages = *f.stages;
  }
  if (f.order) cfg.scheme.order = parse_operator_order(*f.order);
  if (f.steps) {
    cfg.n_steps = *f.steps;
    cfg.adaptive.reset();
  }
  if (f.tol) {
    AdaptiveSettings a = cfg.adaptive.value_or(AdaptiveSettings{});
    a.tol = *f.tol;
    cfg.adaptive = a;
    cfg.n_steps.reset();
  }
  if (cfg.adaptive) {
    if (f.h1) cfg.adaptive->h1 = *f.h1;
    if (f.epus) cfg.adaptive->epus = true;
  }
  if (!cfg.n_steps && !cfg.adaptive) cfg.n_steps = 100;
  if (f.exp_tol) cfg.exp_tol = *f.exp_tol;
  if (f.comp_tol) cfg.comp_tol = *f.comp_tol;
  if (f.quad_degree) set_quad_degree(cfg, *f.quad_degree);
  if (f.quad_rule) cfg.quad_rule = *f.quad_rule == "gauss" ? QuadratureRule::Gauss : QuadratureRule::Incremental;
  if (f.threads) cfg.threads = *f.threads;
  if (f.seed) cfg.seed = *f.seed;
  if (f.store_all) cfg.store_all = true;
  if (f.out) cfg.out = *f.out;
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

int cmd_generate(const Flags& f) {
  GeneratorParams g;
  if (f.kind) {
    const auto k = parse_problem_kind(*f.kind);
    if (!k) throw InvalidInput("unknown problem kind '" + *f.kind + "'");
    g.kind = *k;
  }
  if (f.n) g.n = *f.n;
  if (f.rank) g.rank = *f.rank;
  if (f.seed) g.seed = *f.seed;
  if (f.T) g.T = *f.T;
  if (f.dims) g.dims = *f.dims;
  if (f.diffusion) g.diffusion = *f.diffusion;
  const fs::path out = f.out.value_or("problem");
  const LQRData d = generate_lqr(g);
  nlohmann::json meta = {{"kind", to_string(g.kind)}, {"n", g.n}, {"rank", g.rank}, {"seed", g.seed}};
  if (g.kind == ProblemKind::LaplacianLQR) {
    meta["dims"] = g.dims;
    meta["diffusion"] = g.diffusion;
  }
  io::export_problem(out, d, meta);
  std::cout << "wrote " << to_string(g.kind) << " problem, N = " << g.n << ", to " << out.string() << '\n';
  return kExitOk;
}

int cmd_solve(const Flags& f) {
  const RunConfig cfg = build_config(f);
  const LoadedProblem lp = load_problem(cfg);
  fs::create_directories(cfg.out);
  write_json(cfg.out / "config.json", to_json(cfg));

  std::ofstream csv(cfg.out / "steps.csv");
  csv << "t,h,err_est,err_control,accepted,rejections,rank,fresh_blocks,clamped,min_core_eigenvalue\n";
  csv << std::setprecision(17);
  DriverOptions opts;
  opts.solver = cfg.solver_options();
  opts.store_all = cfg.store_all;
  opts.sink = [&](const StepRecord& r) {
    csv << r.t << ',' << r.h << ',' << r.err_est << ',' << r.err_control << ',' << r.accepted << ',' << r.rejections
        << ',' << r.rank << ',' << r.fresh_quad_blocks << ',' << r.clamped << ',' << r.min_core_eigenvalue << '\n';
  };

  const auto start = std::chrono::steady_clock::now();
  Trajectory traj;
  if (cfg.adaptive) {
    ControllerParams c;
    c.tol = cfg.adaptive->tol;
    c.epus = cfg.adaptive->epus;
    traj = integrate_adaptive(lp.problem, cfg.scheme, cfg.adaptive->h1.value_or(lp.problem.T / 100), c, opts);
  } else {
    traj = integrate_fixed(lp.problem, cfg.scheme, *cfg.n_steps, opts);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  io::write_factor(cfg.out, "P_T", traj.final_state);
  if (cfg.store_all) {
    for (std::size_t i = 0; i < traj.factors.size(); ++i) {
      std::ostringstream stem;
      stem << "P_" << std::setw(6) << std::setfill('0') << i + 1;
      io::write_factor(cfg.out, stem.str(), traj.factors[i]);
    }
  }
  std::ofstream summary(cfg.out / "summary.txt");
  summary << "problem: " << lp.description << '\n'
          << "scheme: " << cfg.scheme.name() << '\n'
          << "accepted steps: " << traj.steps.size() << ", rejected: " << traj.rejected.size() << '\n'
          << "final rank: " << traj.final_state.rank() << '\n'
          << "wallclock_s: " << wall << '\n';
  std::cout << cfg.scheme.name() << ": " << traj.steps.size() << " steps, final rank " << traj.final_state.rank()
            << ", " << wall << " s; output in " << cfg.out.string() << '\n';
  return kExitOk;
}

int cmd_study(const Flags& f, const std::string& which) {
  const auto kind = parse_study_kind(which);
  if (!kind) throw InvalidInput("study must be order, efficiency or adaptivity");
  nlohmann::json j;
  const RunConfig cfg = build_config(f, &j);
  StudySpec study = default_study(*kind);
  if (j.contains("study")) apply_json(study, j.at("study"));
  if (!f.schemes.empty()) {
    study.schemes.clear();
    for (const auto& s : f.schemes) study.schemes.push_back(parse_scheme(s));
  } else if (f.scheme && !j.contains("study")) {
    study.schemes = {cfg.scheme};
  }
  if (!f.ladder.empty()) study.ladder = f.ladder;
  if (!f.tolerances.empty()) study.tolerances = f.tolerances;
  if (f.reference) apply_json(study, nlohmann::json{{"reference", *f.reference}});
  if (f.epus) study.epus = true;
  if (f.h1) study.h1 = *f.h1;

  const LoadedProblem lp = load_problem(cfg);
  const StudyReport rep = run_study(lp, study, cfg);
  write_report(cfg.out, rep);
  write_json(cfg.out / "config.json", to_json(cfg));
  write_summary(std::cout, rep);
  return kExitOk;
}

int cmd_validate(const Flags& f) {
  const RunConfig cfg = build_config(f);
  const LoadedProblem lp = load_problem(cfg);
  const auto checks = run_validation(lp, cfg);
  bool all = true;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    all = all && c.passed;
  }
  return all ? kExitOk : kExitValidate;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank splitting solvers for differential Riccati equations"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("generate", "write a generated problem as MatrixMarket files");
  gen->add_option("--kind", f.kind, "random_lowrank or laplacian_lqr");
  gen->add_option("--n", f.n, "dimension");
  gen->add_option("--rank", f.rank, "rank of B, C and P0");
  gen->add_option("--seed", f.seed, "random seed");
  gen->add_option("--T", f.T, "final time");
  gen->add_option("--dims", f.dims, "laplacian_lqr: 1 or 2 space dimensions");
  gen->add_option("--diffusion", f.diffusion, "laplacian_lqr: diffusion coefficient");
  gen->add_option("--out", f.out, "output directory");

  auto* solve = app.add_subcommand("solve", "integrate to the final time");
  add_problem_options(solve, f);
  add_solver_options(solve, f);
  solve->add_flag("--store-all", f.store_all, "write the factor after every accepted step");

  auto* study = app.add_subcommand("study", "order, efficiency or adaptivity study");
  std::string which;
  study->add_option("study", which, "order, efficiency or adaptivity")
      ->required()
      ->check(CLI::IsMember({"order", "efficiency", "adaptivity"}));
  add_problem_options(study, f);
  add_solver_options(study, f);
  study->add_option("--schemes", f.schemes, "scheme names such as lie strang asym3 sym2");
  study->add_option("--ladder", f.ladder, "step counts of the fixed-step runs");
  study->add_option("--tolerances", f.tolerances, "tolerances of the adaptive runs");
  study->add_option("--reference", f.reference, "auto, oracle or finest")
      ->check(CLI::IsMember({"auto", "oracle", "finest"}));

  auto* validate = app.add_subcommand("validate", "compare against the dense oracle");
  add_problem_options(validate, f);
  add_solver_options(validate, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitIngestion;
  }

  try {
    if (gen->parsed()) return cmd_generate(f);
    if (solve->parsed()) return cmd_solve(f);
    if (study->parsed()) return cmd_study(f, which);
    return cmd_validate(f);
  } catch (const IngestionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIngestion;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIngestion;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << detail::describe(e) << '\n';
    return kExitSolver;
  }
}
