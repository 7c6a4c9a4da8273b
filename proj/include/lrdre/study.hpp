#pragma once

// Convergence, efficiency and adaptivity studies.
//
// results.csv   scheme,mode,n,tol,h,steps,rejected,rel_error,max_rank,fresh_blocks,status,wallclock_s
// slopes.csv    scheme,slope,points,min_error,max_error
// steps.csv     scheme,tol,step,t,h,err_est,err_control,e_actual,rank,rejections,fresh_blocks,min_core_eigenvalue
// summary.txt   problem, reference and slope table in plain text
//
// rel_error is ||P(T) - P_ref||_F / ||P_ref||_F. For fixed-step rows h = T/n;
// for adaptive rows h = T/steps (the mean step). e_actual compares each
// accepted step with the same scheme run over the step in 10 equal substeps
// from the same starting state. wallclock_s covers the driver only and is the
// last column so that reports can be compared with it stripped.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrdre/adaptive.hpp"
#include "lrdre/config.hpp"
#include "lrdre/generate.hpp"
#include "lrdre/io/problem_files.hpp"
#include "lrdre/oracle.hpp"

namespace lrdre {

enum class StudyKind { Order, Efficiency, Adaptivity };

enum class ReferencePolicy {
  Auto,    // Oracle when N <= 256, Finest otherwise
  Oracle,  // dense RK4, step count doubled until self-consistent
  Finest,  // highest-order scheme of the study at half the smallest step
};

struct StudySpec {
  StudyKind kind = StudyKind::Order;
  std::vector<SchemeSpec> schemes;
  std::vector<long> ladder;
  std::vector<double> tolerances;
  ReferencePolicy reference = ReferencePolicy::Auto;
  double reference_tol = 1e-12;
  long oracle_steps = 1000;
  double window_lo = 1e-10;
  double window_hi = 1e-3;
  bool epus = false;
  std::optional<double> h1;
  int refinement_substeps = 10;

  void validate() const {
    if (schemes.empty()) throw InvalidInput("study: no schemes");
    if (kind != StudyKind::Adaptivity && ladder.size() < 3) {
      throw InvalidInput("study: the step ladder needs at least 3 entries");
    }
    for (long n : ladder)
      if (n < 1) throw InvalidInput("study: ladder entries must be >= 1");
    if (kind == StudyKind::Adaptivity && tolerances.empty()) throw InvalidInput("study: no tolerances");
    for (double t : tolerances)
      if (!(t > 0.0)) throw InvalidInput("study: tolerances must be > 0");
    if (!(reference_tol > 0.0)) throw InvalidInput("study: reference_tol must be > 0");
    if (!(window_lo < window_hi)) throw InvalidInput("study: empty fitting window");
  }
};

// Integer step counts spaced by roughly sqrt(2) from lo to hi.
inline std::vector<long> sqrt2_ladder(long lo, long hi) {
  std::vector<long> out;
  for (double x = static_cast<double>(lo); x <= static_cast<double>(hi) * (1 + 1e-12); x *= std::sqrt(2.0)) {
    const long n = std::lround(x);
    if (out.empty() || n != out.back()) out.push_back(n);
  }
  return out;
}

inline StudySpec default_study(StudyKind kind) {
  StudySpec s;
  s.kind = kind;
  switch (kind) {
    case StudyKind::Order:
      for (const char* name : {"lie", "strang", "asym2", "asym3", "sym1", "sym2", "sym3"}) {
        s.schemes.push_back(parse_scheme(name));
      }
      s.ladder = sqrt2_ladder(2, 2048);
      break;
    case StudyKind::Efficiency:
      for (const char* name : {"strang", "asym3", "sym2", "sym3"}) s.schemes.push_back(parse_scheme(name));
      s.ladder = {10, 20, 40, 80, 160, 320, 640, 1280};
      s.tolerances = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
      break;
    case StudyKind::Adaptivity:
      s.schemes = {parse_scheme("sym2")};
      s.tolerances = {1e-1, 1e-2, 1e-3};
      s.epus = true;
      break;
  }
  return s;
}

inline std::optional<StudyKind> parse_study_kind(const std::string& s) {
  if (s == "order") return StudyKind::Order;
  if (s == "efficiency") return StudyKind::Efficiency;
  if (s == "adaptivity") return StudyKind::Adaptivity;
  return std::nullopt;
}

inline std::string to_string(StudyKind k) {
  switch (k) {
    case StudyKind::Order: return "order";
    case StudyKind::Efficiency: return "efficiency";
    case StudyKind::Adaptivity: return "adaptivity";
  }
  return "?";
}

// Overrides from the "study" object of a run config.
inline void apply_json(StudySpec& s, const nlohmann::json& j) {
  if (j.contains("schemes")) {
    s.schemes.clear();
    for (const auto& n : j.at("schemes")) s.schemes.push_back(parse_scheme(n.get<std::string>()));
  }
  if (j.contains("ladder")) s.ladder = j.at("ladder").get<std::vector<long>>();
  if (j.contains("tolerances")) s.tolerances = j.at("tolerances").get<std::vector<double>>();
  if (j.contains("reference")) {
    const auto r = j.at("reference").get<std::string>();
    if (r == "auto") {
      s.reference = ReferencePolicy::Auto;
    } else if (r == "oracle") {
      s.reference = ReferencePolicy::Oracle;
    } else if (r == "finest") {
      s.reference = ReferencePolicy::Finest;
    } else {
      throw InvalidInput("study: reference must be auto, oracle or finest");
    }
  }
  s.reference_tol = j.value("reference_tol", s.reference_tol);
  s.oracle_steps = j.value("oracle_steps", s.oracle_steps);
  s.window_lo = j.value("window_lo", s.window_lo);
  s.window_hi = j.value("window_hi", s.window_hi);
  s.epus = j.value("epus", s.epus);
  if (j.contains("h1")) s.h1 = j.at("h1").get<double>();
  s.refinement_substeps = j.value("refinement_substeps", s.refinement_substeps);
}

struct LoadedProblem {
  ProblemData problem;
  std::optional<DenseProblem> dense;
  std::string description;
};

inline LoadedProblem load_problem(const RunConfig& cfg) {
  LoadedProblem out;
  if (cfg.problem.dir) {
    out.problem = io::ingest_problem_dir(*cfg.problem.dir, cfg.problem.T);
    out.description = "ingested from " + cfg.problem.dir->string();
  } else {
    GeneratorParams g = cfg.problem.generator;
    g.seed = cfg.seed;
    if (cfg.problem.T) g.T = *cfg.problem.T;
    auto gen = generate_problem(g);
    out.problem = std::move(gen.problem);
    out.description = to_string(g.kind) + " N=" + std::to_string(g.n) + " rank=" + std::to_string(g.rank) +
                      " seed=" + std::to_string(g.seed);
  }
  if (out.problem.dim() <= kMaxOracleDim) out.dense = densify(out.problem);
  std::ostringstream t;
  t << std::setprecision(17) << out.problem.T;
  out.description += " T=" + t.str();
  return out;
}

// Reference solution P(T): either a dense matrix or a factor.
struct Reference {
  std::string method;
  std::optional<Matrix> dense;
  std::optional<LDLTFactor> factor;
  double self_difference = std::numeric_limits<double>::quiet_NaN();
  bool verified = false;

  double relative_error(const LDLTFactor& P) const {
    if (dense) return lrdre::relative_error(to_dense(P, kMaxOracleDim), *dense);
    const double denom = frob_norm(*factor);
    if (!(denom > 0.0)) throw InvalidReference("reference has zero norm");
    CompressionOptions exact;
    exact.rel_tol = 0.0;
    return frob_norm(combine({{1.0, P}, {-1.0, *factor}}, exact)) / denom;
  }
};

// Dense RK4 with the step count doubled until two successive solutions agree to tol.
inline Reference oracle_reference(const DenseProblem& p, long start_steps, double tol, long max_steps = 1L << 18) {
  Reference ref;
  long n = start_steps;
  Matrix coarse = dense_dre_reference(p, n);
  while (true) {
    n *= 2;
    Matrix fine = dense_dre_reference(p, n);
    const double denom = fine.norm();
    ref.self_difference = denom > 0.0 ? (fine - coarse).norm() / denom : (fine - coarse).norm();
    if (ref.self_difference <= tol || n >= max_steps) {
      ref.verified = ref.self_difference <= tol;
      ref.dense = std::move(fine);
      ref.method = "dense RK4, " + std::to_string(n) + " steps";
      return ref;
    }
    coarse = std::move(fine);
  }
}

inline Reference finest_reference(const ProblemData& p, const StudySpec& study, const RunConfig& cfg) {
  SchemeSpec best = study.schemes.front();
  for (const auto& s : study.schemes)
    if (s.convergence_order() > best.convergence_order()) best = s;
  long n = 1;
  for (long m : study.ladder) n = std::max(n, m);
  n *= 2;
  DriverOptions opts;
  opts.solver = cfg.solver_options(best);
  Reference ref;
  ref.factor = integrate_fixed(p, best, n, opts).final_state;
  ref.method = best.name() + ", " + std::to_string(n) + " steps";
  return ref;
}

inline Reference make_reference(const LoadedProblem& lp, const StudySpec& study, const RunConfig& cfg) {
  const bool oracle = study.reference == ReferencePolicy::Oracle ||
                      (study.reference == ReferencePolicy::Auto && lp.dense.has_value());
  if (oracle) {
    if (!lp.dense) throw RefusedDense("oracle reference needs N <= " + std::to_string(kMaxOracleDim));
    return oracle_reference(*lp.dense, study.oracle_steps, study.reference_tol);
  }
  if (study.ladder.empty()) throw InvalidInput("study: the finest-scheme reference needs a step ladder");
  return finest_reference(lp.problem, study, cfg);
}

struct RunRow {
  std::string scheme;
  bool adaptive = false;
  long n = 0;
  double tol = 0.0;
  double h = 0.0;
  long steps = 0;
  long rejected = 0;
  double rel_error = std::numeric_limits<double>::quiet_NaN();
  Index max_rank = 0;
  long fresh_blocks = 0;
  std::string status = "ok";
  double wallclock = 0.0;
};

struct SlopeRow {
  std::string scheme;
  double slope = std::numeric_limits<double>::quiet_NaN();
  int points = 0;
  double min_error = std::numeric_limits<double>::quiet_NaN();
  double max_error = std::numeric_limits<double>::quiet_NaN();
};

struct StepRow {
  std::string scheme;
  double tol = 0.0;
  long index = 0;
  StepRecord record;
  double e_actual = std::numeric_limits<double>::quiet_NaN();
};

struct StudyReport {
  StudyKind kind = StudyKind::Order;
  std::string problem;
  std::string reference;
  double reference_self_difference = std::numeric_limits<double>::quiet_NaN();
  bool reference_verified = false;
  std::vector<RunRow> runs;
  std::vector<SlopeRow> slopes;
  std::vector<StepRow> steps;
};

// Least-squares slope of log(error) on log(h) over rows with errors inside the window.
inline SlopeRow fit_slope(const std::string& scheme, const std::vector<RunRow>& rows, double lo, double hi) {
  SlopeRow s;
  s.scheme = scheme;
  std::vector<double> x, y;
  for (const auto& r : rows) {
    if (r.scheme != scheme || r.adaptive || r.status != "ok") continue;
    if (!(r.rel_error >= lo && r.rel_error <= hi)) continue;
    x.push_back(std::log(r.h));
    y.push_back(std::log(r.rel_error));
    s.min_error = std::isnan(s.min_error) ? r.rel_error : std::min(s.min_error, r.rel_error);
    s.max_error = std::isnan(s.max_error) ? r.rel_error : std::max(s.max_error, r.rel_error);
  }
  s.points = static_cast<int>(x.size());
  if (x.size() < 2) return s;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  s.slope = sxy / sxx;
  return s;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

// Message of an exception and of any nested ones.
inline std::string describe(const std::exception& e) {
  std::string msg = e.what();
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    msg += ": " + describe(inner);
  } catch (...) {
  }
  return msg;
}

inline void summarize(RunRow& row, const Trajectory& traj) {
  row.steps = static_cast<long>(traj.steps.size());
  row.rejected = static_cast<long>(traj.rejected.size());
  for (const auto& s : traj.steps) {
    row.max_rank = std::max(row.max_rank, s.rank);
    // Accepted records include the blocks computed for the rejected attempts before them.
    row.fresh_blocks += s.fresh_quad_blocks;
  }
}

}  // namespace detail

inline RunRow run_fixed(const ProblemData& p, const SchemeSpec& spec, long n, const RunConfig& cfg,
                        const Reference& ref) {
  RunRow row;
  row.scheme = spec.name();
  row.n = n;
  row.h = p.T / static_cast<double>(n);
  DriverOptions opts;
  opts.solver = cfg.solver_options(spec);
  try {
    const auto start = std::chrono::steady_clock::now();
    const Trajectory traj = integrate_fixed(p, spec, n, opts);
    row.wallclock = detail::seconds_since(start);
    detail::summarize(row, traj);
    row.rel_error = ref.relative_error(traj.final_state);
  } catch (const std::exception& e) {
    row.status = detail::one_line(detail::describe(e));
  }
  return row;
}

// Error of each accepted step against the same scheme over `substeps` equal substeps.
inline std::vector<double> refined_step_errors(const ProblemData& p, const SchemeSpec& spec, const Trajectory& traj,
                                               const SolverOptions& solver, int substeps) {
  std::vector<double> out;
  LDLTFactor start = p.P0;
  double t0 = 0.0;
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    ProblemData local = p;
    local.P0 = start;
    local.T = traj.steps[i].t - t0;
    DriverOptions opts;
    opts.solver = solver;
    const LDLTFactor fine = integrate_fixed(local, spec, substeps, opts).final_state;
    CompressionOptions exact;
    exact.rel_tol = 0.0;
    out.push_back(frob_norm(combine({{1.0, traj.factors[i]}, {-1.0, fine}}, exact)));
    start = traj.factors[i];
    t0 = traj.steps[i].t;
  }
  return out;
}

inline RunRow run_adaptive(const ProblemData& p, const SchemeSpec& spec, double tol, const StudySpec& study,
                           const RunConfig& cfg, const Reference* ref, std::vector<StepRow>* step_rows) {
  RunRow row;
  row.scheme = spec.name();
  row.adaptive = true;
  row.tol = tol;
  ControllerParams c;
  c.tol = tol;
  c.epus = study.epus;
  DriverOptions opts;
  opts.solver = cfg.solver_options(spec);
  opts.store_all = step_rows != nullptr;
  try {
    const double h1 = study.h1 ? *study.h1 : p.T / 100.0;
    const auto start = std::chrono::steady_clock::now();
    const Trajectory traj = integrate_adaptive(p, spec, h1, c, opts);
    row.wallclock = detail::seconds_since(start);
    detail::summarize(row, traj);
    row.h = p.T / static_cast<double>(traj.steps.size());
    if (ref) row.rel_error = ref->relative_error(traj.final_state);
    if (step_rows) {
      const auto actual = refined_step_errors(p, spec, traj, opts.solver, study.refinement_substeps);
      for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        step_rows->push_back({spec.name(), tol, static_cast<long>(i), traj.steps[i], actual[i]});
      }
    }
  } catch (const std::exception& e) {
    row.status = detail::one_line(detail::describe(e));
  }
  return row;
}

inline StudyReport run_study(const LoadedProblem& lp, const StudySpec& study, const RunConfig& cfg) {
  study.validate();
  StudyReport rep;
  rep.kind = study.kind;
  rep.problem = lp.description;

  std::optional<Reference> ref;
  if (study.kind != StudyKind::Adaptivity || lp.dense) {
    ref = make_reference(lp, study, cfg);
    rep.reference = ref->method;
    rep.reference_self_difference = ref->self_difference;
    rep.reference_verified = ref->verified || ref->factor.has_value();
  }

  if (study.kind != StudyKind::Adaptivity) {
    for (const auto& spec : study.schemes)
      for (long n : study.ladder) rep.runs.push_back(run_fixed(lp.problem, spec, n, cfg, *ref));
    for (const auto& spec : study.schemes) {
      rep.slopes.push_back(fit_slope(spec.name(), rep.runs, study.window_lo, study.window_hi));
    }
  }
  if (study.kind != StudyKind::Order) {
    const bool per_step = study.kind == StudyKind::Adaptivity;
    for (const auto& spec : study.schemes) {
      if (!spec.has_embedded()) continue;
      for (double tol : study.tolerances) {
        rep.runs.push_back(run_adaptive(lp.problem, spec, tol, study, cfg, ref ? &*ref : nullptr,
                                        per_step ? &rep.steps : nullptr));
      }
    }
  }
  return rep;
}

namespace detail {

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return s.str();
}

}  // namespace detail

inline void write_runs_csv(std::ostream& out, const std::vector<RunRow>& rows) {
  out << "scheme,mode,n,tol,h,steps,rejected,rel_error,max_rank,fresh_blocks,status,wallclock_s\n";
  for (const auto& r : rows) {
    out << r.scheme << ',' << (r.adaptive ? "adaptive" : "fixed") << ',' << (r.adaptive ? "" : std::to_string(r.n))
        << ',' << (r.adaptive ? detail::num(r.tol) : "") << ',' << detail::num(r.h) << ',' << r.steps << ','
        << r.rejected << ',' << detail::num(r.rel_error) << ',' << r.max_rank << ',' << r.fresh_blocks << ','
        << r.status << ',' << detail::num(r.wallclock) << '\n';
  }
}

inline void write_slopes_csv(std::ostream& out, const std::vector<SlopeRow>& rows) {
  out << "scheme,slope,points,min_error,max_error\n";
  for (const auto& s : rows) {
    out << s.scheme << ',' << detail::num(s.slope) << ',' << s.points << ',' << detail::num(s.min_error) << ','
        << detail::num(s.max_error) << '\n';
  }
}

inline void write_steps_csv(std::ostream& out, const std::vector<StepRow>& rows) {
  out << "scheme,tol,step,t,h,err_est,err_control,e_actual,rank,rejections,fresh_blocks,min_core_eigenvalue\n";
  for (const auto& s : rows) {
    const auto& r = s.record;
    out << s.scheme << ',' << detail::num(s.tol) << ',' << s.index << ',' << detail::num(r.t) << ','
        << detail::num(r.h) << ',' << detail::num(r.err_est) << ',' << detail::num(r.err_control) << ','
        << detail::num(s.e_actual) << ',' << r.rank << ',' << r.rejections << ',' << r.fresh_quad_blocks << ','
        << detail::num(r.min_core_eigenvalue) << '\n';
  }
}

inline void write_summary(std::ostream& out, const StudyReport& rep) {
  out << "study: " << to_string(rep.kind) << '\n' << "problem: " << rep.problem << '\n';
  if (!rep.reference.empty()) {
    out << "reference: " << rep.reference;
    if (!std::isnan(rep.reference_self_difference)) {
      out << " (self-difference " << std::setprecision(3) << std::scientific << rep.reference_self_difference
          << std::defaultfloat << (rep.reference_verified ? "" : ", NOT verified") << ')';
    }
    out << '\n';
  }
  if (!rep.slopes.empty()) {
    out << "\nfitted orders\n";
    for (const auto& s : rep.slopes) {
      out << "  " << std::left << std::setw(8) << s.scheme << std::right;
      if (std::isnan(s.slope)) {
        out << "  n/a (" << s.points << " points in window)\n";
      } else {
        out << std::fixed << std::setprecision(2) << std::setw(6) << s.slope << std::defaultfloat << "  ("
            << s.points << " points)\n";
      }
    }
  }
  long failed = 0;
  for (const auto& r : rep.runs) failed += r.status != "ok";
  out << "\nruns: " << rep.runs.size() << ", failed: " << failed << '\n';
  for (const auto& r : rep.runs) {
    if (r.status == "ok") continue;
    out << "  " << r.scheme << ' ' << (r.adaptive ? "tol=" + detail::num(r.tol) : "n=" + std::to_string(r.n)) << ": "
        << r.status << '\n';
  }
  if (!rep.steps.empty()) {
    long covered = 0;
    for (const auto& s : rep.steps) covered += s.e_actual <= s.record.err_est;
    out << "accepted steps: " << rep.steps.size() << ", actual error <= estimate on " << covered << '\n';
  }
}

inline void write_report(const std::filesystem::path& dir, const StudyReport& rep) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("results.csv");
    write_runs_csv(f, rep.runs);
  }
  if (!rep.slopes.empty()) {
    auto f = open("slopes.csv");
    write_slopes_csv(f, rep.slopes);
  }
  if (!rep.steps.empty()) {
    auto f = open("steps.csv");
    write_steps_csv(f, rep.steps);
  }
  auto f = open("summary.txt");
  write_summary(f, rep);
}

}  // namespace lrdre
