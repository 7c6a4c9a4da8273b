#pragma once

// Run configuration: a single JSON document, optionally overridden field by
// field from the command line.
//
// {
//   "problem":  {"dir": "path"} or {"kind": "random_lowrank", "n": 10, "rank": 4, "T": 1.0},
//   "scheme":   {"kind": "sym", "stages": 2, "order": "FG"},
//   "steps": 64  or  "adaptive": {"tol": 1e-6, "h1": 0.01, "epus": false},
//   "exp_tol": 1e-10, "comp_tol": 1e-12, "quad_degree": "auto" | "stages" | 5,
//   "quad_rule": "incremental" | "gauss", "threads": 1, "seed": 1,
//   "store": "final" | "all", "out": "out"
// }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "lrdre/error.hpp"
#include "lrdre/generate.hpp"
#include "lrdre/schemes.hpp"

namespace lrdre {

struct ProblemSource {
  std::optional<std::filesystem::path> dir;
  GeneratorParams generator;      // used when dir is unset
  std::optional<double> T;        // overrides the stored or generated final time
};

struct AdaptiveSettings {
  double tol = 1e-6;
  std::optional<double> h1;  // unset: T / 100
  bool epus = false;
};

enum class QuadDegreePolicy {
  SchemeOrder,  // p + 1
  Stages,       // s + 1
  Fixed,
};

struct RunConfig {
  ProblemSource problem;
  SchemeSpec scheme{SchemeKind::SymmetricAdditive, 2, OperatorOrder::FG};
  std::optional<long> n_steps;
  std::optional<AdaptiveSettings> adaptive;
  double exp_tol = 1e-10;
  std::optional<double> comp_tol;
  QuadDegreePolicy quad_policy = QuadDegreePolicy::SchemeOrder;
  int quad_degree = 0;  // QuadDegreePolicy::Fixed only
  QuadratureRule quad_rule = QuadratureRule::Incremental;
  int threads = 1;
  std::uint64_t seed = 1;
  bool store_all = false;
  std::filesystem::path out = "out";

  void validate() const {
    scheme.validate();
    if (n_steps.has_value() == adaptive.has_value()) {
      throw InvalidInput("config: select exactly one of a fixed step count and adaptive stepping");
    }
    if (n_steps && *n_steps < 1) throw InvalidInput("config: steps must be >= 1");
    if (adaptive) {
      if (!(adaptive->tol > 0.0)) throw InvalidInput("config: tol must be > 0");
      if (adaptive->h1 && !(*adaptive->h1 > 0.0)) throw InvalidInput("config: h1 must be > 0");
    }
    if (!(exp_tol > 0.0)) throw InvalidInput("config: exp_tol must be > 0");
    if (comp_tol && !(*comp_tol > 0.0)) throw InvalidInput("config: comp_tol must be > 0");
    if (quad_policy == QuadDegreePolicy::Fixed && quad_degree < 1) throw InvalidInput("config: quad_degree must be >= 1");
    if (threads < 1) throw InvalidInput("config: threads must be >= 1");
  }

  // Solver options for `spec` (the configured scheme unless a study overrides it).
  SolverOptions solver_options(const SchemeSpec& spec) const {
    SolverOptions o;
    o.exp.rel_tol = exp_tol;
    o.comp.rel_tol = comp_tol;
    o.quad_rule = quad_rule;
    o.threads = threads;
    switch (quad_policy) {
      case QuadDegreePolicy::SchemeOrder: o.quad_degree = spec.convergence_order() + 1; break;
      case QuadDegreePolicy::Stages: o.quad_degree = spec.stages + 1; break;
      case QuadDegreePolicy::Fixed: o.quad_degree = quad_degree; break;
    }
    return o;
  }
  SolverOptions solver_options() const { return solver_options(scheme); }
};

// "lie", "strang", "asym", "sym" with a separate stage count, or a combined
// name such as "sym3" or "asym2".
inline SchemeSpec parse_scheme(const std::string& name, std::optional<int> stages = std::nullopt) {
  std::string kind = name;
  int s = stages.value_or(1);
  const auto digits = name.find_first_of("0123456789");
  if (digits != std::string::npos) {
    kind = name.substr(0, digits);
    try {
      std::size_t used = 0;
      s = std::stoi(name.substr(digits), &used);
      if (digits + used != name.size()) throw InvalidInput("");
    } catch (const std::exception&) {
      throw InvalidInput("unknown scheme '" + name + "'");
    }
  }
  SchemeSpec spec;
  spec.stages = s;
  if (kind == "lie") {
    spec.kind = SchemeKind::Lie;
    spec.stages = 1;
  } else if (kind == "strang") {
    spec.kind = SchemeKind::Strang;
    spec.stages = 1;
  } else if (kind == "asym") {
    spec.kind = SchemeKind::AsymmetricAdditive;
  } else if (kind == "sym") {
    spec.kind = SchemeKind::SymmetricAdditive;
  } else {
    throw InvalidInput("unknown scheme '" + name + "' (expected lie, strang, asym or sym)");
  }
  spec.validate();
  return spec;
}

inline OperatorOrder parse_operator_order(const std::string& s) {
  if (s == "FG" || s == "fg") return OperatorOrder::FG;
  if (s == "GF" || s == "gf") return OperatorOrder::GF;
  throw InvalidInput("operator order must be FG or GF, got '" + s + "'");
}

inline void set_quad_degree(RunConfig& cfg, const std::string& value) {
  if (value == "auto") {
    cfg.quad_policy = QuadDegreePolicy::SchemeOrder;
  } else if (value == "stages") {
    cfg.quad_policy = QuadDegreePolicy::Stages;
  } else {
    try {
      std::size_t used = 0;
      cfg.quad_degree = std::stoi(value, &used);
      if (used != value.size()) throw InvalidInput("");
    } catch (const std::exception&) {
      throw InvalidInput("quad_degree must be 'auto', 'stages' or an integer, got '" + value + "'");
    }
    cfg.quad_policy = QuadDegreePolicy::Fixed;
  }
}

inline void apply_json(RunConfig& cfg, const nlohmann::json& j) {
  using nlohmann::json;
  if (j.contains("problem")) {
    const json& p = j.at("problem");
    if (p.contains("dir")) cfg.problem.dir = p.at("dir").get<std::string>();
    if (p.contains("kind")) {
      const auto kind = parse_problem_kind(p.at("kind").get<std::string>());
      if (!kind) throw InvalidInput("config: unknown problem kind " + p.at("kind").dump());
      cfg.problem.generator.kind = *kind;
    }
    auto& g = cfg.problem.generator;
    g.n = p.value("n", g.n);
    g.rank = p.value("rank", g.rank);
    g.dims = p.value("dims", g.dims);
    g.diffusion = p.value("diffusion", g.diffusion);
    if (p.contains("T")) cfg.problem.T = p.at("T").get<double>();
  }
  if (j.contains("scheme")) {
    const json& s = j.at("scheme");
    std::optional<int> stages;
    if (s.contains("stages")) stages = s.at("stages").get<int>();
    cfg.scheme = parse_scheme(s.value("kind", std::string("sym")), stages);
    if (s.contains("order")) cfg.scheme.order = parse_operator_order(s.at("order").get<std::string>());
  }
  if (j.contains("steps")) {
    cfg.n_steps = j.at("steps").get<long>();
    cfg.adaptive.reset();
  }
  if (j.contains("adaptive")) {
    const json& a = j.at("adaptive");
    AdaptiveSettings s;
    s.tol = a.value("tol", s.tol);
    if (a.contains("h1")) s.h1 = a.at("h1").get<double>();
    s.epus = a.value("epus", false);
    cfg.adaptive = s;
    cfg.n_steps.reset();
  }
  cfg.exp_tol = j.value("exp_tol", cfg.exp_tol);
  if (j.contains("comp_tol")) cfg.comp_tol = j.at("comp_tol").get<double>();
  if (j.contains("quad_degree")) {
    const json& q = j.at("quad_degree");
    set_quad_degree(cfg, q.is_string() ? q.get<std::string>() : std::to_string(q.get<int>()));
  }
  if (j.contains("quad_rule")) {
    const auto r = j.at("quad_rule").get<std::string>();
    if (r == "incremental") {
      cfg.quad_rule = QuadratureRule::Incremental;
    } else if (r == "gauss") {
      cfg.quad_rule = QuadratureRule::Gauss;
    } else {
      throw InvalidInput("config: quad_rule must be incremental or gauss");
    }
  }
  cfg.threads = j.value("threads", cfg.threads);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("store")) cfg.store_all = j.at("store").get<std::string>() == "all";
  if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path.string(), 0, "cannot open file");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(path.string(), 0, e.what());
  }
}

inline nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j;
  if (cfg.problem.dir) {
    j["problem"]["dir"] = cfg.problem.dir->string();
  } else {
    const auto& g = cfg.problem.generator;
    j["problem"] = {{"kind", to_string(g.kind)}, {"n", g.n}, {"rank", g.rank}};
    if (g.kind == ProblemKind::LaplacianLQR) {
      j["problem"]["dims"] = g.dims;
      j["problem"]["diffusion"] = g.diffusion;
    }
  }
  if (cfg.problem.T) j["problem"]["T"] = *cfg.problem.T;
  const auto kind_name = [](SchemeKind k) {
    switch (k) {
      case SchemeKind::Lie: return "lie";
      case SchemeKind::Strang: return "strang";
      case SchemeKind::AsymmetricAdditive: return "asym";
      case SchemeKind::SymmetricAdditive: return "sym";
    }
    return "?";
  };
  j["scheme"] = {{"kind", kind_name(cfg.scheme.kind)},
                 {"stages", cfg.scheme.stages},
                 {"order", cfg.scheme.order == OperatorOrder::FG ? "FG" : "GF"}};
  if (cfg.n_steps) j["steps"] = *cfg.n_steps;
  if (cfg.adaptive) {
    j["adaptive"] = {{"tol", cfg.adaptive->tol}, {"epus", cfg.adaptive->epus}};
    if (cfg.adaptive->h1) j["adaptive"]["h1"] = *cfg.adaptive->h1;
  }
  j["exp_tol"] = cfg.exp_tol;
  if (cfg.comp_tol) j["comp_tol"] = *cfg.comp_tol;
  switch (cfg.quad_policy) {
    case QuadDegreePolicy::SchemeOrder: j["quad_degree"] = "auto"; break;
    case QuadDegreePolicy::Stages: j["quad_degree"] = "stages"; break;
    case QuadDegreePolicy::Fixed: j["quad_degree"] = cfg.quad_degree; break;
  }
  j["quad_rule"] = cfg.quad_rule == QuadratureRule::Gauss ? "gauss" : "incremental";
  j["threads"] = cfg.threads;
  j["seed"] = cfg.seed;
  j["store"] = cfg.store_all ? "all" : "final";
  j["out"] = cfg.out.string();
  return j;
}

}  // namespace lrdre
