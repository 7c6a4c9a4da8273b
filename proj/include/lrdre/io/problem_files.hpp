#pragma once

// Problem directories: A, B, C (required), R_x, R_u_inv, P0_L, P0_D (optional)
// as <name>.mtx, plus problem.json holding the final time T.
//
//   Q = C^T R_x C,  S = B R_u^{-1} B^T,  P0 = P0_L P0_D P0_L^T

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "lrdre/error.hpp"
#include "lrdre/generate.hpp"
#include "lrdre/io/matrix_market.hpp"
#include "lrdre/problem.hpp"

namespace lrdre::io {

namespace fs = std::filesystem;

struct ProblemPaths {
  fs::path A, B, C;
  std::optional<fs::path> R_x, R_u_inv, P0_L, P0_D;
};

inline ProblemPaths problem_paths(const fs::path& dir) {
  ProblemPaths p{dir / "A.mtx", dir / "B.mtx", dir / "C.mtx", {}, {}, {}, {}};
  const auto opt = [&](const char* name) -> std::optional<fs::path> {
    const fs::path f = dir / name;
    return fs::exists(f) ? std::optional<fs::path>(f) : std::nullopt;
  };
  p.R_x = opt("R_x.mtx");
  p.R_u_inv = opt("R_u_inv.mtx");
  p.P0_L = opt("P0_L.mtx");
  p.P0_D = opt("P0_D.mtx");
  return p;
}

namespace detail {

inline void expect_shape(const fs::path& f, const Matrix& M, Index rows, Index cols) {
  if (M.rows() != rows || M.cols() != cols) {
    throw IngestionError(f.string(), 0, "expected a " + std::to_string(rows) + "x" + std::to_string(cols) +
                                            " matrix, found " + std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
  }
}

}  // namespace detail

inline LQRData ingest_lqr(const ProblemPaths& paths, double T) {
  LQRData d;
  d.T = T;
  const MMMatrix A = read_matrix_market(paths.A);
  if (A.rows() != A.cols()) throw IngestionError(paths.A.string(), 0, "A must be square");
  const Index n = A.rows();
  d.A = A.format == MMFormat::Coordinate ? StiffOperator(A.sparse) : StiffOperator(A.dense);

  d.B = read_matrix_market(paths.B).to_dense();
  if (d.B.rows() != n) detail::expect_shape(paths.B, d.B, n, d.B.cols());
  d.C = read_matrix_market(paths.C).to_dense();
  if (d.C.cols() != n) detail::expect_shape(paths.C, d.C, d.C.rows(), n);

  const Index mb = d.B.cols(), mc = d.C.rows();
  d.R_x = Matrix::Identity(mc, mc);
  if (paths.R_x) {
    d.R_x = read_matrix_market(*paths.R_x).to_dense();
    detail::expect_shape(*paths.R_x, d.R_x, mc, mc);
  }
  d.R_u_inv = Matrix::Identity(mb, mb);
  if (paths.R_u_inv) {
    d.R_u_inv = read_matrix_market(*paths.R_u_inv).to_dense();
    detail::expect_shape(*paths.R_u_inv, d.R_u_inv, mb, mb);
  }
  if (paths.P0_L) {
    d.P0_L = read_matrix_market(*paths.P0_L).to_dense();
    detail::expect_shape(*paths.P0_L, d.P0_L, n, d.P0_L.cols());
    const Index r = d.P0_L.cols();
    d.P0_D = Matrix::Identity(r, r);
    if (paths.P0_D) {
      d.P0_D = read_matrix_market(*paths.P0_D).to_dense();
      detail::expect_shape(*paths.P0_D, d.P0_D, r, r);
    }
  } else {
    if (paths.P0_D) throw IngestionError(paths.P0_D->string(), 0, "P0_D given without P0_L");
    d.P0_L = Matrix(n, 0);
    d.P0_D = Matrix(0, 0);
  }
  return d;
}

// Reads the operators and checks the positive semi-definiteness requirements.
inline ProblemData ingest_problem(const ProblemPaths& paths, double T) {
  const LQRData d = ingest_lqr(paths, T);
  try {
    return to_problem(d);
  } catch (const InvalidInput& e) {
    throw IngestionError(paths.A.parent_path().string(), 0, e.what());
  }
}

inline double read_final_time(const fs::path& dir) {
  const fs::path meta = dir / "problem.json";
  if (!fs::exists(meta)) return 1.0;
  std::ifstream in(meta);
  try {
    const auto j = nlohmann::json::parse(in);
    return j.value("T", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(meta.string(), 0, e.what());
  }
}

inline ProblemData ingest_problem_dir(const fs::path& dir, std::optional<double> T = std::nullopt) {
  if (!fs::is_directory(dir)) throw IngestionError(dir.string(), 0, "not a directory");
  return ingest_problem(problem_paths(dir), T ? *T : read_final_time(dir));
}

inline void export_problem(const fs::path& dir, const LQRData& d, const nlohmann::json& meta = {}) {
  fs::create_directories(dir);
  if (d.A.is_sparse()) {
    write_coordinate(dir / "A.mtx", d.A.sparse());
  } else {
    write_array(dir / "A.mtx", d.A.dense());
  }
  write_array(dir / "B.mtx", d.B);
  write_array(dir / "C.mtx", d.C);
  write_array(dir / "R_x.mtx", d.R_x);
  write_array(dir / "R_u_inv.mtx", d.R_u_inv);
  if (d.P0_L.cols() > 0) {
    write_array(dir / "P0_L.mtx", d.P0_L);
    write_array(dir / "P0_D.mtx", d.P0_D);
  }
  nlohmann::json j = meta.is_object() ? meta : nlohmann::json::object();
  j["T"] = d.T;
  std::ofstream out(dir / "problem.json");
  out << j.dump(2) << '\n';
}

}  // namespace lrdre::io
