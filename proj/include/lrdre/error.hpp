#pragma once

#include <stdexcept>
#include <string>

namespace lrdre {

// Base of every error the library raises. `what()` carries the detail.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: dimension mismatch, bad option values.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A dense N x N matrix was requested above the configured size guard.
class RefusedDense : public Error {
 public:
  using Error::Error;
};

// Quadrature nodes too close together for a usable moment system.
class InvalidNodes : public Error {
 public:
  using Error::Error;
};

// (I + h D L^T S L) is numerically singular; the step exceeds 1/rho(D L^T S L).
class StepTooLarge : public Error {
 public:
  using Error::Error;
};

// Requested a lower-order embedded method from a single-stage scheme.
class NoEmbeddedMethod : public Error {
 public:
  using Error::Error;
};

class OracleDiverged : public Error {
 public:
  using Error::Error;
};

class InvalidReference : public Error {
 public:
  using Error::Error;
};

// Problem data could not be read. `file` and `line` locate the offending entry
// (line 0 when not applicable).
class IngestionError : public Error {
 public:
  IngestionError(std::string file, long line, const std::string& msg)
      : Error(file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  long line() const noexcept { return line_; }

 private:
  std::string file_;
  long line_;
};

}  // namespace lrdre
