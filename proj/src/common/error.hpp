// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cardioreg {

/// Error categories, mapped one-to-one onto the C API status codes and the
/// CLI exit codes.
enum class ErrorKind {
  InvalidArgument,   // violated precondition
  Config,            // invalid configuration value
  Topology,          // mask is not a single annulus with one cavity
  MalformedHeader,   // unreadable / mismatched dataset sidecar
  TruncatedPayload,  // tensor file shorter than declared
  VersionMismatch,   // unsupported format_version
  MissingInput,      // file or checkpoint does not exist
  NonConvergence,    // Newton or inverse solve failed
  NonFinite,         // NaN / Inf encountered during training
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Solver failure that carries the last residual norm reached.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, double last_residual)
      : Error(ErrorKind::NonConvergence, what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::InvalidArgument, what);
}

const char* to_string(ErrorKind kind) noexcept;

}  // namespace cardioreg
