#pragma once

#include <stdexcept>
#include <string>

namespace vmspec {

enum class ErrorKind {
  Config,
  ProfileEvaluation,
  NonIntegrableWeight,
  QuadratureFailure,
  NotACenter,
  ConservationFailure,
  OrbitNotResolved,
  AssemblyInconsistency,
  Size,
  NonConvergence,
  HypothesisFailure,
  DegenerateKernel,
  SpuriousInterval,
  NoCrossing,
  GoldenMismatch,
};

const char* to_string(ErrorKind kind);

// CLI exit code for an error of this kind.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, double value = 0.0)
      : std::runtime_error(what), kind_(kind), value_(value) {}

  ErrorKind kind() const { return kind_; }
  // Offending magnitude where meaningful (drift, defect, lambda).
  double value() const { return value_; }

 private:
  ErrorKind kind_;
  double value_;
};

}  // namespace vmspec
