#include "vmspec/error.hpp"

namespace vmspec {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config error";
    case ErrorKind::ProfileEvaluation: return "profile evaluation failure";
    case ErrorKind::NonIntegrableWeight: return "non-integrable weight";
    case ErrorKind::QuadratureFailure: return "quadrature failure";
    case ErrorKind::NotACenter: return "not a center at this amplitude";
    case ErrorKind::ConservationFailure: return "conservation failure";
    case ErrorKind::OrbitNotResolved: return "orbit not resolved";
    case ErrorKind::AssemblyInconsistency: return "assembly inconsistency";
    case ErrorKind::Size: return "size error";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::HypothesisFailure: return "hypothesis failure";
    case ErrorKind::DegenerateKernel: return "degenerate A1 kernel";
    case ErrorKind::SpuriousInterval: return "spurious interval";
    case ErrorKind::NoCrossing: return "no crossing";
    case ErrorKind::GoldenMismatch: return "golden mismatch";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::GoldenMismatch: return 4;
    default: return 3;
  }
}

}  // namespace vmspec
