#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vmspec/characteristics.hpp"
#include "vmspec/discretization.hpp"
#include "vmspec/equilibrium.hpp"

namespace vmspec {

using PhaseFunction = std::function<double(const PhasePoint&)>;

// Weights w_q with Q k = sum_q w_q k(s_q), s_q = -q T / n, for k periodic in s with
// period T. Exact for trigonometric polynomials of degree < n/2. lambda = 0 gives
// the plain orbit average.
Eigen::VectorXd periodic_smoothing_weights(double lambda, double period, int n);

struct SmoothingOptions {
  int n_s = 64;             // samples per orbit period
  int n_gl = 128;           // Gauss-Legendre nodes on [-S, 0] (fallback / reference)
  double tol_tail_s = 1e-10;
  bool periodic = true;     // false: always integrate on [-S, 0]
  StepOptions step;
};

struct SmoothingEvaluator {
  const EquilibriumState* state = nullptr;
  double lambda = 1.0;
  double S = 0.0;  // e^{-lambda S} = tol_tail_s
  SmoothingOptions opts;
};

SmoothingEvaluator make_smoothing_evaluator(const EquilibriumState& state, double lambda,
                                            const SmoothingOptions& opts = {});

double apply_smoothing(const SmoothingEvaluator& eval, int sigma, const PhaseFunction& k, const PhasePoint& point);

struct ProjectionEvaluator {
  const EquilibriumState* state = nullptr;
  int n_s = 64;
  double T_avg = 1e4;  // long-time fallback horizon for unresolved orbits
  StepOptions step;
};

ProjectionEvaluator make_projection_evaluator(const EquilibriumState& state, int n_s = 64,
                                              const StepOptions& step = {});

double apply_projection(const ProjectionEvaluator& eval, int sigma, const PhaseFunction& k, const PhasePoint& point);

// Q applied at one (x_i, v_j) node to every full-basis function e_a, to vhat2 e_a, and to vhat1.
struct NodeResponse {
  Eigen::VectorXd Qe, Qv2e;
  double Qv1 = 0.0;
};

struct AssemblyOptions {
  SmoothingOptions smoothing;
  double tol_sym = 1e-6;   // relative symmetry defect that aborts assembly
  int jobs = 1;
  bool force_generic = false;  // orbit-based path even for homogeneous states
};

struct OrbitCacheStats {
  long passing = 0, trapped = 0, stationary = 0, unresolved = 0;
  double max_drift = 0.0;
  double max_closure = 0.0;
};

struct OperatorBlocks {
  double lambda = 0.0;
  int n_modes = 0;
  double period = 0.0;
  Eigen::MatrixXd A1;     // mean-zero basis, n_modes x n_modes
  Eigen::MatrixXd A2;     // full basis
  Eigen::MatrixXd B;      // mean-zero rows x full columns
  Eigen::MatrixXd Bstar;  // independently assembled adjoint, full rows x mean-zero columns
  Eigen::VectorXd C;      // mean-zero
  Eigen::VectorXd D;      // full
  double l = 0.0;

  double sym_defect_A1 = 0.0, sym_defect_A2 = 0.0;
  double adjoint_defect = 0.0;    // max |B - Bstar^T|
  double constant_residual = 0.0; // |A1 applied to the constant function|
  double vanishing_moment = 0.0;  // max_x |sum int (mu_p + vhat2 mu_e) dv|
  double parity_moment = 0.0;     // max_x |sum int vhat1 mu_e dv| + |sum int vhat1 mu_p dv|
};

class BlockAssembler {
 public:
  BlockAssembler(const EquilibriumState& state, const FourierBasis& basis, const VelocityQuadrature& quad,
                 const AssemblyOptions& opts = {});
  ~BlockAssembler();
  BlockAssembler(const BlockAssembler&) = delete;
  BlockAssembler& operator=(const BlockAssembler&) = delete;

  OperatorBlocks assemble(double lambda) const;

  void response(double lambda, int sigma, int i, int j, NodeResponse& out) const;

  const EquilibriumState& state() const { return state_; }
  const FourierBasis& basis() const { return full_; }      // full basis on the collocation grid
  const FourierBasis& basis0() const { return mean_zero_; }
  const VelocityQuadrature& quad() const { return quad_; }
  const AssemblyOptions& options() const { return opts_; }
  bool fast_path() const { return fast_; }
  OrbitCacheStats cache_stats() const;

  // Equilibrium data at (x_i, v_j) for species sigma.
  double mu(int sigma, int i, int j) const;
  double mu_e(int sigma, int i, int j) const;
  double mu_p(int sigma, int i, int j) const;
  double B0(int i) const { return B0_(i); }

 private:
  OperatorBlocks assemble_generic(double lambda) const;
  OperatorBlocks assemble_homogeneous(double lambda) const;
  void finish(OperatorBlocks& blk, const Eigen::MatrixXd& A1_full, const Eigen::MatrixXd& B_full,
              const Eigen::MatrixXd& Bstar_full, const Eigen::VectorXd& C_full) const;
  Eigen::Index table_index(int sigma, int i, int j) const;

  EquilibriumState state_;
  FourierBasis full_, mean_zero_;
  VelocityQuadrature quad_;
  AssemblyOptions opts_;
  bool fast_ = false;
  Eigen::VectorXd B0_;
  std::vector<double> mu_, mu_e_, mu_p_;

  struct Cache;
  std::unique_ptr<Cache> cache_;
};

OperatorBlocks assemble_blocks(const EquilibriumState& state, double lambda, const FourierBasis& basis,
                               const VelocityQuadrature& quad, const AssemblyOptions& opts = {});

// Eigenvectors of A1^0 (mean-zero) and A2^0 (full), ascending, used for truncation.
struct EigenContext {
  Eigen::VectorXd alpha;  // eigenvalues of A1^0
  Eigen::MatrixXd xi;
  Eigen::VectorXd beta;   // eigenvalues of A2^0
  Eigen::MatrixXd zeta;
  double l0 = 0.0;
  double period = 0.0;
};

// Truncated (2n+1) x (2n+1) matrix operator.
Eigen::MatrixXd assemble_M(const OperatorBlocks& blocks, int n, const EigenContext& ctx);

void write_blocks_csv(std::ostream& os, const OperatorBlocks& blocks);
std::string blocks_manifest_json(const OperatorBlocks& blocks, double tol_sym);

}  // namespace vmspec
