#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vmspec/operators.hpp"

namespace vmspec {

struct EigenDecomposition {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns
  double residual = 0.0;    // max_i |A v_i - lambda_i v_i|
  double orthogonality = 0.0;
};

// Ascending eigenpairs; within clusters of equal eigenvalues the basis is rebuilt
// from the coordinate vectors in index order, and every vector has its first
// nonzero coefficient positive.
EigenDecomposition symmetric_eigen(const Eigen::MatrixXd& A, double tol_sym = 1e-8);

struct CountReport {
  int neg = 0, zero = 0, pos = 0;
  double tol = 0.0;
};

CountReport count_signs(const Eigen::VectorXd& eigenvalues, double tol);

enum class Verdict { UnstableT1, UnstableT2, Inconclusive };
const char* to_string(Verdict v);

Verdict verdict(int negA1, int negA2, double l0, bool kerA2_trivial, double tol);

// neg(M^0_n) predicted from the block counts.
int predicted_count(int n, int negA1, int negA2, double l0);

// Decomposes A1^0 and A2^0. Aborts when A1^0 has a mean-zero eigenvalue within
// tol_eig_rel * |A1|_max of zero.
EigenContext make_eigen_context(const OperatorBlocks& blocks0, double tol_eig_rel = 1e-8);

using MatrixFamily = std::function<Eigen::MatrixXd(double)>;

struct SweepResult {
  Eigen::VectorXd lambdas;
  std::vector<CountReport> counts;
  Eigen::VectorXd min_abs;
  std::vector<Eigen::VectorXd> eigenvalues;
  std::vector<std::pair<int, int>> crossings;  // grid index intervals where neg changes
};

Eigen::VectorXd default_lambda_grid(double period, int count = 48, double lo = 1e-2, double hi = 1e2);

SweepResult sweep(const MatrixFamily& family, const Eigen::VectorXd& lambda_grid, double tol_eig_rel = 1e-8);

SweepResult sweep(const BlockAssembler& assembler, const EigenContext& ctx, int n,
                  const Eigen::VectorXd& lambda_grid, double tol_eig_rel = 1e-8);

struct KernelCrossing {
  double lambda_star = 0.0;
  Eigen::VectorXd u;    // kernel vector of M^{lambda*}_n
  Eigen::VectorXd phi;  // mean-zero basis coefficients
  Eigen::VectorXd psi;  // full basis coefficients
  double b = 0.0;
  double min_abs_eig = 0.0;
  int iterations = 0;
  int n = 0;
};

// Bisection on [lo, hi] driving the smallest |eigenvalue| below tol_kernel_rel * |M|_max.
KernelCrossing locate_kernel(const MatrixFamily& family, double lo, double hi, double tol_kernel_rel = 1e-8,
                             int max_iter = 60, double tol_eig_rel = 1e-8);

KernelCrossing locate_kernel(const SweepResult& sw, const BlockAssembler& assembler, const EigenContext& ctx,
                             int n, int interval, double tol_kernel_rel = 1e-8, double tol_eig_rel = 1e-8);

void write_sweep_csv(std::ostream& os, const SweepResult& sw);

}  // namespace vmspec
