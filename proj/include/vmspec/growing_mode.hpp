#pragma once

#include <cmath>
#include <ostream>
#include <string>

#include <Eigen/Dense>

#include "vmspec/operators.hpp"
#include "vmspec/spectra.hpp"

namespace vmspec {

struct GrowingMode {
  double lambda = 0.0;
  double b = 0.0;
  Eigen::VectorXd phi_coef;  // mean-zero basis
  Eigen::VectorXd psi_coef;  // full basis

  // Collocation values on the assembler's x grid.
  Eigen::VectorXd x, phi, psi, E1, E2, B;
  Eigen::VectorXd phi_xx, psi_xx;
  // Rows are x nodes, columns velocity nodes.
  Eigen::MatrixXd fplus, fminus;
  Eigen::VectorXd rho, j1, j2;

  double norm() const { return phi_coef.norm() + psi_coef.norm() + std::abs(b); }
};

// f^{+-} = +-mu_e phi +- mu_p psi -+ mu_e [Q phi - Q(vhat2 psi) - b Q vhat1].
// phi_coef may also be given in the full basis, in which case its constant
// coefficient must vanish.
GrowingMode reconstruct(const BlockAssembler& assembler, double lambda, const Eigen::VectorXd& phi_coef,
                        const Eigen::VectorXd& psi_coef, double b);

GrowingMode reconstruct(const BlockAssembler& assembler, const KernelCrossing& crossing);

struct Residual {
  double relative = 0.0;
  double absolute = 0.0;  // RMS of lhs - rhs over the grid
  bool pass = false;
};

struct ResidualReport {
  Residual gauss, ampere1, ampere2, continuity, vlasov_weak;
  int n_tests = 0;       // weak tests, both species
  double rho_mean = 0.0;  // spatial mean of rho
  double parity = 0.0;    // max_x of the moments dropped by parity in the b equation
  double tol = 1e-4;
  bool pass = false;
};

ResidualReport residuals(const BlockAssembler& assembler, const GrowingMode& mode, double tol = 1e-4);

// Physical-space Maxwell defects of a reconstructed state, in the block coordinates:
// gauss = <-phi'' - rho, e_a> over the mean-zero basis, ampere2 = <-lambda^2 psi + psi'' + j2, e_a>
// over the full basis, ampere1 = integral of lambda E1 + j1 over one period.
struct MaxwellDefects {
  Eigen::VectorXd gauss, ampere2;
  double ampere1 = 0.0;
};

MaxwellDefects maxwell_defects(const BlockAssembler& assembler, const GrowingMode& mode);

std::string mode_manifest_json(const GrowingMode& mode, const ResidualReport& report);
void write_mode_fields_csv(std::ostream& os, const GrowingMode& mode);
// Distribution at up to n_slices evenly spaced x nodes.
void write_mode_distribution_csv(std::ostream& os, const GrowingMode& mode, const VelocityQuadrature& quad,
                                 int n_slices = 4);

}  // namespace vmspec
