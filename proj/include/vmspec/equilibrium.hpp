#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vmspec/discretization.hpp"
#include "vmspec/weight.hpp"

namespace vmspec {

using ProfileFn = std::function<double(double e, double p)>;

// Purely magnetic equilibrium profile. Species index sigma is +1 or -1;
// mu_plus(e,p) = mu_minus(e,-p) unless explicit plus functions are given.
struct EquilibriumProfile {
  std::string name;
  ProfileFn mu_minus, mu_minus_e, mu_minus_p;
  ProfileFn mu_plus, mu_plus_e, mu_plus_p;  // optional overrides, validated against the rule
  std::vector<double> kinks;
  WeightSpec weight;
  std::map<std::string, double> parameters;

  double mu(int sigma, double e, double p) const;
  double mu_e(int sigma, double e, double p) const;
  double mu_p(int sigma, double e, double p) const;
};

EquilibriumProfile zero_profile();

// gamma(e) = e-1 on [1,2), eta(e) = exp(-(e-2)^2) beyond, independent of p.
EquilibriumProfile paper_homogeneous_profile(const WeightSpec& weight = {1e8, 12.0});

// [exp(-(e-1)/theta) + beta exp(-((e-e_b)/delta)^2)] (1 + a p^2) exp(-b p^2).
EquilibriumProfile weakfield_profile(const std::map<std::string, double>& params = {},
                                     const WeightSpec& weight = {1e9, 12.0});

// Lookup by name: paper_homogeneous, weakfield_family, zero.
EquilibriumProfile make_profile(const std::string& name, const std::map<std::string, double>& params,
                                const WeightSpec& weight);

struct ValidationGrid {
  int n_e = 400;
  int n_p = 201;
  double tol = 1e-12;
};

struct ValidationReport {
  double e_max = 0.0, p_max = 0.0;
  double max_negativity = 0.0;
  double max_decay_violation = 0.0;
  double decay_violation_e = 0.0, decay_violation_p = 0.0;
  double max_symmetry_violation = 0.0;
  bool pass = false;
};

ValidationReport validate_profile(const EquilibriumProfile& profile, const WeightSpec& weight,
                                  const ValidationGrid& grid = {});

// g(psi) = 2 * integral of vhat2 mu_minus(<v>, v2 - psi) dv.
double center_force(const EquilibriumProfile& profile, const VelocityQuadrature& quad, double psi);

struct CenterCheck {
  double g0 = 0.0;
  double gprime0 = 0.0;
  double h_g = 1e-4;
  bool ok = false;
};

CenterCheck check_center_conditions(const EquilibriumProfile& profile, const VelocityQuadrature& quad,
                                    double tol_g = 1e-9, double tol_refine = 1e-6);

// Periodic psi0 sampled on a uniform grid and evaluated by trigonometric interpolation.
class MagneticPotential {
 public:
  MagneticPotential() = default;
  MagneticPotential(double period, const Eigen::VectorXd& samples);
  static MagneticPotential zero(double period);

  double period() const { return period_; }
  const Eigen::VectorXd& samples() const { return samples_; }
  bool is_zero() const { return cos_.size() == 0 && mean_ == 0.0; }

  double psi(double x) const;
  double B(double x) const;
  void eval(double x, double& psi, double& B) const;
  // Largest magnitude of the discarded and highest retained harmonics.
  double interpolation_error() const { return interp_error_; }
  double sup_B() const;

 private:
  double period_ = 1.0;
  Eigen::VectorXd samples_;
  double mean_ = 0.0;
  Eigen::VectorXd cos_, sin_;  // harmonics 1..K
  double interp_error_ = 0.0;
};

struct EquilibriumState {
  EquilibriumProfile profile;
  MagneticPotential potential;
  bool homogeneous = true;
  double epsilon = 0.0;
  double ode_residual = 0.0;
  double richardson_error = 0.0;
  double p_cr = 0.0;
  double psi_c1 = 0.0;  // sup|psi| + sup|psi'|

  double period() const { return potential.period(); }
};

EquilibriumState make_homogeneous_state(const EquilibriumProfile& profile, double period);

struct CenterOdeOptions {
  int steps_per_period = 4096;
  int n_samples = 64;
  double tol_equil = 1e-6;
  double max_periods = 4.0;
  int table_nodes = 48;
};

struct CenterOrbit {
  double period = 0.0;
  Eigen::VectorXd samples;  // psi at x_k = k T / n
  double richardson_error = 0.0;
};

// Integrates psi'' = g(psi) from (-epsilon, 0) over one phase-plane orbit.
CenterOrbit solve_center_orbit(const std::function<double(double)>& g, double gprime0, double epsilon,
                               const CenterOdeOptions& opts = {});

EquilibriumState solve_equilibrium_potential(const EquilibriumProfile& profile, double epsilon,
                                             const VelocityQuadrature& quad, const CenterOdeOptions& opts = {});

struct StabilityCondition {
  double sup_mu_e = 0.0;
  double measure_Sb = 0.0;
  double p_cr = 0.0;
  double bound = 0.0;
  bool satisfied = false;
};

// sup mu^-_e < pi^2 / (3 P_cr^2 |S_b|), S_b = {mu^-_e > 0} in velocity space.
StabilityCondition evaluate_stabcond(const EquilibriumProfile& profile, const VelocityQuadrature& quad,
                                     double gprime0);

}  // namespace vmspec
