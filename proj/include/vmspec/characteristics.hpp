#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "vmspec/equilibrium.hpp"

namespace vmspec {

struct PhasePoint {
  double x = 0.0, v1 = 0.0, v2 = 0.0;

  double e() const { return std::sqrt(1.0 + v1 * v1 + v2 * v2); }
  double vhat1() const { return v1 / e(); }
  double vhat2() const { return v2 / e(); }
  double p_plus(const MagneticPotential& pot) const { return v2 + pot.psi(x); }
  double p_minus(const MagneticPotential& pot) const { return v2 - pot.psi(x); }
};

struct StepOptions {
  double h = 0.05;
  double tol_cons = 1e-8;
  int max_halvings = 8;
  double max_period = 1e4;
};

struct ConservationReport {
  double de = 0.0;  // max |e(s) - e(0)|
  double dp = 0.0;  // max |p(s) - p(0)| of the species' own momentum
};

// Phase point reached at time s (any sign) along the species-sigma characteristic.
PhasePoint flow(const EquilibriumState& state, int sigma, const PhasePoint& start, double s,
                const StepOptions& opts = {}, ConservationReport* report = nullptr);

struct TrajectorySample {
  int species = -1;
  Eigen::VectorXd s_nodes;  // decreasing, <= 0
  Eigen::VectorXd gl_weights;
  std::vector<PhasePoint> states;
  ConservationReport conservation;
};

// States at the Gauss-Legendre nodes of [-S, 0], integrated in one continuous sweep.
TrajectorySample sample_backward(const EquilibriumState& state, int sigma, const PhasePoint& start, double S,
                                 int n_nodes, const StepOptions& opts = {});

enum class OrbitKind { Stationary, Passing, Trapped };
const char* to_string(OrbitKind kind);

struct OrbitInfo {
  OrbitKind kind = OrbitKind::Stationary;
  double period = 0.0;
  int winding = 0;
};

OrbitInfo orbit_info(const EquilibriumState& state, int sigma, const PhasePoint& start,
                     const StepOptions& opts = {});

// One full period sampled backward at s_q = -q T / n, q = 0..n-1.
struct OrbitSamples {
  OrbitInfo info;
  Eigen::VectorXd x, v1, v2;
  ConservationReport conservation;
  double closure = 0.0;  // distance from start after one period
};

OrbitSamples sample_orbit(const EquilibriumState& state, int sigma, const PhasePoint& start, int n,
                          const StepOptions& opts = {});

}  // namespace vmspec
