#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vmspec/error.hpp"
#include "vmspec/weight.hpp"

namespace vmspec {

// Gauss-Legendre nodes and weights on [-1, 1], ascending nodes.
template <class Scalar>
void gauss_legendre(int n, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
                    Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& w) {
  using std::abs;
  using std::cos;
  if (n < 1) throw Error(ErrorKind::Size, "gauss_legendre: n must be positive");
  x.resize(n);
  w.resize(n);
  const Scalar pi = std::numbers::pi_v<Scalar>;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    Scalar z = cos(pi * (Scalar(i) + Scalar(0.75)) / (Scalar(n) + Scalar(0.5)));
    Scalar pp = 1;
    for (int it = 0; it < 100; ++it) {
      Scalar p1 = 1, p2 = 0;
      for (int j = 1; j <= n; ++j) {
        const Scalar p3 = p2;
        p2 = p1;
        p1 = ((2 * j - 1) * z * p2 - (j - 1) * p3) / Scalar(j);
      }
      pp = Scalar(n) * (z * p1 - p2) / (z * z - Scalar(1));
      const Scalar dz = p1 / pp;
      z -= dz;
      if (abs(dz) <= Scalar(4) * std::numeric_limits<Scalar>::epsilon()) break;
    }
    x(i) = -z;
    x(n - 1 - i) = z;
    w(i) = Scalar(2) / ((Scalar(1) - z * z) * pp * pp);
    w(n - 1 - i) = w(i);
  }
  if (n % 2 == 1) x(n / 2) = 0;
}

// Polar velocity rule: panel-wise Gauss in r times an offset trapezoid in theta.
// Node j = ir * n_theta + it sits at (r cos theta, r sin theta); weight includes r.
struct VelocityQuadrature {
  Eigen::VectorXd r_nodes, r_weights;  // r_weights are plain dr weights
  Eigen::VectorXd theta_nodes, theta_weights;
  std::vector<double> panel_edges;
  double r_max = 0.0;
  int n_r_per_panel = 0;
  int n_theta = 0;

  WeightSpec weight;
  std::vector<double> kinks;
  double tol_tail = 0.0;
  bool fixed_radius = false;  // r_max given explicitly instead of from the tail

  Eigen::VectorXd v1, v2, w;  // flattened nodes

  Eigen::Index size() const { return w.size(); }
  // Index of the node reflected by v2 -> -v2.
  Eigen::Index mirror_v2(Eigen::Index j) const {
    const Eigen::Index ir = j / n_theta, it = j % n_theta;
    return ir * n_theta + (n_theta - 1 - it);
  }
};

// Energy beyond which the weight's radial tail is below tol_tail of the total.
double tail_energy(const WeightSpec& weight, double tol_tail);

VelocityQuadrature build_velocity_quadrature(const WeightSpec& weight, const std::vector<double>& kinks,
                                             double tol_tail, int n_r, int n_theta,
                                             double r_max_override = 0.0);

// Same layout with n_r and n_theta doubled.
VelocityQuadrature refine(const VelocityQuadrature& quad);

template <class F>
double integrate_velocity(const VelocityQuadrature& quad, F&& f) {
  double sum = 0.0;
  for (Eigen::Index j = 0; j < quad.size(); ++j) {
    const double val = f(quad.v1(j), quad.v2(j));
    if (!std::isfinite(val))
      throw Error(ErrorKind::QuadratureFailure,
                  "non-finite integrand at v=(" + std::to_string(quad.v1(j)) + ", " +
                      std::to_string(quad.v2(j)) + ")");
    sum += quad.w(j) * val;
  }
  return sum;
}

// Orthonormal real Fourier basis on [0, P). Full ordering is
// [1/sqrt(P), c_1, s_1, c_2, s_2, ...]; the mean-zero variant drops the constant.
struct FourierBasis {
  double period = 0.0;
  int n_modes = 0;  // mean-zero functions, N_x (even)
  bool mean_zero = true;
  Eigen::VectorXd x;        // collocation grid, M points
  double dx = 0.0;          // trapezoid weight P/M
  Eigen::MatrixXd values;   // M x size()
  Eigen::MatrixXd derivs;   // first derivatives, M x size()
  Eigen::VectorXd kappa2;   // eigenvalue of -d^2/dx^2 per function
  Eigen::VectorXi wavenumber;

  int size() const { return static_cast<int>(values.cols()); }
  int grid_size() const { return static_cast<int>(x.size()); }
};

FourierBasis build_fourier_basis(double period, int n_modes, bool mean_zero, int grid_factor = 4);

// Value and derivative of basis function a at arbitrary x.
double basis_value(const FourierBasis& basis, int a, double x);
double basis_derivative(const FourierBasis& basis, int a, double x);

double integrate_spatial(const FourierBasis& basis, const Eigen::VectorXd& g);

// Coefficients <g, e_a> under the collocation rule.
Eigen::VectorXd project(const FourierBasis& basis, const Eigen::VectorXd& g);

// Spectral derivative of order `order` of uniformly sampled periodic data.
Eigen::VectorXd spectral_derivative(double period, const Eigen::VectorXd& samples, int order);

}  // namespace vmspec
