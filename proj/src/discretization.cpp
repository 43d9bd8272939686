#include "vmspec/discretization.hpp"

#include <algorithm>
#include <complex>

#include <unsupported/Eigen/FFT>

namespace vmspec {

namespace {

constexpr double kPi = std::numbers::pi;

// Integral of (1+e)^(-alpha) e de from E to infinity.
double radial_tail(double alpha, double E) {
  return std::pow(1.0 + E, 2.0 - alpha) / (alpha - 2.0) - std::pow(1.0 + E, 1.0 - alpha) / (alpha - 1.0);
}

}  // namespace

double tail_energy(const WeightSpec& weight, double tol_tail) {
  if (!(weight.alpha > 2.0))
    throw Error(ErrorKind::NonIntegrableWeight, "weight exponent alpha must exceed 2", weight.alpha);
  if (!(tol_tail > 0.0 && tol_tail < 1.0)) throw Error(ErrorKind::Config, "tol_tail must lie in (0,1)");
  const double total = radial_tail(weight.alpha, 1.0);
  double lo = 0.0, hi = 1.0;  // in log(1+E)
  while (radial_tail(weight.alpha, std::expm1(hi)) > tol_tail * total) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (radial_tail(weight.alpha, std::expm1(mid)) > tol_tail * total)
      lo = mid;
    else
      hi = mid;
  }
  return std::max(1.0, std::expm1(hi));
}

VelocityQuadrature build_velocity_quadrature(const WeightSpec& weight, const std::vector<double>& kinks,
                                             double tol_tail, int n_r, int n_theta, double r_max_override) {
  if (n_r < 1 || n_theta < 2 || n_theta % 2 != 0)
    throw Error(ErrorKind::Size, "velocity quadrature needs n_r >= 1 and even n_theta >= 2");
  VelocityQuadrature q;
  q.weight = weight;
  q.kinks = kinks;
  q.tol_tail = tol_tail;
  q.n_r_per_panel = n_r;
  q.n_theta = n_theta;
  q.fixed_radius = r_max_override > 0.0;
  if (r_max_override > 0.0) {
    q.r_max = r_max_override;
  } else {
    const double E = tail_energy(weight, tol_tail);
    q.r_max = std::sqrt(E * E - 1.0);
  }

  std::vector<double> edges{0.0, q.r_max};
  for (double ek : kinks) {
    if (ek > 1.0) {
      const double rk = std::sqrt(ek * ek - 1.0);
      if (rk < q.r_max) edges.push_back(rk);
    }
  }
  for (double r = 1.0; r < q.r_max; r *= 2.0) edges.push_back(r);
  std::sort(edges.begin(), edges.end());
  q.panel_edges.clear();
  for (double e : edges)
    if (q.panel_edges.empty() || e - q.panel_edges.back() > 1e-12 * q.r_max) q.panel_edges.push_back(e);
  if (q.panel_edges.back() != q.r_max) q.panel_edges.back() = q.r_max;

  Eigen::VectorXd gx, gw;
  gauss_legendre(n_r, gx, gw);
  const int n_panels = static_cast<int>(q.panel_edges.size()) - 1;
  q.r_nodes.resize(n_panels * n_r);
  q.r_weights.resize(n_panels * n_r);
  for (int p = 0; p < n_panels; ++p) {
    const double a = q.panel_edges[p], b = q.panel_edges[p + 1];
    for (int i = 0; i < n_r; ++i) {
      q.r_nodes(p * n_r + i) = 0.5 * (a + b) + 0.5 * (b - a) * gx(i);
      q.r_weights(p * n_r + i) = 0.5 * (b - a) * gw(i);
    }
  }

  q.theta_nodes.resize(n_theta);
  q.theta_weights.setConstant(n_theta, 2.0 * kPi / n_theta);
  for (int j = 0; j < n_theta; ++j) q.theta_nodes(j) = (j + 0.5) * 2.0 * kPi / n_theta;

  const Eigen::Index n = q.r_nodes.size() * n_theta;
  q.v1.resize(n);
  q.v2.resize(n);
  q.w.resize(n);
  for (Eigen::Index ir = 0; ir < q.r_nodes.size(); ++ir) {
    const double r = q.r_nodes(ir);
    for (int it = 0; it < n_theta; ++it) {
      const Eigen::Index j = ir * n_theta + it;
      q.v1(j) = r * std::cos(q.theta_nodes(it));
      q.v2(j) = r * std::sin(q.theta_nodes(it));
      q.w(j) = q.r_weights(ir) * r * q.theta_weights(it);
    }
  }
  // Exact mirror symmetry of the node set under v1 -> -v1 and v2 -> -v2.
  const int half = n_theta / 2;
  for (Eigen::Index ir = 0; ir < q.r_nodes.size(); ++ir) {
    for (int it = 0; it < half; ++it) {
      const int mirror = half - 1 - it;
      if (it > mirror) {
        q.v1(ir * n_theta + it) = -q.v1(ir * n_theta + mirror);
        q.v2(ir * n_theta + it) = q.v2(ir * n_theta + mirror);
      }
    }
    for (int it = 0; it < half; ++it) {
      const Eigen::Index j = ir * n_theta + it, k = ir * n_theta + n_theta - 1 - it;
      q.v1(k) = q.v1(j);
      q.v2(k) = -q.v2(j);
    }
  }
  return q;
}

VelocityQuadrature refine(const VelocityQuadrature& quad) {
  return build_velocity_quadrature(quad.weight, quad.kinks, quad.tol_tail, 2 * quad.n_r_per_panel,
                                   2 * quad.n_theta, quad.fixed_radius ? quad.r_max : 0.0);
}

FourierBasis build_fourier_basis(double period, int n_modes, bool mean_zero, int grid_factor) {
  if (!(period > 0.0)) throw Error(ErrorKind::Size, "period must be positive");
  if (n_modes < 2 || n_modes % 2 != 0) throw Error(ErrorKind::Size, "N_x must be even and >= 2");
  if (grid_factor < 4) throw Error(ErrorKind::Size, "collocation grid must have at least 4 N_x points");
  FourierBasis b;
  b.period = period;
  b.n_modes = n_modes;
  b.mean_zero = mean_zero;
  const int M = grid_factor * n_modes;
  b.dx = period / M;
  b.x.resize(M);
  for (int i = 0; i < M; ++i) b.x(i) = i * b.dx;
  const int nb = n_modes + (mean_zero ? 0 : 1);
  b.values.resize(M, nb);
  b.derivs.resize(M, nb);
  b.kappa2.resize(nb);
  b.wavenumber.resize(nb);
  for (int a = 0; a < nb; ++a) {
    const int full = mean_zero ? a + 1 : a;
    const int k = (full + 1) / 2;
    b.wavenumber(a) = k;
    const double kap = 2.0 * kPi * k / period;
    b.kappa2(a) = kap * kap;
    for (int i = 0; i < M; ++i) {
      b.values(i, a) = basis_value(b, a, b.x(i));
      b.derivs(i, a) = basis_derivative(b, a, b.x(i));
    }
  }
  return b;
}

double basis_value(const FourierBasis& basis, int a, double x) {
  const int full = basis.mean_zero ? a + 1 : a;
  if (full == 0) return 1.0 / std::sqrt(basis.period);
  const int k = (full + 1) / 2;
  const double arg = 2.0 * kPi * k * x / basis.period;
  const double s = std::sqrt(2.0 / basis.period);
  return (full % 2 == 1) ? s * std::cos(arg) : s * std::sin(arg);
}

double basis_derivative(const FourierBasis& basis, int a, double x) {
  const int full = basis.mean_zero ? a + 1 : a;
  if (full == 0) return 0.0;
  const int k = (full + 1) / 2;
  const double kap = 2.0 * kPi * k / basis.period;
  const double arg = kap * x;
  const double s = std::sqrt(2.0 / basis.period);
  return (full % 2 == 1) ? -s * kap * std::sin(arg) : s * kap * std::cos(arg);
}

double integrate_spatial(const FourierBasis& basis, const Eigen::VectorXd& g) {
  if (g.size() != basis.grid_size()) throw Error(ErrorKind::Size, "integrate_spatial: grid mismatch");
  return g.sum() * basis.dx;
}

Eigen::VectorXd project(const FourierBasis& basis, const Eigen::VectorXd& g) {
  if (g.size() != basis.grid_size()) throw Error(ErrorKind::Size, "project: grid mismatch");
  return basis.values.transpose() * g * basis.dx;
}

Eigen::VectorXd spectral_derivative(double period, const Eigen::VectorXd& samples, int order) {
  const int n = static_cast<int>(samples.size());
  std::vector<double> in(samples.data(), samples.data() + n);
  std::vector<std::complex<double>> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, in);
  for (int k = 0; k < n; ++k) {
    int m = k <= n / 2 ? k : k - n;
    if (n % 2 == 0 && k == n / 2 && order % 2 == 1) m = 0;
    const std::complex<double> ik(0.0, 2.0 * kPi * m / period);
    std::complex<double> factor = 1.0;
    for (int o = 0; o < order; ++o) factor *= ik;
    spec[k] *= factor;
  }
  std::vector<double> out;
  fft.inv(out, spec);
  return Eigen::Map<Eigen::VectorXd>(out.data(), n);
}

}  // namespace vmspec
