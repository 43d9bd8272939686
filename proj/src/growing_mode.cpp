#include "vmspec/growing_mode.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include <json.hpp>

#include "vmspec/error.hpp"
#include "vmspec/parallel.hpp"

namespace vmspec {

namespace {

double rms(const Eigen::VectorXd& v) { return v.size() ? std::sqrt(v.squaredNorm() / v.size()) : 0.0; }

Residual compare(const Eigen::VectorXd& lhs, const Eigen::VectorXd& rhs, double floor, double tol) {
  Residual r;
  const double num = rms(lhs - rhs);
  r.absolute = num;
  r.relative = num == 0.0 ? 0.0 : num / std::max({rms(lhs), rms(rhs), floor});
  r.pass = std::isfinite(r.relative) && r.relative <= tol;
  return r;
}

void check_grid(const BlockAssembler& assembler, const GrowingMode& mode) {
  if (mode.x.size() != assembler.basis().grid_size() || mode.fplus.cols() != assembler.quad().size() ||
      mode.fminus.rows() != mode.x.size())
    throw Error(ErrorKind::Size, "mode was reconstructed on a different grid");
}

}  // namespace

GrowingMode reconstruct(const BlockAssembler& assembler, double lambda, const Eigen::VectorXd& phi_coef,
                        const Eigen::VectorXd& psi_coef, double b) {
  const FourierBasis& full = assembler.basis();
  const FourierBasis& zero = assembler.basis0();
  const int N = zero.size();
  if (!(lambda > 0.0)) throw Error(ErrorKind::Size, "a growing mode needs lambda > 0", lambda);
  if (psi_coef.size() != full.size()) throw Error(ErrorKind::Size, "psi coefficients do not match the basis");

  GrowingMode m;
  if (phi_coef.size() == N) {
    m.phi_coef = phi_coef;
  } else if (phi_coef.size() == full.size()) {
    if (phi_coef(0) != 0.0)
      throw Error(ErrorKind::Size, "phi must have zero mean; the constant direction is the trivial solution",
                  phi_coef(0));
    m.phi_coef = phi_coef.tail(N);
  } else {
    throw Error(ErrorKind::Size, "phi coefficients do not match the basis");
  }
  m.lambda = lambda;
  m.b = b;
  m.psi_coef = psi_coef;
  m.x = full.x;
  m.phi = zero.values * m.phi_coef;
  m.psi = full.values * psi_coef;
  m.phi_xx = -(zero.values * zero.kappa2.cwiseProduct(m.phi_coef));
  m.psi_xx = -(full.values * full.kappa2.cwiseProduct(psi_coef));
  m.E1 = -(zero.derivs * m.phi_coef).array() - lambda * b;
  m.E2 = -lambda * m.psi;
  m.B = full.derivs * psi_coef;

  const int M = full.grid_size();
  const Eigen::Index Nv = assembler.quad().size();
  const VelocityQuadrature& quad = assembler.quad();
  m.fplus.resize(M, Nv);
  m.fminus.resize(M, Nv);
  m.rho.resize(M);
  m.j1.resize(M);
  m.j2.resize(M);

  parallel_for(M, assembler.options().jobs, [&](long il) {
    const int i = static_cast<int>(il);
    NodeResponse r;
    double rho = 0, j1 = 0, j2 = 0;
    for (int sigma : {-1, 1}) {
      for (Eigen::Index j = 0; j < Nv; ++j) {
        const int jj = static_cast<int>(j);
        const double ue = assembler.mu_e(sigma, i, jj), up = assembler.mu_p(sigma, i, jj);
        double F = ue * m.phi(i) + up * m.psi(i);
        if (ue != 0.0) {
          assembler.response(lambda, sigma, i, jj, r);
          const double Qphi = r.Qe.tail(N).dot(m.phi_coef);
          const double Qv2psi = r.Qv2e.dot(psi_coef);
          F -= ue * (Qphi - Qv2psi - b * r.Qv1);
        }
        (sigma > 0 ? m.fplus : m.fminus)(i, j) = sigma * F;
        const double v1 = quad.v1(j), v2 = quad.v2(j);
        const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
        const double w = quad.w(j);
        // f+ - f- sums F over species
        rho += w * F;
        j1 += w * v1 / e * F;
        j2 += w * v2 / e * F;
      }
    }
    m.rho(i) = rho;
    m.j1(i) = j1;
    m.j2(i) = j2;
  });
  return m;
}

GrowingMode reconstruct(const BlockAssembler& assembler, const KernelCrossing& crossing) {
  return reconstruct(assembler, crossing.lambda_star, crossing.phi, crossing.psi, crossing.b);
}

ResidualReport residuals(const BlockAssembler& assembler, const GrowingMode& mode, double tol) {
  check_grid(assembler, mode);
  const FourierBasis& full = assembler.basis();
  const VelocityQuadrature& quad = assembler.quad();
  const int M = full.grid_size();
  const Eigen::Index Nv = quad.size();
  const double lam = mode.lambda;
  const double floor = 1e-3 * mode.norm();

  ResidualReport rep;
  rep.tol = tol;
  rep.gauss = compare(-mode.phi_xx, mode.rho, floor, tol);
  rep.ampere1 = compare(lam * mode.E1, -mode.j1, floor, tol);
  rep.ampere2 = compare(-lam * lam * mode.psi + mode.psi_xx, -mode.j2, floor, tol);
  const Eigen::VectorXd dj1 = spectral_derivative(full.period, mode.j1, 1);
  rep.continuity = compare(dj1, -lam * mode.rho, floor, tol);
  rep.rho_mean = mode.rho.mean();

  // Weak Vlasov: int int f (lambda g - D g) = int int g rhs, with
  // g = e_k(x) p(vhat) W(e) and D = vhat1 d/dx + sigma B0 (vhat2 d/dv1 - vhat1 d/dv2).
  const int n_space = std::min(3, full.size());
  constexpr int n_poly = 4;
  const int n_g = n_space * n_poly;
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(2, n_g), rhs = lhs;
  const double dx = full.dx;
  for (int s = 0; s < 2; ++s) {
    const int sigma = s == 0 ? -1 : 1;
    const Eigen::MatrixXd& f = sigma > 0 ? mode.fplus : mode.fminus;
    for (int i = 0; i < M; ++i) {
      const double B0 = assembler.B0(i);
      for (Eigen::Index j = 0; j < Nv; ++j) {
        const int jj = static_cast<int>(j);
        const double v1 = quad.v1(j), v2 = quad.v2(j);
        const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
        const double a = v1 / e, c = v2 / e;
        const double W = std::exp(-(e - 1.0));
        const double ue = assembler.mu_e(sigma, i, jj), up = assembler.mu_p(sigma, i, jj);
        const double src = sigma * (-ue * a * mode.E1(i) + up * a * mode.B(i) - (ue * c + up) * mode.E2(i));
        const double w = quad.w(j) * dx;
        const double poly[n_poly] = {1.0, a, c, a * c};
        const double rpoly[n_poly] = {0.0, c / e, -a / e, (c * c - a * a) / e};
        for (int k = 0; k < n_space; ++k) {
          const double ek = full.values(i, k), dek = full.derivs(i, k);
          for (int p = 0; p < n_poly; ++p) {
            const double g = ek * poly[p] * W;
            const double Dg = a * dek * poly[p] * W + sigma * B0 * ek * rpoly[p] * W;
            lhs(s, k * n_poly + p) += w * f(i, j) * (lam * g - Dg);
            rhs(s, k * n_poly + p) += w * g * src;
          }
        }
      }
    }
  }
  double scale = 0.0;
  for (Eigen::Index t = 0; t < lhs.size(); ++t)
    scale = std::max({scale, std::abs(lhs(t)), std::abs(rhs(t))});
  double worst = 0.0, worst_abs = 0.0;
  for (Eigen::Index t = 0; t < lhs.size(); ++t) {
    const double num = std::abs(lhs(t) - rhs(t));
    worst_abs = std::max(worst_abs, num);
    if (num == 0.0) continue;
    worst = std::max(worst, num / std::max({std::abs(lhs(t)), std::abs(rhs(t)), 1e-3 * scale}));
  }
  rep.vlasov_weak.relative = worst;
  rep.vlasov_weak.absolute = worst_abs;
  rep.vlasov_weak.pass = std::isfinite(worst) && worst <= tol;
  rep.n_tests = static_cast<int>(lhs.size());

  // Moments dropped by parity in the b equation: sum int vhat1 mu_e and sum int vhat1 mu_p.
  for (int i = 0; i < M; ++i) {
    double m1 = 0, m2 = 0;
    for (int sigma : {-1, 1})
      for (Eigen::Index j = 0; j < Nv; ++j) {
        const double v1 = quad.v1(j), v2 = quad.v2(j);
        const double a = v1 / std::sqrt(1.0 + v1 * v1 + v2 * v2);
        m1 += quad.w(j) * a * assembler.mu_e(sigma, i, static_cast<int>(j));
        m2 += quad.w(j) * a * assembler.mu_p(sigma, i, static_cast<int>(j));
      }
    rep.parity = std::max(rep.parity, std::abs(m1) + std::abs(m2));
  }

  const Residual* all[] = {&rep.gauss, &rep.ampere1, &rep.ampere2, &rep.continuity, &rep.vlasov_weak};
  rep.pass = true;
  for (const Residual* r : all) {
    if (!std::isfinite(r->relative) || !std::isfinite(r->absolute))
      throw Error(ErrorKind::NonConvergence, "non-finite residual");
    rep.pass = rep.pass && r->pass;
  }
  return rep;
}

MaxwellDefects maxwell_defects(const BlockAssembler& assembler, const GrowingMode& mode) {
  check_grid(assembler, mode);
  const double lam = mode.lambda;
  MaxwellDefects d;
  d.gauss = project(assembler.basis0(), -mode.phi_xx - mode.rho);
  d.ampere2 = project(assembler.basis(), -lam * lam * mode.psi + mode.psi_xx + mode.j2);
  d.ampere1 = integrate_spatial(assembler.basis(), lam * mode.E1 + mode.j1);
  return d;
}

std::string mode_manifest_json(const GrowingMode& mode, const ResidualReport& report) {
  auto res = [](const Residual& r) {
    return nlohmann::ordered_json{{"relative", r.relative}, {"absolute", r.absolute}, {"pass", r.pass}};
  };
  nlohmann::ordered_json j;
  j["lambda"] = mode.lambda;
  j["b"] = mode.b;
  j["phi_coefficients"] = std::vector<double>(mode.phi_coef.data(), mode.phi_coef.data() + mode.phi_coef.size());
  j["psi_coefficients"] = std::vector<double>(mode.psi_coef.data(), mode.psi_coef.data() + mode.psi_coef.size());
  j["tol_residual"] = report.tol;
  j["residuals"] = {{"gauss", res(report.gauss)},
                    {"ampere1", res(report.ampere1)},
                    {"ampere2", res(report.ampere2)},
                    {"continuity", res(report.continuity)},
                    {"vlasov_weak", res(report.vlasov_weak)}};
  j["weak_tests"] = report.n_tests;
  j["rho_mean"] = report.rho_mean;
  j["parity_moment"] = report.parity;
  j["pass"] = report.pass;
  return j.dump(2);
}

void write_mode_fields_csv(std::ostream& os, const GrowingMode& mode) {
  os << "x,phi,psi,E1,E2,B\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < mode.x.size(); ++i)
    os << mode.x(i) << ',' << mode.phi(i) << ',' << mode.psi(i) << ',' << mode.E1(i) << ',' << mode.E2(i) << ','
       << mode.B(i) << '\n';
}

void write_mode_distribution_csv(std::ostream& os, const GrowingMode& mode, const VelocityQuadrature& quad,
                                 int n_slices) {
  if (mode.fplus.cols() != quad.size()) throw Error(ErrorKind::Size, "quadrature does not match the mode");
  os << "x,r,theta,fplus,fminus\n" << std::setprecision(17);
  const int M = static_cast<int>(mode.x.size());
  n_slices = std::clamp(n_slices, 1, M);
  for (int s = 0; s < n_slices; ++s) {
    const int i = s * M / n_slices;
    for (Eigen::Index j = 0; j < quad.size(); ++j)
      os << mode.x(i) << ',' << quad.r_nodes(j / quad.n_theta) << ',' << quad.theta_nodes(j % quad.n_theta) << ','
         << mode.fplus(i, j) << ',' << mode.fminus(i, j) << '\n';
  }
}

}  // namespace vmspec
