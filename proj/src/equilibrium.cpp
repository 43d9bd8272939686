#include "vmspec/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "vmspec/error.hpp"

namespace vmspec {

namespace {

constexpr double kPi = std::numbers::pi;

void check_energy(double e) {
  if (!(e >= 1.0 - 1e-12)) {
    std::ostringstream os;
    os << "energy below the floor e >= 1: e=" << e;
    throw Error(ErrorKind::ProfileEvaluation, os.str(), e);
  }
}

double param(const std::map<std::string, double>& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

}  // namespace

double EquilibriumProfile::mu(int sigma, double e, double p) const {
  check_energy(e);
  if (sigma > 0) return mu_plus ? mu_plus(e, p) : mu_minus(e, -p);
  return mu_minus(e, p);
}

double EquilibriumProfile::mu_e(int sigma, double e, double p) const {
  check_energy(e);
  if (sigma > 0) return mu_plus_e ? mu_plus_e(e, p) : mu_minus_e(e, -p);
  return mu_minus_e(e, p);
}

double EquilibriumProfile::mu_p(int sigma, double e, double p) const {
  check_energy(e);
  if (sigma > 0) return mu_plus_p ? mu_plus_p(e, p) : -mu_minus_p(e, -p);
  return mu_minus_p(e, p);
}

EquilibriumProfile zero_profile() {
  EquilibriumProfile prof;
  prof.name = "zero";
  prof.mu_minus = [](double, double) { return 0.0; };
  prof.mu_minus_e = prof.mu_minus;
  prof.mu_minus_p = prof.mu_minus;
  prof.weight = {1.0, 12.0};
  return prof;
}

EquilibriumProfile paper_homogeneous_profile(const WeightSpec& weight) {
  EquilibriumProfile prof;
  prof.name = "paper_homogeneous";
  prof.mu_minus = [](double e, double) { return e < 2.0 ? e - 1.0 : std::exp(-(e - 2.0) * (e - 2.0)); };
  prof.mu_minus_e = [](double e, double) {
    return e < 2.0 ? 1.0 : -2.0 * (e - 2.0) * std::exp(-(e - 2.0) * (e - 2.0));
  };
  prof.mu_minus_p = [](double, double) { return 0.0; };
  prof.kinks = {2.0};
  prof.weight = weight;
  return prof;
}

EquilibriumProfile weakfield_profile(const std::map<std::string, double>& params, const WeightSpec& weight) {
  for (const auto& [key, value] : params) {
    static const char* known[] = {"theta", "a", "b", "beta", "e_b", "delta"};
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
        std::end(known))
      throw Error(ErrorKind::Config, "unknown weakfield_family parameter: " + key);
    if (!std::isfinite(value)) throw Error(ErrorKind::Config, "non-finite parameter: " + key);
  }
  const double th = param(params, "theta", 0.5);
  const double a = param(params, "a", 2.0);
  const double b = param(params, "b", 0.2);
  const double beta = param(params, "beta", 0.01);
  const double eb = param(params, "e_b", 3.0);
  const double dl = param(params, "delta", 0.15);
  if (!(th > 0 && b > 0 && dl > 0 && a >= 0 && beta >= 0))
    throw Error(ErrorKind::Config, "weakfield_family needs theta, b, delta > 0 and a, beta >= 0");

  auto energy = [=](double e) { return std::exp(-(e - 1.0) / th) + beta * std::exp(-std::pow((e - eb) / dl, 2)); };
  auto energy_d = [=](double e) {
    return -std::exp(-(e - 1.0) / th) / th - beta * 2.0 * (e - eb) / (dl * dl) * std::exp(-std::pow((e - eb) / dl, 2));
  };
  auto mom = [=](double p) { return (1.0 + a * p * p) * std::exp(-b * p * p); };
  auto mom_d = [=](double p) { return (2.0 * a * p - 2.0 * b * p * (1.0 + a * p * p)) * std::exp(-b * p * p); };

  EquilibriumProfile prof;
  prof.name = "weakfield_family";
  prof.mu_minus = [=](double e, double p) { return energy(e) * mom(p); };
  prof.mu_minus_e = [=](double e, double p) { return energy_d(e) * mom(p); };
  prof.mu_minus_p = [=](double e, double p) { return energy(e) * mom_d(p); };
  prof.weight = weight;
  // Not kinks, but panel breaks that resolve the bump.
  if (beta > 0.0)
    for (double e : {eb - 3.0 * dl, eb, eb + 3.0 * dl})
      if (e > 1.0) prof.kinks.push_back(e);
  prof.parameters = {{"theta", th}, {"a", a}, {"b", b}, {"beta", beta}, {"e_b", eb}, {"delta", dl}};
  return prof;
}

EquilibriumProfile make_profile(const std::string& name, const std::map<std::string, double>& params,
                                const WeightSpec& weight) {
  if (name == "paper_homogeneous") {
    if (!params.empty()) throw Error(ErrorKind::Config, "paper_homogeneous takes no parameters");
    return paper_homogeneous_profile(weight);
  }
  if (name == "weakfield_family") return weakfield_profile(params, weight);
  if (name == "zero") {
    if (!params.empty()) throw Error(ErrorKind::Config, "zero takes no parameters");
    auto prof = zero_profile();
    prof.weight = weight;
    return prof;
  }
  throw Error(ErrorKind::Config, "unknown profile: " + name);
}

ValidationReport validate_profile(const EquilibriumProfile& profile, const WeightSpec& weight,
                                  const ValidationGrid& grid) {
  ValidationReport rep;
  rep.e_max = 2.0 * std::pow(1e12, 1.0 / weight.alpha) * (1.0 + 1e-9) - 1.0;
  rep.p_max = rep.e_max;

  std::vector<double> es;
  for (int i = 0; i < grid.n_e; ++i) es.push_back(1.0 + (rep.e_max - 1.0) * i / (grid.n_e - 1));
  for (double k : profile.kinks) {
    if (k > 1.0 && k < rep.e_max) {
      es.push_back(k * (1.0 - 1e-9));
      es.push_back(k);
    }
  }
  std::vector<double> ps;
  for (int i = 0; i < grid.n_p; ++i) ps.push_back(-rep.p_max + 2.0 * rep.p_max * i / (grid.n_p - 1));

  auto finite = [](double val, double e, double p) {
    if (!std::isfinite(val)) {
      std::ostringstream os;
      os << "non-finite profile value at (e,p)=(" << e << ", " << p << ")";
      throw Error(ErrorKind::ProfileEvaluation, os.str());
    }
    return val;
  };

  for (double e : es) {
    const double we = weight(e);
    for (double p : ps) {
      for (int s : {-1, 1}) {
        const double m = finite(profile.mu(s, e, p), e, p);
        const double me = finite(profile.mu_e(s, e, p), e, p);
        const double mp = finite(profile.mu_p(s, e, p), e, p);
        rep.max_negativity = std::max(rep.max_negativity, -m);
        const double viol = std::abs(me) + std::abs(mp) - we;
        if (viol > rep.max_decay_violation) {
          rep.max_decay_violation = viol;
          rep.decay_violation_e = e;
          rep.decay_violation_p = p;
        }
      }
      const double sym = std::abs(profile.mu(1, e, p) - profile.mu(-1, e, -p)) +
                         std::abs(profile.mu_e(1, e, p) - profile.mu_e(-1, e, -p)) +
                         std::abs(profile.mu_p(1, e, p) + profile.mu_p(-1, e, -p));
      rep.max_symmetry_violation = std::max(rep.max_symmetry_violation, sym);
    }
  }
  rep.pass = rep.max_negativity <= grid.tol && rep.max_decay_violation <= grid.tol &&
             rep.max_symmetry_violation <= grid.tol;
  return rep;
}

double center_force(const EquilibriumProfile& profile, const VelocityQuadrature& quad, double psi) {
  double sum = 0.0;
  for (Eigen::Index j = 0; j < quad.size(); ++j) {
    const double v1 = quad.v1(j), v2 = quad.v2(j);
    const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
    sum += quad.w(j) * (v2 / e) * profile.mu(-1, e, v2 - psi);
  }
  if (!std::isfinite(sum)) throw Error(ErrorKind::ProfileEvaluation, "non-finite g(psi)");
  return 2.0 * sum;
}

CenterCheck check_center_conditions(const EquilibriumProfile& profile, const VelocityQuadrature& quad,
                                    double tol_g, double tol_refine) {
  CenterCheck cc;
  cc.h_g = 1e-4;
  auto derivative = [&](const VelocityQuadrature& q) {
    return (center_force(profile, q, cc.h_g) - center_force(profile, q, -cc.h_g)) / (2.0 * cc.h_g);
  };
  cc.g0 = center_force(profile, quad, 0.0);
  cc.gprime0 = derivative(quad);
  const double fine = derivative(refine(quad));
  if (std::abs(fine - cc.gprime0) > tol_refine * std::max(1.0, std::abs(fine)))
    throw Error(ErrorKind::QuadratureFailure, "g'(0) changes under quadrature refinement",
                std::abs(fine - cc.gprime0));
  cc.ok = std::abs(cc.g0) <= tol_g && cc.gprime0 < -tol_g;
  return cc;
}

// ---------------------------------------------------------------------------
// Magnetic potential

MagneticPotential::MagneticPotential(double period, const Eigen::VectorXd& samples)
    : period_(period), samples_(samples) {
  const int n = static_cast<int>(samples.size());
  if (n < 4 || n % 2 != 0) throw Error(ErrorKind::Size, "potential needs an even number (>= 4) of samples");
  std::vector<double> in(samples.data(), samples.data() + n);
  std::vector<std::complex<double>> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, in);
  mean_ = spec[0].real() / n;
  const int K = n / 2 - 1;
  Eigen::VectorXd c(K), s(K);
  double biggest = 0.0;
  for (int k = 1; k <= K; ++k) {
    c(k - 1) = 2.0 * spec[k].real() / n;
    s(k - 1) = -2.0 * spec[k].imag() / n;
    biggest = std::max(biggest, std::hypot(c(k - 1), s(k - 1)));
  }
  int keep = K;
  while (keep > 0 && std::hypot(c(keep - 1), s(keep - 1)) <= 1e-15 * biggest) --keep;
  if (biggest == 0.0) keep = 0;
  cos_ = c.head(keep);
  sin_ = s.head(keep);
  interp_error_ = std::abs(spec[n / 2].real()) / n + (K > 0 ? std::hypot(c(K - 1), s(K - 1)) : 0.0);
}

MagneticPotential MagneticPotential::zero(double period) {
  MagneticPotential p;
  p.period_ = period;
  p.samples_ = Eigen::VectorXd::Zero(4);
  return p;
}

void MagneticPotential::eval(double x, double& psi, double& B) const {
  psi = mean_;
  B = 0.0;
  const int K = static_cast<int>(cos_.size());
  if (K == 0) return;
  const double w = 2.0 * kPi / period_;
  const std::complex<double> z = std::polar(1.0, w * x);
  std::complex<double> zk = z;
  for (int k = 1; k <= K; ++k) {
    psi += cos_(k - 1) * zk.real() + sin_(k - 1) * zk.imag();
    B += w * k * (sin_(k - 1) * zk.real() - cos_(k - 1) * zk.imag());
    zk *= z;
  }
}

double MagneticPotential::psi(double x) const {
  double p, b;
  eval(x, p, b);
  return p;
}

double MagneticPotential::B(double x) const {
  double p, b;
  eval(x, p, b);
  return b;
}

double MagneticPotential::sup_B() const {
  if (cos_.size() == 0) return 0.0;
  const int n = 16 * static_cast<int>(std::max<Eigen::Index>(samples_.size(), 16));
  double best = 0.0;
  for (int i = 0; i < n; ++i) best = std::max(best, std::abs(B(period_ * i / n)));
  return best;
}

EquilibriumState make_homogeneous_state(const EquilibriumProfile& profile, double period) {
  if (!(period > 0.0)) throw Error(ErrorKind::Config, "period must be positive");
  EquilibriumState st;
  st.profile = profile;
  st.potential = MagneticPotential::zero(period);
  st.homogeneous = true;
  return st;
}

// ---------------------------------------------------------------------------
// Center equation psi'' = g(psi)

namespace {

struct Phase {
  double psi, q;
};

Phase rk4(const std::function<double(double)>& g, Phase y, double h) {
  const double k1p = y.q, k1q = g(y.psi);
  const double k2p = y.q + 0.5 * h * k1q, k2q = g(y.psi + 0.5 * h * k1p);
  const double k3p = y.q + 0.5 * h * k2q, k3q = g(y.psi + 0.5 * h * k2p);
  const double k4p = y.q + h * k3q, k4q = g(y.psi + h * k3p);
  return {y.psi + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p), y.q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)};
}

Eigen::VectorXd sample_orbit(const std::function<double(double)>& g, double eps, double T, int steps, int n) {
  const int per = (steps + n - 1) / n;
  const double h = T / (static_cast<double>(per) * n);
  Eigen::VectorXd out(n);
  Phase y{-eps, 0.0};
  for (int k = 0; k < n; ++k) {
    out(k) = y.psi;
    for (int s = 0; s < per; ++s) y = rk4(g, y, h);
  }
  return out;
}

}  // namespace

CenterOrbit solve_center_orbit(const std::function<double(double)>& g, double gprime0, double epsilon,
                               const CenterOdeOptions& opts) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::Config, "epsilon must be positive");
  if (!(gprime0 < 0.0)) throw Error(ErrorKind::NotACenter, "g'(0) must be negative", gprime0);
  const double T_guess = 2.0 * kPi / std::sqrt(-gprime0);
  const double h = T_guess / opts.steps_per_period;
  const double t_max = opts.max_periods * T_guess;

  Phase y{-epsilon, 0.0};
  double t = 0.0;
  bool passed_max = false;
  double period = 0.0;
  while (true) {
    const Phase next = rk4(g, y, h);
    if (!std::isfinite(next.psi) || std::abs(next.psi) > 1e3 * epsilon)
      throw Error(ErrorKind::NotACenter, "orbit escapes the center basin", epsilon);
    if (!passed_max && y.q > 0.0 && next.q <= 0.0) passed_max = true;
    if (passed_max && y.q < 0.0 && next.q >= 0.0) {
      double lo = 0.0, hi = h;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (rk4(g, y, mid).q < 0.0)
          lo = mid;
        else
          hi = mid;
      }
      period = t + 0.5 * (lo + hi);
      const Phase end = rk4(g, y, 0.5 * (lo + hi));
      if (std::abs(end.psi + epsilon) > 1e-6 * epsilon)
        throw Error(ErrorKind::NotACenter, "orbit does not close", std::abs(end.psi + epsilon));
      break;
    }
    y = next;
    t += h;
    if (t > t_max) throw Error(ErrorKind::NotACenter, "orbit fails to close within the arc limit", epsilon);
  }

  CenterOrbit orb;
  orb.period = period;
  orb.samples = sample_orbit(g, epsilon, period, opts.steps_per_period, opts.n_samples);
  const Eigen::VectorXd fine = sample_orbit(g, epsilon, period, 2 * opts.steps_per_period, opts.n_samples);
  orb.richardson_error = (fine - orb.samples).cwiseAbs().maxCoeff();
  return orb;
}

EquilibriumState solve_equilibrium_potential(const EquilibriumProfile& profile, double epsilon,
                                             const VelocityQuadrature& quad, const CenterOdeOptions& opts) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::Config, "epsilon must be positive");
  const CenterCheck cc = check_center_conditions(profile, quad);
  if (!cc.ok) throw Error(ErrorKind::NotACenter, "center conditions g(0)=0, g'(0)<0 fail", cc.gprime0);

  // Chebyshev table of g on [-R, R]; the orbit must stay inside it.
  const double R = 4.0 * epsilon;
  const int nt = opts.table_nodes;
  Eigen::VectorXd tx(nt), tg(nt), tw(nt);
  for (int k = 0; k < nt; ++k) {
    const double ang = kPi * (k + 0.5) / nt;
    tx(k) = R * std::cos(ang);
    tg(k) = center_force(profile, quad, tx(k));
    tw(k) = ((k % 2) ? -1.0 : 1.0) * std::sin(ang);
  }
  auto g_table = [&](double psi) {
    if (std::abs(psi) > R) throw Error(ErrorKind::NotACenter, "orbit leaves the tabulated range", psi);
    double num = 0.0, den = 0.0;
    for (int k = 0; k < nt; ++k) {
      const double d = psi - tx(k);
      if (d == 0.0) return tg(k);
      num += tw(k) * tg(k) / d;
      den += tw(k) / d;
    }
    return num / den;
  };

  const CenterOrbit orb = solve_center_orbit(g_table, cc.gprime0, epsilon, opts);

  EquilibriumState st;
  st.profile = profile;
  st.potential = MagneticPotential(orb.period, orb.samples);
  st.homogeneous = false;
  st.epsilon = epsilon;
  st.richardson_error = orb.richardson_error;
  st.p_cr = 2.0 * kPi / std::sqrt(-cc.gprime0);

  const Eigen::VectorXd d2 = spectral_derivative(orb.period, orb.samples, 2);
  const Eigen::VectorXd d1 = spectral_derivative(orb.period, orb.samples, 1);
  double res = 0.0;
  for (Eigen::Index k = 0; k < orb.samples.size(); ++k)
    res = std::max(res, std::abs(d2(k) - center_force(profile, quad, orb.samples(k))));
  st.ode_residual = res;
  st.psi_c1 = orb.samples.cwiseAbs().maxCoeff() + d1.cwiseAbs().maxCoeff();
  if (res > opts.tol_equil)
    throw Error(ErrorKind::NonConvergence, "equilibrium ODE residual above tolerance", res);
  return st;
}

StabilityCondition evaluate_stabcond(const EquilibriumProfile& profile, const VelocityQuadrature& quad,
                                     double gprime0) {
  StabilityCondition sc;
  sc.sup_mu_e = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < quad.size(); ++j) {
    const double v1 = quad.v1(j), v2 = quad.v2(j);
    const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
    const double me = profile.mu_e(-1, e, v2);
    sc.sup_mu_e = std::max(sc.sup_mu_e, me);
    if (me > 0.0) sc.measure_Sb += quad.w(j);
  }
  sc.p_cr = gprime0 < 0.0 ? 2.0 * kPi / std::sqrt(-gprime0) : std::numeric_limits<double>::infinity();
  sc.bound = sc.measure_Sb > 0.0 ? kPi * kPi / (3.0 * sc.p_cr * sc.p_cr * sc.measure_Sb)
                                 : std::numeric_limits<double>::infinity();
  sc.satisfied = sc.sup_mu_e < sc.bound;
  return sc;
}

}  // namespace vmspec
