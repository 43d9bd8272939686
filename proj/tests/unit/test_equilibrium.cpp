#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vmspec/equilibrium.hpp"

using namespace vmspec;
using std::numbers::pi;

namespace {

// Weak-field profile at its default parameters, written out by hand.
double wf_mu(double e, double p) {
  return (std::exp(-(e - 1) / 0.5) + 0.01 * std::exp(-std::pow((e - 3) / 0.15, 2))) * (1 + 2 * p * p) *
         std::exp(-0.2 * p * p);
}

// g'(0) = -2 int vhat2 d/dp mu(<v>, v2) dv on a dense Cartesian trapezoid grid.
double dense_gprime0(double h, double L) {
  const int n = static_cast<int>(std::round(2 * L / h));
  double s = 0.0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double v1 = -L + i * h, v2 = -L + j * h;
      const double e = std::sqrt(1 + v1 * v1 + v2 * v2);
      const double dp = 1e-5;
      const double mp = (wf_mu(e, v2 + dp) - wf_mu(e, v2 - dp)) / (2 * dp);
      s += v2 / e * mp;
    }
  return -2 * s * h * h;
}

}  // namespace

TEST_CASE("homogeneous profile passes validation") {
  const EquilibriumProfile prof = paper_homogeneous_profile();
  const ValidationReport r = validate_profile(prof, prof.weight);
  CHECK(r.pass);
  CHECK(r.max_negativity == 0.0);
  CHECK(r.max_symmetry_violation == 0.0);
  CHECK(r.e_max > 2.0);
  CHECK(prof.mu(-1, 1.5, 0.0) == doctest::Approx(0.5));
  CHECK(prof.mu(-1, 2.5, 0.0) == doctest::Approx(std::exp(-0.25)));
}

TEST_CASE("zero profile passes with zero violations") {
  const EquilibriumProfile prof = zero_profile();
  const ValidationReport r = validate_profile(prof, {1.0, 12.0});
  CHECK(r.pass);
  CHECK(r.max_negativity == 0.0);
  CHECK(r.max_decay_violation == 0.0);
  CHECK(r.max_symmetry_violation == 0.0);
}

TEST_CASE("growing profile violates the decay bound at large energy") {
  EquilibriumProfile prof = zero_profile();
  prof.mu_minus = [](double e, double) { return e; };
  prof.mu_minus_e = [](double, double) { return 1.0; };
  prof.mu_minus_p = [](double, double) { return 0.0; };
  const ValidationReport r = validate_profile(prof, {1e6, 3.0});
  CHECK_FALSE(r.pass);
  CHECK(r.max_decay_violation > 0.0);
  CHECK(r.decay_violation_e > 10.0);
}

TEST_CASE("non-finite profile values are reported") {
  EquilibriumProfile prof = zero_profile();
  prof.mu_minus = [](double e, double) { return e > 5 ? std::nan("") : 0.0; };
  try {
    validate_profile(prof, {1.0, 12.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ProfileEvaluation);
  }
}

TEST_CASE("energies below one are rejected") {
  const EquilibriumProfile prof = paper_homogeneous_profile();
  CHECK_THROWS_AS(prof.mu(-1, 0.9, 0.0), Error);
}

TEST_CASE("species symmetry of mu_e moments") {
  const EquilibriumProfile prof = weakfield_profile();
  const VelocityQuadrature q = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 16, 64);
  auto moment = [&](int sigma, bool reflect) {
    return integrate_velocity(q, [&](double v1, double v2) {
      const double e = std::sqrt(1 + v1 * v1 + v2 * v2);
      return std::abs(prof.mu_e(sigma, e, reflect ? -v2 : v2));
    });
  };
  const double a = moment(-1, false), b = moment(1, true);
  CHECK(std::abs(a - b) <= 1e-10 * std::abs(a));
  CHECK(prof.mu(1, 1.7, 0.4) == doctest::Approx(prof.mu(-1, 1.7, -0.4)).epsilon(1e-15));
  CHECK(prof.mu_p(1, 1.7, 0.4) == doctest::Approx(-prof.mu_p(-1, 1.7, -0.4)).epsilon(1e-15));
}

TEST_CASE("center conditions") {
  SUBCASE("zero profile is not a center") {
    const VelocityQuadrature q = build_velocity_quadrature({1.0, 12.0}, {}, 1e-12, 8, 32);
    const CenterCheck c = check_center_conditions(zero_profile(), q);
    CHECK(c.g0 == 0.0);
    CHECK(c.gprime0 == 0.0);
    CHECK_FALSE(c.ok);
  }
  SUBCASE("even profile has g(0) = 0") {
    const EquilibriumProfile prof = paper_homogeneous_profile();
    const VelocityQuadrature q = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 16, 64);
    CHECK(std::abs(center_force(prof, q, 0.0)) <= 1e-12);
  }
  SUBCASE("weak-field g'(0) agrees with a dense Cartesian oracle") {
    const EquilibriumProfile prof = weakfield_profile();
    const VelocityQuadrature q = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 16, 64);
    const CenterCheck c = check_center_conditions(prof, q);
    CHECK(c.ok);
    const double oracle = dense_gprime0(0.02, 24.0);
    CHECK(std::abs(c.gprime0 - oracle) <= 1e-6 * std::abs(oracle));
    const double p_cr = 2 * pi / std::sqrt(-oracle);
    CHECK(std::abs(p_cr - 2.5742983947918607) <= 1e-6);
  }
}

TEST_CASE("harmonic oscillator stand-in") {
  const double eps = 0.3;
  CenterOdeOptions o;
  const CenterOrbit orb = solve_center_orbit([](double psi) { return -psi; }, -1.0, eps, o);
  CHECK(orb.period == doctest::Approx(2 * pi).epsilon(1e-9));
  const int n = static_cast<int>(orb.samples.size());
  for (int k = 0; k < n; ++k)
    CHECK(std::abs(orb.samples(k) + eps * std::cos(2 * pi * k / n)) <= 1e-9);
}

TEST_CASE("weak-field potential family") {
  const EquilibriumProfile prof = weakfield_profile();
  const VelocityQuadrature q = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 8, 64);
  double last_c1 = 1e300, last_gap = 1e300;
  for (double eps : {0.05, 0.025, 0.0125}) {
    const EquilibriumState st = solve_equilibrium_potential(prof, eps, q);
    CHECK_FALSE(st.homogeneous);
    CHECK(st.ode_residual <= 1e-6);
    const Eigen::VectorXd& s = st.potential.samples();
    CHECK(s(0) == doctest::Approx(-eps).epsilon(1e-9));
    CHECK(s.minCoeff() == doctest::Approx(s(0)));
    CHECK(s(s.size() / 2) == doctest::Approx(s.maxCoeff()));
    for (Eigen::Index k = 1; k < s.size(); ++k) CHECK(std::abs(s(k) - s(s.size() - k)) <= 1e-9);
    // mean of B0 over a period
    double mb = 0.0;
    const int m = 256;
    for (int k = 0; k < m; ++k) mb += st.potential.B(k * st.period() / m);
    CHECK(std::abs(mb / m) <= 1e-12);
    CHECK(st.psi_c1 < last_c1);
    const double gap = std::abs(st.period() / st.p_cr - 1.0);
    CHECK(gap < last_gap);
    last_c1 = st.psi_c1;
    last_gap = gap;
  }
  CHECK(last_gap <= 0.02);
}

TEST_CASE("magnetic potential interpolation") {
  const double P = 2.0;
  Eigen::VectorXd s(32);
  for (int k = 0; k < 32; ++k) s(k) = 0.1 * std::sin(2 * pi * k / 32) + 0.02 * std::cos(4 * pi * k / 32);
  const MagneticPotential pot(P, s);
  const double x = 0.37;
  CHECK(pot.psi(x) == doctest::Approx(0.1 * std::sin(pi * x) + 0.02 * std::cos(2 * pi * x)).epsilon(1e-12));
  CHECK(pot.B(x) == doctest::Approx(0.1 * pi * std::cos(pi * x) - 0.04 * pi * std::sin(2 * pi * x)).epsilon(1e-12));
  CHECK(pot.psi(x + P) == doctest::Approx(pot.psi(x)));
  CHECK(MagneticPotential::zero(P).is_zero());
}

TEST_CASE("stability condition for the weak-field profile") {
  const EquilibriumProfile prof = weakfield_profile();
  const VelocityQuadrature q = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 16, 64);
  const CenterCheck c = check_center_conditions(prof, q);
  const StabilityCondition sc = evaluate_stabcond(prof, q, c.gprime0);
  CHECK(sc.p_cr == doctest::Approx(2 * pi / std::sqrt(-c.gprime0)));
  CHECK(sc.bound == doctest::Approx(pi * pi / (3 * sc.p_cr * sc.p_cr * sc.measure_Sb)));
  CHECK(sc.satisfied == (sc.sup_mu_e < sc.bound));
  CHECK(sc.measure_Sb > 0.0);
}

TEST_CASE("profile lookup") {
  CHECK(make_profile("zero", {}, {1.0, 12.0}).name == "zero");
  CHECK_THROWS_AS(make_profile("nope", {}, {1.0, 12.0}), Error);
  CHECK_THROWS_AS(weakfield_profile({{"bogus", 1.0}}), Error);
}
