#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "vmspec/operators.hpp"
#include "vmspec/spectra.hpp"

using namespace vmspec;
using std::numbers::pi;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

// Anisotropic homogeneous state: weak-field mu at 1.5 times its critical period.
struct Aniso {
  EquilibriumProfile prof = weakfield_profile();
  VelocityQuadrature quad = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 8, 32);
  double P = 1.5 * 2.5742983947918607;
  EquilibriumState st = make_homogeneous_state(prof, P);
};

}  // namespace

TEST_CASE("periodic smoothing weights") {
  const int n = 32;
  const double T = 3.0;
  const Eigen::VectorXd w0 = periodic_smoothing_weights(0.0, T, n);
  CHECK((w0.array() - 1.0 / n).abs().maxCoeff() <= 1e-15);
  for (double lam : {0.01, 0.7, 40.0}) {
    const Eigen::VectorXd w = periodic_smoothing_weights(lam, T, n);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-13));
    for (int m : {1, 3, 15}) {
      const double om = 2 * pi * m / T;
      double c = 0.0;
      for (int q = 0; q < n; ++q) c += w(q) * std::cos(om * (-q * T / n));
      CHECK(c == doctest::Approx(lam * lam / (lam * lam + om * om)).epsilon(1e-12));
    }
  }
}

TEST_CASE("smoothing on a homogeneous state") {
  const double P = 2 * pi;
  const EquilibriumState st = make_homogeneous_state(paper_homogeneous_profile(), P);
  const PhaseFunction one = [](const PhasePoint&) { return 1.0; };
  const PhaseFunction h = [P](const PhasePoint& q) { return std::cos(2 * pi * q.x / P); };
  const PhasePoint pt{0.4, 0.6, -0.8};
  const double kv = 2 * pi / P * pt.vhat1();
  for (bool periodic : {true, false}) {
    SmoothingOptions o;
    o.periodic = periodic;
    for (double lam : {0.3, 1.0, 5.0}) {
      const SmoothingEvaluator ev = make_smoothing_evaluator(st, lam, o);
      const double q1 = apply_smoothing(ev, -1, one, pt);
      CHECK(q1 <= 1.0 + 1e-14);
      CHECK(q1 >= 1.0 - 1e-10 - 1e-14);
      const std::complex<double> m = lam / std::complex<double>(lam, kv);
      const double exact = (m * std::exp(std::complex<double>(0, 2 * pi * pt.x / P))).real();
      CHECK(apply_smoothing(ev, 1, h, pt) == doctest::Approx(exact).epsilon(1e-8));
    }
  }
  // lambda limits
  const double big = apply_smoothing(make_smoothing_evaluator(st, 1e4), 1, h, pt);
  CHECK(std::abs(big - h(pt)) <= 1e-3);
  const double small = apply_smoothing(make_smoothing_evaluator(st, 1e-5), 1, h, pt);
  CHECK(std::abs(small) <= 1e-4);
  CHECK_THROWS_AS(make_smoothing_evaluator(st, 0.0), Error);
}

TEST_CASE("orbit averages") {
  const double P = 2 * pi;
  const EquilibriumState st = make_homogeneous_state(paper_homogeneous_profile(), P);
  const ProjectionEvaluator pe = make_projection_evaluator(st);
  const PhaseFunction k = [P](const PhasePoint& q) { return q.vhat1() * std::cos(2 * pi * q.x / P); };
  CHECK(std::abs(apply_projection(pe, -1, k, {0.3, 0.5, 0.2})) <= 1e-14);
  const PhaseFunction inv = [](const PhasePoint& q) { return std::exp(-q.e()) * (1 + q.v2 * q.v2); };
  CHECK(apply_projection(pe, 1, inv, {0.3, 0.5, 0.2}) == doctest::Approx(inv({0.3, 0.5, 0.2})));
  CHECK(apply_projection(pe, 1, k, {0.3, 0.0, 0.2}) == doctest::Approx(k({0.3, 0.0, 0.2})));
  CHECK_THROWS_AS(make_projection_evaluator(st, 32), Error);
}

TEST_CASE("orbit averages on the weak-field state") {
  const EquilibriumProfile prof = weakfield_profile();
  const VelocityQuadrature q = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 8, 64);
  const EquilibriumState st = solve_equilibrium_potential(prof, 0.05, q);
  const ProjectionEvaluator pe = make_projection_evaluator(st);
  const double P = st.period();
  const PhaseFunction h = [P](const PhasePoint& p) { return std::cos(2 * pi * p.x / P) + 0.3 * p.vhat2(); };
  const PhaseFunction odd = [P](const PhasePoint& p) { return p.vhat1() * (1 + std::sin(2 * pi * p.x / P)); };
  for (const PhasePoint& p : {PhasePoint{0.3, 0.8, 0.2}, PhasePoint{1.1, -0.5, 0.7}, PhasePoint{0.2, 0.05, 0.6}}) {
    const double ph = apply_projection(pe, -1, h, p);
    // idempotence
    const PhaseFunction avg = [&](const PhasePoint& r) { return apply_projection(pe, -1, h, r); };
    CHECK(std::abs(apply_projection(pe, -1, avg, p) - ph) <= 1e-8);
    // parity in v1
    CHECK(std::abs(apply_projection(pe, -1, h, {p.x, -p.v1, p.v2}) - ph) <= 1e-8);
    CHECK(std::abs(apply_projection(pe, -1, odd, {p.x, -p.v1, p.v2}) + apply_projection(pe, -1, odd, p)) <= 1e-8);
  }
  // small-lambda smoothing agrees with the orbit average
  const PhasePoint p{0.3, 0.8, 0.2};
  const double qs = apply_smoothing(make_smoothing_evaluator(st, 1e-3), -1, h, p);
  CHECK(std::abs(qs - apply_projection(pe, -1, h, p)) <= 1e-3);
}

TEST_CASE("free Laplacian blocks for the zero profile") {
  const double P = 3.0;
  const EquilibriumState st = make_homogeneous_state(zero_profile(), P);
  const VelocityQuadrature q = build_velocity_quadrature({1.0, 12.0}, {}, 1e-12, 4, 8);
  const FourierBasis b = build_fourier_basis(P, 6, false);
  for (double lam : {0.0, 0.8}) {
    const OperatorBlocks blk = assemble_blocks(st, lam, b, q);
    const FourierBasis b0 = build_fourier_basis(P, 6, true);
    CHECK(max_abs(blk.A1 - Eigen::MatrixXd(b0.kappa2.asDiagonal())) <= 1e-12);
    Eigen::VectorXd d = b.kappa2.array() + lam * lam;
    CHECK(max_abs(blk.A2 - Eigen::MatrixXd(d.asDiagonal())) <= 1e-12);
    CHECK(max_abs(blk.B) == 0.0);
    CHECK(blk.C.norm() == 0.0);
    CHECK(blk.D.norm() == 0.0);
    CHECK(blk.l == 0.0);
  }
}

TEST_CASE("homogeneous profile blocks at lambda = 0") {
  const EquilibriumProfile prof = paper_homogeneous_profile();
  const VelocityQuadrature q = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 32, 64);
  const double P = 2 * pi;
  const EquilibriumState st = make_homogeneous_state(prof, P);
  const BlockAssembler as(st, build_fourier_basis(P, 8, false), q);
  CHECK(as.fast_path());
  const OperatorBlocks b0 = as.assemble(0.0);
  const double I = 1.5 - std::log(2.0), II = -2.531116789945364;
  CHECK(b0.l == doctest::Approx(2 * pi * (I + II)).epsilon(1e-8));
  CHECK(b0.l < 0.0);
  CHECK(max_abs(b0.B) <= 1e-12);
  CHECK(b0.C.norm() <= 1e-12);
  CHECK(b0.D.norm() <= 1e-12);
  CHECK(b0.vanishing_moment <= 1e-8);
  CHECK(b0.constant_residual <= 1e-10);
  CHECK(b0.parity_moment <= 1e-10);
  // constant-mode entry of A2: P int mu (1 + v1^2) / <v>^3 over both species
  const double c = 2 * P * integrate_velocity(q, [&](double v1, double v2) {
    const double e = std::sqrt(1 + v1 * v1 + v2 * v2);
    return prof.mu(-1, e, v2) * (1 + v1 * v1) / (e * e * e);
  });
  CHECK(b0.A2(0, 0) == doctest::Approx(1.0 / P * c).epsilon(1e-8));
}

TEST_CASE("orbit assembly agrees with the closed form on a homogeneous state") {
  Aniso a;
  AssemblyOptions gen;
  gen.force_generic = true;
  const FourierBasis b = build_fourier_basis(a.P, 4, false);
  const BlockAssembler fast(a.st, b, a.quad), slow(a.st, b, a.quad, gen);
  CHECK(fast.fast_path());
  CHECK_FALSE(slow.fast_path());
  for (double lam : {0.0, 0.3, 2.0}) {
    const OperatorBlocks x = fast.assemble(lam), y = slow.assemble(lam);
    const double s = max_abs(x.A2);
    CHECK(max_abs(x.A1 - y.A1) <= 1e-9 * s);
    CHECK(max_abs(x.A2 - y.A2) <= 1e-9 * s);
    CHECK(max_abs(x.B - y.B) <= 1e-9 * s);
    CHECK((x.C - y.C).norm() <= 1e-9 * s);
    CHECK((x.D - y.D).norm() <= 1e-9 * s);
    CHECK(x.l == doctest::Approx(y.l).epsilon(1e-9));
    CHECK(y.adjoint_defect <= 1e-6);
    CHECK(y.sym_defect_A1 <= 1e-8);
    CHECK(y.sym_defect_A2 <= 1e-8);
    CHECK(y.vanishing_moment <= 1e-8);
  }
}

TEST_CASE("lambda dependence of the blocks") {
  Aniso a;
  const BlockAssembler as(a.st, build_fourier_basis(a.P, 8, false), a.quad);
  auto diff = [&](double l1, double l2) {
    const OperatorBlocks x = as.assemble(l1), y = as.assemble(l2);
    return std::max({max_abs(x.A1 - y.A1), max_abs(x.A2 - y.A2), max_abs(x.B - y.B), (x.C - y.C).cwiseAbs().maxCoeff(),
                     (x.D - y.D).cwiseAbs().maxCoeff(), std::abs(x.l - y.l)});
  };
  for (double lam : {0.1, 1.0, 10.0}) {
    const double d1 = diff(lam, lam + 1e-2), d2 = diff(lam, lam + 5e-3);
    CHECK(d1 / d2 == doctest::Approx(2.0).epsilon(0.05));
  }
  const OperatorBlocks b1 = as.assemble(1.0), b3 = as.assemble(1e3);
  // translation invariance decouples phi and psi
  CHECK(max_abs(b1.B) <= 1e-12 * max_abs(b1.A2));
  CHECK(max_abs(b3.B) <= 1e-12 * max_abs(b3.A2));
  CHECK(b3.C.norm() <= 1e-2 * std::max(b1.C.norm(), 1e-300) + 1e-12);
  CHECK(b3.D.norm() <= 1e-2 * std::max(b1.D.norm(), 1e-300) + 1e-12);
  const Eigen::MatrixXd lap = as.basis0().kappa2.asDiagonal();
  CHECK(max_abs(b3.A1 - lap) <= 1e-2 * max_abs(lap));
  double lmax = 0.0;
  for (double lam : default_lambda_grid(a.P, 12)) lmax = std::max(lmax, std::abs(as.assemble(lam).l));
  CHECK(lmax <= 2 * std::abs(as.assemble(0.0).l) + 1.0);
}

TEST_CASE("truncated matrix operator") {
  Aniso a;
  const BlockAssembler as(a.st, build_fourier_basis(a.P, 8, false), a.quad);
  const OperatorBlocks b0 = as.assemble(0.0);
  const EigenContext ctx = make_eigen_context(b0);
  const int n = 4;
  const Eigen::MatrixXd M0 = assemble_M(b0, n, ctx);
  CHECK(max_abs(M0 - M0.transpose()) == 0.0);
  const Eigen::VectorXd ev = symmetric_eigen(M0).values;
  std::vector<double> expect;
  for (int i = 0; i < n; ++i) expect.push_back(-ctx.alpha(i));
  for (int i = 0; i < n; ++i) expect.push_back(ctx.beta(i));
  expect.push_back(a.P * ctx.l0);
  std::sort(expect.begin(), expect.end());
  for (int i = 0; i < 2 * n + 1; ++i) CHECK(ev(i) == doctest::Approx(expect[i]).epsilon(1e-10));
  CHECK_THROWS_AS(assemble_M(b0, 9, ctx), Error);

  const Eigen::MatrixXd Ml = assemble_M(as.assemble(0.7), n, ctx);
  CHECK(max_abs(Ml - Ml.transpose()) == 0.0);
  CHECK(Ml(2 * n, 2 * n) == doctest::Approx(-a.P * (0.49 - as.assemble(0.7).l)));
}

TEST_CASE("zero profile truncated spectrum") {
  const double P = 2.0;
  const EquilibriumState st = make_homogeneous_state(zero_profile(), P);
  const VelocityQuadrature q = build_velocity_quadrature({1.0, 12.0}, {}, 1e-12, 4, 8);
  const BlockAssembler as(st, build_fourier_basis(P, 6, false), q);
  const OperatorBlocks b0 = as.assemble(0.0);
  // A2 has the constant in its kernel, A1 does not.
  const EigenContext ctx = make_eigen_context(b0);
  const double lam = 1.3;
  const int n = 3;
  const Eigen::VectorXd ev = symmetric_eigen(assemble_M(as.assemble(lam), n, ctx)).values;
  Eigen::VectorXd e(2 * n + 1);
  e << -ctx.alpha.head(n), ctx.beta.head(n).array() + lam * lam, -P * lam * lam;
  std::sort(e.data(), e.data() + e.size());
  CHECK((ev - e).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(ctx.alpha(0) == doctest::Approx(std::pow(2 * pi / P, 2)));
  CHECK(std::abs(ctx.beta(0)) <= 1e-12);
}

TEST_CASE("degenerate A1 kernel aborts") {
  OperatorBlocks b;
  b.A1 = Eigen::Vector3d(0.0, 1.0, 2.0).asDiagonal();
  b.A2 = Eigen::Matrix4d::Identity();
  b.l = -1.0;
  b.period = 1.0;
  try {
    make_eigen_context(b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateKernel);
  }
}

TEST_CASE("weak-field assembly diagnostics") {
  const EquilibriumProfile prof = weakfield_profile();
  const VelocityQuadrature q = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 8, 32);
  const EquilibriumState st = solve_equilibrium_potential(prof, 0.05, q);
  AssemblyOptions o;
  o.tol_sym = 1e-2;
  const BlockAssembler as(st, build_fourier_basis(st.period(), 4, false), q, o);
  CHECK_FALSE(as.fast_path());
  const OrbitCacheStats cs = as.cache_stats();
  CHECK(cs.passing + cs.trapped > 0);
  CHECK(cs.max_drift <= 1e-8);
  const OperatorBlocks b0 = as.assemble(0.0);
  CHECK(b0.vanishing_moment <= 1e-8);
  CHECK(max_abs(b0.B) <= 1e-6);
  CHECK(b0.C.norm() <= 1e-6);
  CHECK(b0.D.norm() <= 1e-6);
  CHECK(max_abs(b0.A1 - b0.A1.transpose()) == 0.0);
  CHECK(b0.sym_defect_A2 <= 1e-2);

  AssemblyOptions strict;
  strict.tol_sym = 1e-12;
  const BlockAssembler tight(st, build_fourier_basis(st.period(), 4, false), q, strict);
  try {
    tight.assemble(0.0);
    FAIL("expected an assembly inconsistency");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AssemblyInconsistency);
  }
}

TEST_CASE("block export") {
  const EquilibriumState st = make_homogeneous_state(zero_profile(), 1.0);
  const VelocityQuadrature q = build_velocity_quadrature({1.0, 12.0}, {}, 1e-12, 4, 8);
  const OperatorBlocks b = assemble_blocks(st, 0.5, build_fourier_basis(1.0, 2, false), q);
  std::ostringstream os;
  write_blocks_csv(os, b);
  CHECK(os.str().rfind("block,row,col,value\n", 0) == 0);
  CHECK(os.str().find("A2,2,2,") != std::string::npos);
  CHECK(blocks_manifest_json(b, 1e-6).find("\"lambda\"") != std::string::npos);
}
