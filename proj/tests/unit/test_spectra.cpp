#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "vmspec/spectra.hpp"

using namespace vmspec;

TEST_CASE("small symmetric eigenproblems") {
  const EigenDecomposition d = symmetric_eigen(Eigen::Vector3d(2.0, -1.0, 0.0).asDiagonal().toDenseMatrix());
  CHECK(d.values(0) == -1.0);
  CHECK(d.values(1) == 0.0);
  CHECK(d.values(2) == 2.0);
  Eigen::Matrix2d s;
  s << 0, 1, 1, 0;
  const EigenDecomposition e = symmetric_eigen(s);
  CHECK(e.values(0) == doctest::Approx(-1.0));
  CHECK(e.values(1) == doctest::Approx(1.0));
  for (int c = 0; c < 2; ++c) CHECK(e.vectors(0, c) > 0.0);
}

TEST_CASE("random symmetric reconstruction") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd A(50, 50);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j <= i; ++j) A(i, j) = A(j, i) = nd(rng);
  const EigenDecomposition d = symmetric_eigen(A);
  const double scale = A.cwiseAbs().maxCoeff();
  CHECK((d.vectors * d.values.asDiagonal() * d.vectors.transpose() - A).cwiseAbs().maxCoeff() <= 1e-9 * scale);
  CHECK(d.residual <= 1e-9 * scale);
  CHECK(d.orthogonality <= 1e-9);
  for (int i = 1; i < 50; ++i) CHECK(d.values(i) >= d.values(i - 1));
}

TEST_CASE("degenerate eigenspaces get a canonical basis") {
  // Same matrix in two rotated-equivalent forms must yield identical vectors.
  Eigen::Matrix3d A = Eigen::Vector3d(1.0, 1.0, 3.0).asDiagonal();
  const EigenDecomposition a = symmetric_eigen(A);
  Eigen::Matrix3d Q = Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const EigenDecomposition b = symmetric_eigen(Q * A * Q.transpose());
  const EigenDecomposition c = symmetric_eigen(Q * A * Q.transpose());
  CHECK((b.vectors - c.vectors).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.vectors.leftCols(2) - Eigen::Matrix<double, 3, 2>::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::abs(b.vectors(0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("asymmetric input is rejected") {
  Eigen::Matrix2d m;
  m << 1, 2, 2.1, 1;
  try {
    symmetric_eigen(m);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AssemblyInconsistency);
  }
  CHECK_NOTHROW(symmetric_eigen(m, 0.1));
}

TEST_CASE("sign counts") {
  Eigen::VectorXd v(6);
  v << -2, -1e-12, 0, 1e-9, 3, 5;
  const CountReport c = count_signs(v, 1e-8);
  CHECK(c.neg == 1);
  CHECK(c.zero == 3);
  CHECK(c.pos == 2);
  CHECK(c.neg + c.zero + c.pos == 6);
}

TEST_CASE("instability verdicts") {
  CHECK(verdict(0, 1, -1.0, true, 1e-8) == Verdict::UnstableT1);
  CHECK(verdict(0, 0, -1.0, true, 1e-8) == Verdict::Inconclusive);
  CHECK(verdict(1, 0, -1.0, true, 1e-8) == Verdict::UnstableT2);
  CHECK(verdict(1, 0, -1.0, false, 1e-8) == Verdict::Inconclusive);
  CHECK(verdict(0, 1, 1.0, true, 1e-8) == Verdict::Inconclusive);  // 1 = 0 + 1
  CHECK(verdict(0, 2, 1.0, false, 1e-8) == Verdict::UnstableT1);
  try {
    verdict(0, 1, 1e-12, true, 1e-8);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::HypothesisFailure);
    CHECK(std::string(e.what()).find("l0 ~ 0") != std::string::npos);
  }
  CHECK(std::string(to_string(Verdict::UnstableT2)) == "UNSTABLE_T2");
  CHECK(predicted_count(8, 0, 0, -1.0) == 9);
  CHECK(predicted_count(8, 1, 3, 2.0) == 10);
}

TEST_CASE("lambda grid") {
  const Eigen::VectorXd g = default_lambda_grid(2.0, 48);
  CHECK(g.size() == 48);
  const double k1 = 2 * 3.14159265358979323846 / 2.0;
  CHECK(g(0) == doctest::Approx(1e-2 * k1));
  CHECK(g(47) == doctest::Approx(1e2 * k1));
  CHECK_THROWS_AS(default_lambda_grid(2.0, 1), Error);
}

TEST_CASE("synthetic crossing") {
  const MatrixFamily f = [](double l) {
    Eigen::MatrixXd m = Eigen::Vector3d(1.0 - l, 2.0 + l, -3.0).asDiagonal();
    return m;
  };
  Eigen::VectorXd grid(5);
  grid << 0.1, 0.5, 0.9, 1.3, 2.0;
  const SweepResult sw = sweep(f, grid);
  REQUIRE(sw.crossings.size() == 1);
  CHECK(sw.crossings[0].first == 2);
  CHECK(sw.counts.front().neg == 1);
  CHECK(sw.counts.back().neg == 2);
  const KernelCrossing kc = locate_kernel(f, 0.9, 1.3, 1e-10);
  CHECK(std::abs(kc.lambda_star - 1.0) <= 1e-8);
  CHECK(std::abs(kc.u(0)) == doctest::Approx(1.0));
  std::ostringstream os;
  write_sweep_csv(os, sw);
  CHECK(os.str().rfind("lambda,eig_index,eigenvalue\n", 0) == 0);
  CHECK_THROWS_AS(sweep(f, Eigen::Vector2d(1.0, 0.5)), Error);
}

TEST_CASE("count jump without a zero crossing") {
  const MatrixFamily jump = [](double l) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = l < 1.0 ? 1.0 / (l - 1.0) : 1.0;  // arrives from -infinity
    return m;
  };
  try {
    locate_kernel(jump, 0.5, 1.5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SpuriousInterval);
  }
  const MatrixFamily flat = [](double) { return Eigen::MatrixXd::Identity(2, 2).eval(); };
  try {
    locate_kernel(flat, 0.5, 1.5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoCrossing);
  }
}

TEST_CASE("zero profile sweep keeps n+1 negative eigenvalues") {
  const double P = 2.0;
  const EquilibriumState st = make_homogeneous_state(zero_profile(), P);
  const VelocityQuadrature q = build_velocity_quadrature({1.0, 12.0}, {}, 1e-12, 4, 8);
  const BlockAssembler as(st, build_fourier_basis(P, 8, false), q);
  const EigenContext ctx = make_eigen_context(as.assemble(0.0));
  for (int n : {2, 4, 8}) {
    const SweepResult sw = sweep(as, ctx, n, default_lambda_grid(P, 12));
    for (const auto& c : sw.counts) CHECK(c.neg == n + 1);
    CHECK(sw.crossings.empty());
  }
}

TEST_CASE("anisotropic state: crossing, grid refinement, truncation") {
  const EquilibriumProfile prof = weakfield_profile();
  const VelocityQuadrature q = build_velocity_quadrature(prof.weight, prof.kinks, 1e-12, 8, 32);
  const double P = 1.5 * 2.5742983947918607;
  const EquilibriumState st = make_homogeneous_state(prof, P);
  const BlockAssembler as(st, build_fourier_basis(P, 8, false), q);
  const OperatorBlocks b0 = as.assemble(0.0);
  const EigenContext ctx = make_eigen_context(b0);
  CHECK(ctx.l0 < 0.0);
  const int negA2 = count_signs(ctx.beta, 1e-8 * b0.A2.cwiseAbs().maxCoeff()).neg;
  CHECK(negA2 >= 1);
  CHECK(verdict(0, negA2, ctx.l0, true, 1e-8) == Verdict::UnstableT1);

  const Eigen::VectorXd g = default_lambda_grid(P, 16);
  const SweepResult sw = sweep(as, ctx, 4, g);
  REQUIRE_FALSE(sw.crossings.empty());
  CHECK(sw.counts.front().neg == predicted_count(4, 0, negA2, ctx.l0));
  CHECK(sw.counts.back().neg == 5);
  const KernelCrossing kc = locate_kernel(sw, as, ctx, 4, 0);
  CHECK(kc.lambda_star > g(0));
  CHECK(kc.lambda_star < g(g.size() - 1));
  CHECK(kc.phi.norm() + kc.psi.norm() + std::abs(kc.b) == doctest::Approx(1.0));
  CHECK(kc.psi.norm() + std::abs(kc.b) > 1e-6);
  CHECK(kc.min_abs_eig <= 1e-8 * assemble_M(as.assemble(kc.lambda_star), 4, ctx).cwiseAbs().maxCoeff());

  // halving the grid step only splits crossing intervals
  Eigen::VectorXd fine(2 * g.size() - 1);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    fine(2 * i) = g(i);
    if (i + 1 < g.size()) fine(2 * i + 1) = std::sqrt(g(i) * g(i + 1));
  }
  const SweepResult sf = sweep(as, ctx, 4, fine);
  REQUIRE(sf.crossings.size() == sw.crossings.size());
  for (size_t c = 0; c < sw.crossings.size(); ++c) {
    CHECK(fine(sf.crossings[c].first) >= g(sw.crossings[c].first));
    CHECK(fine(sf.crossings[c].second) <= g(sw.crossings[c].second));
  }

  // truncation stability
  const KernelCrossing k8 = locate_kernel(sweep(as, ctx, 8, g), as, ctx, 8, 0);
  CHECK(std::abs(k8.lambda_star - kc.lambda_star) <= 0.05 * kc.lambda_star);

  // the verdict does not depend on the zero band
  for (double tol : {1e-10, 1e-8, 1e-6}) {
    const int a2 = count_signs(ctx.beta, tol * b0.A2.cwiseAbs().maxCoeff()).neg;
    const int a1 = count_signs(ctx.alpha, tol * b0.A1.cwiseAbs().maxCoeff()).neg;
    CHECK(verdict(a1, a2, ctx.l0, true, tol) == Verdict::UnstableT1);
  }
}
