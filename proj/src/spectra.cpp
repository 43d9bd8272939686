#include "vmspec/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>

#include "vmspec/error.hpp"

namespace vmspec {

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double big = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-10 * big) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

// Replaces the columns of V spanning one eigenspace by a basis built from the
// coordinate vectors in index order.
void canonical_basis(Eigen::Ref<Eigen::MatrixXd> V) {
  const Eigen::Index n = V.rows(), k = V.cols();
  const Eigen::MatrixXd span = V;
  Eigen::MatrixXd out(n, k);
  Eigen::Index found = 0;
  for (Eigen::Index i = 0; i < n && found < k; ++i) {
    Eigen::VectorXd p = span * span.row(i).transpose();
    for (Eigen::Index c = 0; c < found; ++c) p -= out.col(c).dot(p) * out.col(c);
    for (Eigen::Index c = 0; c < found; ++c) p -= out.col(c).dot(p) * out.col(c);
    const double nrm = p.norm();
    if (nrm > 1e-6) out.col(found++) = p / nrm;
  }
  if (found == k) V = out;
}

}  // namespace

EigenDecomposition symmetric_eigen(const Eigen::MatrixXd& A, double tol_sym) {
  if (A.rows() != A.cols()) throw Error(ErrorKind::Size, "symmetric_eigen needs a square matrix");
  const double scale = std::max(max_abs(A), std::numeric_limits<double>::min());
  const double defect = max_abs(A - A.transpose()) / scale;
  if (defect > tol_sym) throw Error(ErrorKind::AssemblyInconsistency, "matrix is not symmetric", defect);
  EigenDecomposition out;
  if (A.rows() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success)
    throw Error(ErrorKind::NonConvergence, "symmetric eigensolver did not converge", A.rows());
  out.values = es.eigenvalues();
  out.vectors = es.eigenvectors();

  const Eigen::Index n = A.rows();
  const double tol_cluster = 1e-10 * scale;
  for (Eigen::Index s = 0; s < n;) {
    Eigen::Index e = s + 1;
    while (e < n && out.values(e) - out.values(e - 1) <= tol_cluster) ++e;
    if (e - s > 1) canonical_basis(out.vectors.middleCols(s, e - s));
    s = e;
  }
  for (Eigen::Index c = 0; c < n; ++c) fix_sign(out.vectors.col(c));

  out.residual = ((A * out.vectors) - out.vectors * out.values.asDiagonal()).cwiseAbs().maxCoeff();
  out.orthogonality =
      (out.vectors.transpose() * out.vectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
  return out;
}

CountReport count_signs(const Eigen::VectorXd& eigenvalues, double tol) {
  CountReport c;
  c.tol = tol;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues(i) < -tol)
      ++c.neg;
    else if (eigenvalues(i) > tol)
      ++c.pos;
    else
      ++c.zero;
  }
  return c;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::UnstableT1: return "UNSTABLE_T1";
    case Verdict::UnstableT2: return "UNSTABLE_T2";
    case Verdict::Inconclusive: return "INCONCLUSIVE";
  }
  return "UNKNOWN";
}

Verdict verdict(int negA1, int negA2, double l0, bool kerA2_trivial, double tol) {
  if (std::abs(l0) <= tol) throw Error(ErrorKind::HypothesisFailure, "hypothesis failure: l0 ~ 0", l0);
  const int neg_minus_l0 = l0 > 0.0 ? 1 : 0;
  if (negA2 > negA1 + neg_minus_l0) return Verdict::UnstableT1;
  if (kerA2_trivial && negA2 != negA1 + neg_minus_l0) return Verdict::UnstableT2;
  return Verdict::Inconclusive;
}

int predicted_count(int n, int negA1, int negA2, double l0) { return n - negA1 + negA2 + (l0 < 0.0 ? 1 : 0); }

EigenContext make_eigen_context(const OperatorBlocks& blocks0, double tol_eig_rel) {
  EigenContext ctx;
  const EigenDecomposition a1 = symmetric_eigen(blocks0.A1);
  const EigenDecomposition a2 = symmetric_eigen(blocks0.A2);
  const double tol = tol_eig_rel * std::max(max_abs(blocks0.A1), 1e-300);
  for (Eigen::Index i = 0; i < a1.values.size(); ++i)
    if (std::abs(a1.values(i)) <= tol)
      throw Error(ErrorKind::DegenerateKernel, "A1^0 has a mean-zero eigenvalue at zero", a1.values(i));
  ctx.alpha = a1.values;
  ctx.xi = a1.vectors;
  ctx.beta = a2.values;
  ctx.zeta = a2.vectors;
  ctx.l0 = blocks0.l;
  ctx.period = blocks0.period;
  return ctx;
}

Eigen::VectorXd default_lambda_grid(double period, int count, double lo, double hi) {
  if (count < 2 || !(lo > 0.0) || !(hi > lo)) throw Error(ErrorKind::Config, "invalid lambda grid");
  const double k1 = 2.0 * std::numbers::pi / period;
  Eigen::VectorXd g(count);
  for (int i = 0; i < count; ++i) g(i) = k1 * lo * std::pow(hi / lo, double(i) / (count - 1));
  return g;
}

namespace {

struct Probe {
  Eigen::VectorXd values;
  Eigen::MatrixXd M;
  double scale = 0.0;
  CountReport counts;
};

Probe probe(const MatrixFamily& family, double lambda, double tol_eig_rel, bool vectors) {
  Probe p;
  p.M = family(lambda);
  p.scale = std::max(max_abs(p.M), 1e-300);
  if (vectors) {
    p.values = symmetric_eigen(p.M).values;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.M, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::NonConvergence, "eigensolver failed", lambda);
    p.values = es.eigenvalues();
  }
  p.counts = count_signs(p.values, tol_eig_rel * p.scale);
  return p;
}

}  // namespace

SweepResult sweep(const MatrixFamily& family, const Eigen::VectorXd& lambda_grid, double tol_eig_rel) {
  for (Eigen::Index i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid(i) > 0.0)) throw Error(ErrorKind::Config, "lambda grid must be positive");
    if (i > 0 && !(lambda_grid(i) > lambda_grid(i - 1)))
      throw Error(ErrorKind::Config, "lambda grid must be ascending");
  }
  SweepResult sw;
  sw.lambdas = lambda_grid;
  sw.min_abs.resize(lambda_grid.size());
  for (Eigen::Index i = 0; i < lambda_grid.size(); ++i) {
    Probe p;
    try {
      p = probe(family, lambda_grid(i), tol_eig_rel, false);
    } catch (const Error& err) {
      throw Error(err.kind(), std::string(err.what()) + " (lambda=" + std::to_string(lambda_grid(i)) + ")",
                  lambda_grid(i));
    }
    sw.counts.push_back(p.counts);
    sw.min_abs(i) = p.values.cwiseAbs().minCoeff();
    sw.eigenvalues.push_back(p.values);
    if (i > 0 && sw.counts[i].neg != sw.counts[i - 1].neg)
      sw.crossings.emplace_back(static_cast<int>(i - 1), static_cast<int>(i));
  }
  return sw;
}

SweepResult sweep(const BlockAssembler& assembler, const EigenContext& ctx, int n,
                  const Eigen::VectorXd& lambda_grid, double tol_eig_rel) {
  return sweep([&](double lam) { return assemble_M(assembler.assemble(lam), n, ctx); }, lambda_grid, tol_eig_rel);
}

KernelCrossing locate_kernel(const MatrixFamily& family, double lo, double hi, double tol_kernel_rel,
                             int max_iter, double tol_eig_rel) {
  if (!(lo < hi)) throw Error(ErrorKind::Config, "locate_kernel needs lo < hi");
  const Probe pa = probe(family, lo, tol_eig_rel, false);
  const Probe pb = probe(family, hi, tol_eig_rel, false);
  if (pa.counts.neg == pb.counts.neg)
    throw Error(ErrorKind::NoCrossing, "interval has no change in the negative count", lo);
  const int neg_lo = pa.counts.neg;

  double a = lo, b = hi;
  double best_lambda = std::numeric_limits<double>::quiet_NaN();
  double best_rel = std::numeric_limits<double>::infinity();
  KernelCrossing kc;
  int it = 0;
  for (; it < max_iter; ++it) {
    const double mid = 0.5 * (a + b);
    const Probe pm = probe(family, mid, tol_eig_rel, false);
    const double rel = pm.values.cwiseAbs().minCoeff() / pm.scale;
    if (rel < best_rel) {
      best_rel = rel;
      best_lambda = mid;
    }
    if (rel <= tol_kernel_rel) break;
    if (pm.counts.neg == neg_lo)
      a = mid;
    else
      b = mid;
  }
  if (!(best_rel <= tol_kernel_rel))
    throw Error(ErrorKind::SpuriousInterval,
                "negative count changes without an eigenvalue crossing zero (jump from infinity)", best_rel);

  const Eigen::MatrixXd M = family(best_lambda);
  const EigenDecomposition ed = symmetric_eigen(M);
  Eigen::Index k = 0;
  ed.values.cwiseAbs().minCoeff(&k);
  kc.lambda_star = best_lambda;
  kc.u = ed.vectors.col(k);
  kc.min_abs_eig = std::abs(ed.values(k));
  kc.iterations = it + 1;
  return kc;
}

KernelCrossing locate_kernel(const SweepResult& sw, const BlockAssembler& assembler, const EigenContext& ctx,
                             int n, int interval, double tol_kernel_rel, double tol_eig_rel) {
  if (interval < 0 || interval >= static_cast<int>(sw.crossings.size()))
    throw Error(ErrorKind::NoCrossing, "no such crossing interval", interval);
  const auto [ia, ib] = sw.crossings[interval];
  MatrixFamily family = [&](double lam) { return assemble_M(assembler.assemble(lam), n, ctx); };
  KernelCrossing kc = locate_kernel(family, sw.lambdas(ia), sw.lambdas(ib), tol_kernel_rel, 60, tol_eig_rel);
  kc.n = n;
  Eigen::VectorXd phi = ctx.xi.leftCols(n) * kc.u.head(n);
  Eigen::VectorXd psi = ctx.zeta.leftCols(n) * kc.u.segment(n, n);
  double b = kc.u(2 * n);
  const double norm = phi.norm() + psi.norm() + std::abs(b);
  kc.phi = phi / norm;
  kc.psi = psi / norm;
  kc.b = b / norm;
  return kc;
}

void write_sweep_csv(std::ostream& os, const SweepResult& sw) {
  os << "lambda,eig_index,eigenvalue\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < sw.lambdas.size(); ++i)
    for (Eigen::Index k = 0; k < sw.eigenvalues[i].size(); ++k)
      os << sw.lambdas(i) << ',' << k << ',' << sw.eigenvalues[i](k) << '\n';
}

}  // namespace vmspec
