#include "vmspec/operators.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <numbers>

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include "vmspec/error.hpp"
#include "vmspec/parallel.hpp"

namespace vmspec {

namespace {

constexpr double kPi = std::numbers::pi;

// Product-rule weights for n samples per period, built as an inverse DFT of
// H_m = x / (x + i m), x = lambda T / 2 pi.
struct Twiddles {
  int n = 0;

  explicit Twiddles(int n_) : n(n_) {}

  void weights(double lambda, double period, double* w) const {
    if (lambda == 0.0 || !std::isfinite(period)) {
      std::fill(w, w + n, 1.0 / n);
      return;
    }
    thread_local Eigen::FFT<double> fft;
    thread_local std::vector<std::complex<double>> spec, out;
    const int half = n / 2;
    const double x = lambda * period / (2.0 * kPi);
    spec.assign(n, 0.0);
    spec[0] = 1.0;
    for (int m = 1; 2 * m < n; ++m) {
      const double den = x * x + double(m) * m;
      const std::complex<double> H(x * x / den, -x * m / den);
      spec[m] = H;
      spec[n - m] = std::conj(H);
    }
    if (n % 2 == 0) spec[half] = x * x / (x * x + double(half) * half);
    fft.inv(out, spec);
    for (int q = 0; q < n; ++q) w[q] = out[q].real();
  }
};

// Full-basis function values at x: [1/sqrt(P), c_1, s_1, ...].
void basis_from_phase(double period, int K, std::complex<double> z, double* out) {
  const double s = std::sqrt(2.0 / period);
  out[0] = 1.0 / std::sqrt(period);
  std::complex<double> zk = z;
  for (int k = 1; k <= K; ++k) {
    out[2 * k - 1] = s * zk.real();
    out[2 * k] = s * zk.imag();
    zk *= z;
  }
}

void basis_values(double period, int K, double x, double* out) {
  basis_from_phase(period, K, std::polar(1.0, 2.0 * kPi * x / period), out);
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

Eigen::VectorXd periodic_smoothing_weights(double lambda, double period, int n) {
  if (n < 2) throw Error(ErrorKind::Size, "periodic smoothing needs at least two samples");
  Twiddles tw(n);
  Eigen::VectorXd w(n);
  tw.weights(lambda, period, w.data());
  return w;
}

SmoothingEvaluator make_smoothing_evaluator(const EquilibriumState& state, double lambda,
                                            const SmoothingOptions& opts) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::Size, "smoothing needs lambda > 0", lambda);
  SmoothingEvaluator ev;
  ev.state = &state;
  ev.lambda = lambda;
  ev.S = -std::log(opts.tol_tail_s) / lambda;
  ev.opts = opts;
  return ev;
}

double apply_smoothing(const SmoothingEvaluator& eval, int sigma, const PhaseFunction& k, const PhasePoint& point) {
  if (!(eval.lambda > 0.0)) throw Error(ErrorKind::Size, "smoothing needs lambda > 0", eval.lambda);
  if (eval.opts.periodic) {
    try {
      const OrbitSamples os = sample_orbit(*eval.state, sigma, point, eval.opts.n_s, eval.opts.step);
      const Eigen::VectorXd w = periodic_smoothing_weights(eval.lambda, os.info.period, eval.opts.n_s);
      double sum = 0.0;
      for (int q = 0; q < eval.opts.n_s; ++q) sum += w(q) * k({os.x(q), os.v1(q), os.v2(q)});
      return sum;
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::OrbitNotResolved) throw;
    }
  }
  const TrajectorySample ts = sample_backward(*eval.state, sigma, point, eval.S, eval.opts.n_gl, eval.opts.step);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < ts.s_nodes.size(); ++i)
    sum += ts.gl_weights(i) * eval.lambda * std::exp(eval.lambda * ts.s_nodes(i)) * k(ts.states[i]);
  return sum;
}

ProjectionEvaluator make_projection_evaluator(const EquilibriumState& state, int n_s, const StepOptions& step) {
  if (n_s < 64) throw Error(ErrorKind::Size, "orbit averages need at least 64 nodes per period");
  ProjectionEvaluator ev;
  ev.state = &state;
  ev.n_s = n_s;
  ev.step = step;
  ev.T_avg = step.max_period;
  return ev;
}

double apply_projection(const ProjectionEvaluator& eval, int sigma, const PhaseFunction& k, const PhasePoint& point) {
  try {
    const OrbitSamples os = sample_orbit(*eval.state, sigma, point, eval.n_s, eval.step);
    double sum = 0.0;
    for (int q = 0; q < eval.n_s; ++q) sum += k({os.x(q), os.v1(q), os.v2(q)});
    return sum / eval.n_s;
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::OrbitNotResolved) throw;
  }
  StepOptions step = eval.step;
  step.max_period = std::numeric_limits<double>::infinity();
  const TrajectorySample ts = sample_backward(*eval.state, sigma, point, eval.T_avg, 4096, step);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < ts.s_nodes.size(); ++i) sum += ts.gl_weights(i) * k(ts.states[i]);
  return sum / eval.T_avg;
}

// ---------------------------------------------------------------------------
// Orbit cache for inhomogeneous states. Only species - is integrated: the species +
// orbit from (x, v1, v2) is the species - orbit from (x, v1, -v2) with V2 negated.

struct BlockAssembler::Cache {
  int M = 0, Nv = 0, n_s = 0;
  // Per orbit sample: cos and sin of 2 pi X / P, and vhat.
  std::vector<double> ZC, ZS, H1, H2;
  std::vector<double> period;
  std::vector<std::uint8_t> kind;  // 0 stationary, 1 passing, 2 trapped, 3 unresolved
  OrbitCacheStats stats;
  Twiddles tw;

  explicit Cache(int n) : n_s(n), tw(n) {}
};

BlockAssembler::BlockAssembler(const EquilibriumState& state, const FourierBasis& basis,
                               const VelocityQuadrature& quad, const AssemblyOptions& opts)
    : state_(state), quad_(quad), opts_(opts) {
  if (std::abs(basis.period - state.period()) > 1e-12 * state.period())
    throw Error(ErrorKind::Size, "basis period does not match the equilibrium period");
  const int factor = basis.grid_size() / basis.n_modes;
  full_ = build_fourier_basis(basis.period, basis.n_modes, false, factor);
  mean_zero_ = build_fourier_basis(basis.period, basis.n_modes, true, factor);
  fast_ = state.homogeneous && !opts.force_generic;

  const int M = full_.grid_size();
  const Eigen::Index Nv = quad_.size();
  B0_.resize(M);
  for (int i = 0; i < M; ++i) B0_(i) = state.homogeneous ? 0.0 : state.potential.B(full_.x(i));

  const int Mt = state.homogeneous ? 1 : M;
  mu_.resize(2 * Mt * Nv);
  mu_e_.resize(mu_.size());
  mu_p_.resize(mu_.size());
  for (int s = 0; s < 2; ++s) {
    const int sigma = s == 0 ? -1 : 1;
    for (int i = 0; i < Mt; ++i) {
      const double psi = state.homogeneous ? 0.0 : state.potential.psi(full_.x(i));
      for (Eigen::Index j = 0; j < Nv; ++j) {
        const double v1 = quad_.v1(j), v2 = quad_.v2(j);
        const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
        const double p = v2 + sigma * psi;
        const Eigen::Index idx = (static_cast<Eigen::Index>(s) * Mt + i) * Nv + j;
        mu_[idx] = state.profile.mu(sigma, e, p);
        mu_e_[idx] = state.profile.mu_e(sigma, e, p);
        mu_p_[idx] = state.profile.mu_p(sigma, e, p);
        if (!std::isfinite(mu_[idx]) || !std::isfinite(mu_e_[idx]) || !std::isfinite(mu_p_[idx]))
          throw Error(ErrorKind::ProfileEvaluation, "non-finite profile value on the quadrature grid");
      }
    }
  }

  if (fast_) return;

  const int n_s = opts.smoothing.n_s;
  cache_ = std::make_unique<Cache>(n_s);
  Cache& c = *cache_;
  c.M = M;
  c.Nv = static_cast<int>(Nv);
  const std::size_t nodes = static_cast<std::size_t>(M) * Nv;
  c.ZC.resize(nodes * n_s);
  c.ZS.resize(nodes * n_s);
  c.H1.resize(nodes * n_s);
  c.H2.resize(nodes * n_s);
  c.period.assign(nodes, 0.0);
  c.kind.assign(nodes, 0);
  std::vector<double> drift(nodes, 0.0), closure(nodes, 0.0);

  parallel_for(static_cast<long>(nodes), opts.jobs, [&](long node) {
    const int i = static_cast<int>(node / Nv);
    const Eigen::Index j = node % Nv;
    const PhasePoint start{full_.x(i), quad_.v1(j), quad_.v2(j)};
    try {
      const OrbitSamples os = sample_orbit(state_, -1, start, n_s, opts.smoothing.step);
      for (int q = 0; q < n_s; ++q) {
        const std::size_t at = node * n_s + q;
        const double ang = 2.0 * kPi * os.x(q) / full_.period;
        c.ZC[at] = std::cos(ang);
        c.ZS[at] = std::sin(ang);
        const double eq = std::sqrt(1.0 + os.v1(q) * os.v1(q) + os.v2(q) * os.v2(q));
        c.H1[at] = os.v1(q) / eq;
        c.H2[at] = os.v2(q) / eq;
      }
      c.period[node] = os.info.period;
      c.kind[node] = static_cast<std::uint8_t>(os.info.kind);
      drift[node] = std::max(os.conservation.de, os.conservation.dp);
      closure[node] = os.closure;
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::OrbitNotResolved) throw;
      c.kind[node] = 3;
    }
  });
  for (std::size_t node = 0; node < nodes; ++node) {
    switch (c.kind[node]) {
      case 0: ++c.stats.stationary; break;
      case 1: ++c.stats.passing; break;
      case 2: ++c.stats.trapped; break;
      default: ++c.stats.unresolved; break;
    }
    c.stats.max_drift = std::max(c.stats.max_drift, drift[node]);
    c.stats.max_closure = std::max(c.stats.max_closure, closure[node]);
  }
}

BlockAssembler::~BlockAssembler() = default;

OrbitCacheStats BlockAssembler::cache_stats() const {
  if (!cache_) {
    OrbitCacheStats st;
    st.passing = static_cast<long>(full_.grid_size()) * quad_.size();
    return st;
  }
  return cache_->stats;
}

Eigen::Index BlockAssembler::table_index(int sigma, int i, int j) const {
  const int Mt = state_.homogeneous ? 1 : full_.grid_size();
  const int s = sigma < 0 ? 0 : 1;
  const int ii = state_.homogeneous ? 0 : i;
  return (static_cast<Eigen::Index>(s) * Mt + ii) * quad_.size() + j;
}

double BlockAssembler::mu(int sigma, int i, int j) const { return mu_[table_index(sigma, i, j)]; }
double BlockAssembler::mu_e(int sigma, int i, int j) const { return mu_e_[table_index(sigma, i, j)]; }
double BlockAssembler::mu_p(int sigma, int i, int j) const { return mu_p_[table_index(sigma, i, j)]; }

void BlockAssembler::response(double lambda, int sigma, int i, int j, NodeResponse& out) const {
  const int nb = full_.size();
  const int K = full_.n_modes / 2;
  const double P = full_.period;
  out.Qe.setZero(nb);
  out.Qv2e.setZero(nb);
  const double x = full_.x(i);
  const double v1 = quad_.v1(j), v2 = quad_.v2(j);
  const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
  const double vh1 = v1 / e, vh2 = v2 / e;

  if (fast_) {
    basis_values(P, K, x, out.Qe.data());
    for (int k = 1; k <= K; ++k) {
      std::complex<double> m;
      if (lambda > 0.0)
        m = lambda / std::complex<double>(lambda, 2.0 * kPi * k / P * vh1);
      else
        m = vh1 == 0.0 ? 1.0 : 0.0;
      const double c = out.Qe(2 * k - 1), s = out.Qe(2 * k);
      out.Qe(2 * k - 1) = m.real() * c - m.imag() * s;
      out.Qe(2 * k) = m.real() * s + m.imag() * c;
    }
    out.Qv2e = vh2 * out.Qe;
    out.Qv1 = vh1;
    return;
  }

  const Cache& c = *cache_;
  const int n_s = c.n_s;
  const int jj = sigma < 0 ? j : static_cast<int>(quad_.mirror_v2(j));
  const double s2 = sigma < 0 ? 1.0 : -1.0;
  const std::size_t node = static_cast<std::size_t>(i) * c.Nv + jj;
  thread_local std::vector<double> ev, w;
  ev.resize(nb);

  if (c.kind[node] == 0) {
    basis_values(P, K, x, ev.data());
    for (int a = 0; a < nb; ++a) {
      out.Qe(a) = ev[a];
      out.Qv2e(a) = vh2 * ev[a];
    }
    out.Qv1 = vh1;
    return;
  }

  if (c.kind[node] == 3) {
    // Unresolved orbit: Gauss-Legendre on [-S, 0], or a long-time average at lambda = 0.
    const auto& sm = opts_.smoothing;
    StepOptions step = sm.step;
    step.max_period = std::numeric_limits<double>::infinity();
    const double S = lambda > 0.0 ? -std::log(sm.tol_tail_s) / lambda : sm.step.max_period;
    const int n = lambda > 0.0 ? sm.n_gl : 4096;
    const TrajectorySample ts = sample_backward(state_, sigma, {x, v1, v2}, S, n, step);
    out.Qv1 = 0.0;
    for (int q = 0; q < n; ++q) {
      const double wq = lambda > 0.0 ? ts.gl_weights(q) * lambda * std::exp(lambda * ts.s_nodes(q))
                                     : ts.gl_weights(q) / S;
      const PhasePoint& pt = ts.states[q];
      basis_values(P, K, pt.x, ev.data());
      const double eq = pt.e();
      for (int a = 0; a < nb; ++a) {
        out.Qe(a) += wq * ev[a];
        out.Qv2e(a) += wq * pt.v2 / eq * ev[a];
      }
      out.Qv1 += wq * pt.v1 / eq;
    }
    return;
  }

  w.resize(n_s);
  c.tw.weights(lambda, c.period[node], w.data());
  const double* ZC = &c.ZC[node * n_s];
  const double* ZS = &c.ZS[node * n_s];
  const double* H1 = &c.H1[node * n_s];
  const double* H2 = &c.H2[node * n_s];
  double* qe = out.Qe.data();
  double* qv = out.Qv2e.data();
  double qv1 = 0.0;
  for (int q = 0; q < n_s; ++q) {
    basis_from_phase(P, K, {ZC[q], ZS[q]}, ev.data());
    const double wq = w[q];
    const double wq2 = wq * s2 * H2[q];
    for (int a = 0; a < nb; ++a) {
      qe[a] += wq * ev[a];
      qv[a] += wq2 * ev[a];
    }
    qv1 += wq * H1[q];
  }
  out.Qv1 = qv1;
}

OperatorBlocks BlockAssembler::assemble(double lambda) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::Size, "lambda must be >= 0", lambda);
  return fast_ ? assemble_homogeneous(lambda) : assemble_generic(lambda);
}

OperatorBlocks BlockAssembler::assemble_generic(double lambda) const {
  const int M = full_.grid_size();
  const int nb = full_.size();
  const Eigen::Index Nv = quad_.size();
  Eigen::MatrixXd G1 = Eigen::MatrixXd::Zero(M, nb), G2 = G1, G3 = G1, G4 = G1;
  Eigen::VectorXd me = Eigen::VectorXd::Zero(M), mp = me, mv2p = me, cq = me, dq = me, lq = me, fact = me,
                  parity = me;

  parallel_for(M, opts_.jobs, [&](long il) {
    const int i = static_cast<int>(il);
    NodeResponse r;
    Eigen::VectorXd g1 = Eigen::VectorXd::Zero(nb), g2 = g1, g3 = g1, g4 = g1;
    double s_me = 0, s_mp = 0, s_mv2p = 0, s_c = 0, s_d = 0, s_l = 0, s_f = 0, s_o1 = 0, s_o2 = 0;
    for (int sigma : {-1, 1}) {
      for (Eigen::Index j = 0; j < Nv; ++j) {
        const double w = quad_.w(j);
        const double ue = mu_e(sigma, i, static_cast<int>(j));
        const double up = mu_p(sigma, i, static_cast<int>(j));
        const double v1 = quad_.v1(j), v2 = quad_.v2(j);
        const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
        const double vh1 = v1 / e, vh2 = v2 / e;
        s_me += w * ue;
        s_mp += w * up;
        s_mv2p += w * vh2 * up;
        s_f += w * (up + vh2 * ue);
        s_o1 += w * vh1 * ue;
        s_o2 += w * vh1 * up;
        if (ue == 0.0) continue;
        response(lambda, sigma, i, static_cast<int>(j), r);
        const double wu = w * ue;
        g1.noalias() += wu * r.Qe;
        g2.noalias() += (wu * vh2) * r.Qv2e;
        g3.noalias() += wu * r.Qv2e;
        g4.noalias() += (wu * vh2) * r.Qe;
        s_c += wu * r.Qv1;
        s_d += wu * vh2 * r.Qv1;
        s_l += wu * vh1 * r.Qv1;
      }
    }
    G1.row(i) = g1.transpose();
    G2.row(i) = g2.transpose();
    G3.row(i) = g3.transpose();
    G4.row(i) = g4.transpose();
    me(i) = s_me;
    mp(i) = s_mp;
    mv2p(i) = s_mv2p;
    cq(i) = s_c;
    dq(i) = s_d;
    lq(i) = s_l;
    fact(i) = s_f;
    parity(i) = std::abs(s_o1) + std::abs(s_o2);
  });

  const Eigen::MatrixXd& E = full_.values;
  const double dx = full_.dx;
  OperatorBlocks blk;
  blk.lambda = lambda;
  blk.n_modes = full_.n_modes;
  blk.period = full_.period;

  Eigen::MatrixXd lap = full_.kappa2.asDiagonal();
  const Eigen::MatrixXd A1_full = lap - dx * E.transpose() * me.asDiagonal() * E + dx * E.transpose() * G1;
  Eigen::MatrixXd A2 = lap + lambda * lambda * Eigen::MatrixXd::Identity(nb, nb) -
                       dx * E.transpose() * mv2p.asDiagonal() * E - dx * E.transpose() * G2;
  const Eigen::MatrixXd mpE = dx * E.transpose() * mp.asDiagonal() * E;
  const Eigen::MatrixXd B_full = mpE + dx * E.transpose() * G3;
  const Eigen::MatrixXd Bstar_full = mpE + dx * E.transpose() * G4;
  const Eigen::VectorXd C_full = dx * E.transpose() * cq;
  blk.D = dx * E.transpose() * dq;
  blk.l = dx * lq.sum() / full_.period;
  blk.A2 = A2;
  blk.vanishing_moment = fact.cwiseAbs().maxCoeff();
  blk.parity_moment = parity.maxCoeff();
  finish(blk, A1_full, B_full, Bstar_full, C_full);
  return blk;
}

OperatorBlocks BlockAssembler::assemble_homogeneous(double lambda) const {
  const int nb = full_.size();
  const int K = full_.n_modes / 2;
  const double P = full_.period;
  const Eigen::Index Nv = quad_.size();

  double me = 0, mp = 0, mv2p = 0, fact = 0, l = 0, c0 = 0, d0 = 0, o1 = 0, o2 = 0, R2_0 = 0, R3_0 = 0;
  Eigen::VectorXd R1 = Eigen::VectorXd::Zero(K + 1), I1 = R1, R2 = R1, I2 = R1, R3 = R1, I3 = R1;
  for (int sigma : {-1, 1}) {
    for (Eigen::Index j = 0; j < Nv; ++j) {
      const double w = quad_.w(j);
      const double ue = mu_e(sigma, 0, static_cast<int>(j));
      const double up = mu_p(sigma, 0, static_cast<int>(j));
      const double v1 = quad_.v1(j), v2 = quad_.v2(j);
      const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
      const double vh1 = v1 / e, vh2 = v2 / e;
      me += w * ue;
      mp += w * up;
      mv2p += w * vh2 * up;
      fact += w * (up + vh2 * ue);
      l += w * vh1 * vh1 * ue;
      c0 += w * vh1 * ue;
      d0 += w * vh1 * vh2 * ue;
      o1 += w * vh1 * ue;
      o2 += w * vh1 * up;
      R2_0 += w * ue * vh2 * vh2;
      R3_0 += w * ue * vh2;
      if (ue == 0.0) continue;
      for (int k = 1; k <= K; ++k) {
        std::complex<double> m;
        if (lambda > 0.0)
          m = lambda / std::complex<double>(lambda, 2.0 * kPi * k / P * vh1);
        else
          m = vh1 == 0.0 ? 1.0 : 0.0;
        const double wu = w * ue;
        R1(k) += wu * m.real();
        I1(k) += wu * m.imag();
        R2(k) += wu * vh2 * vh2 * m.real();
        I2(k) += wu * vh2 * vh2 * m.imag();
        R3(k) += wu * vh2 * m.real();
        I3(k) += wu * vh2 * m.imag();
      }
    }
  }

  OperatorBlocks blk;
  blk.lambda = lambda;
  blk.n_modes = full_.n_modes;
  blk.period = P;
  Eigen::MatrixXd A1_full = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::MatrixXd A2 = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::MatrixXd B_full = Eigen::MatrixXd::Zero(nb, nb);
  A1_full(0, 0) = 0.0;  // Q maps constants to themselves, cancelling -me
  A2(0, 0) = lambda * lambda - mv2p - R2_0;
  B_full(0, 0) = mp + R3_0;
  for (int k = 1; k <= K; ++k) {
    const int c = 2 * k - 1, s = 2 * k;
    const double kap2 = full_.kappa2(c);
    // Columns hold the argument mode; Q c_k = Re m c_k - Im m s_k, Q s_k = Im m c_k + Re m s_k.
    A1_full(c, c) = A1_full(s, s) = kap2 - me + R1(k);
    A1_full(s, c) = -I1(k);
    A1_full(c, s) = I1(k);
    A2(c, c) = A2(s, s) = kap2 + lambda * lambda - mv2p - R2(k);
    A2(s, c) = I2(k);
    A2(c, s) = -I2(k);
    B_full(c, c) = B_full(s, s) = mp + R3(k);
    B_full(s, c) = -I3(k);
    B_full(c, s) = I3(k);
  }
  // <B* e_b, e_a> = mp delta + int mu_e vhat2 <Q e_b, e_a>, the same array as B_full.
  const Eigen::MatrixXd Bstar_full = B_full;
  Eigen::VectorXd C_full = Eigen::VectorXd::Zero(nb);
  C_full(0) = std::sqrt(P) * c0;
  blk.D = Eigen::VectorXd::Zero(nb);
  blk.D(0) = std::sqrt(P) * d0;
  blk.l = l;
  blk.A2 = A2;
  blk.vanishing_moment = std::abs(fact);
  blk.parity_moment = std::abs(o1) + std::abs(o2);
  finish(blk, A1_full, B_full, Bstar_full, C_full);
  return blk;
}

void BlockAssembler::finish(OperatorBlocks& blk, const Eigen::MatrixXd& A1_full, const Eigen::MatrixXd& B_full,
                            const Eigen::MatrixXd& Bstar_full, const Eigen::VectorXd& C_full) const {
  const int N = full_.n_modes;
  blk.constant_residual = A1_full.col(0).norm();
  Eigen::MatrixXd A1 = A1_full.bottomRightCorner(N, N);
  blk.sym_defect_A1 = max_abs(A1 - A1.transpose()) / std::max(max_abs(A1), 1e-300);
  blk.sym_defect_A2 = max_abs(blk.A2 - blk.A2.transpose()) / std::max(max_abs(blk.A2), 1e-300);
  blk.A1 = 0.5 * (A1 + A1.transpose());
  blk.A2 = 0.5 * (blk.A2 + blk.A2.transpose()).eval();
  blk.B = B_full.bottomRows(N);
  blk.Bstar = Bstar_full.rightCols(N);
  blk.C = C_full.tail(N);
  blk.adjoint_defect = max_abs(blk.B - blk.Bstar.transpose());
  const double worst = std::max(blk.sym_defect_A1, blk.sym_defect_A2);
  if (worst > opts_.tol_sym)
    throw Error(ErrorKind::AssemblyInconsistency,
                "symmetry defect " + std::to_string(worst) + " exceeds tolerance at lambda=" +
                    std::to_string(blk.lambda),
                worst);
}

OperatorBlocks assemble_blocks(const EquilibriumState& state, double lambda, const FourierBasis& basis,
                               const VelocityQuadrature& quad, const AssemblyOptions& opts) {
  return BlockAssembler(state, basis, quad, opts).assemble(lambda);
}

Eigen::MatrixXd assemble_M(const OperatorBlocks& blocks, int n, const EigenContext& ctx) {
  if (n < 1 || n > ctx.xi.cols() || n > ctx.zeta.cols())
    throw Error(ErrorKind::Size, "truncation n exceeds the number of modes", n);
  if (ctx.xi.rows() != blocks.A1.rows() || ctx.zeta.rows() != blocks.A2.rows())
    throw Error(ErrorKind::Size, "eigen context does not match the blocks");
  const Eigen::MatrixXd Xi = ctx.xi.leftCols(n);
  const Eigen::MatrixXd Z = ctx.zeta.leftCols(n);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n + 1, 2 * n + 1);
  M.topLeftCorner(n, n) = -Xi.transpose() * blocks.A1 * Xi;
  M.block(0, n, n, n) = Xi.transpose() * blocks.B * Z;
  M.block(0, 2 * n, n, 1) = Xi.transpose() * blocks.C;
  M.block(n, n, n, n) = Z.transpose() * blocks.A2 * Z;
  M.block(n, 2 * n, n, 1) = -Z.transpose() * blocks.D;
  M(2 * n, 2 * n) = -blocks.period * (blocks.lambda * blocks.lambda - blocks.l);
  M.block(n, 0, n, n) = M.block(0, n, n, n).transpose();
  M.block(2 * n, 0, 1, n) = M.block(0, 2 * n, n, 1).transpose();
  M.block(2 * n, n, 1, n) = M.block(n, 2 * n, n, 1).transpose();
  M.topLeftCorner(n, n) = 0.5 * (M.topLeftCorner(n, n) + M.topLeftCorner(n, n).transpose()).eval();
  M.block(n, n, n, n) = 0.5 * (M.block(n, n, n, n) + M.block(n, n, n, n).transpose()).eval();
  return M;
}

void write_blocks_csv(std::ostream& os, const OperatorBlocks& blocks) {
  os << "block,row,col,value\n" << std::setprecision(17);
  auto dump = [&](const char* name, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) os << name << ',' << r << ',' << c << ',' << m(r, c) << '\n';
  };
  dump("A1", blocks.A1);
  dump("A2", blocks.A2);
  dump("B", blocks.B);
  dump("Bstar", blocks.Bstar);
  dump("C", blocks.C);
  dump("D", blocks.D);
  os << "l,0,0," << blocks.l << '\n';
}

std::string blocks_manifest_json(const OperatorBlocks& blocks, double tol_sym) {
  nlohmann::ordered_json j;
  j["lambda"] = blocks.lambda;
  j["n_modes"] = blocks.n_modes;
  j["period"] = blocks.period;
  j["l"] = blocks.l;
  j["tol_sym"] = tol_sym;
  j["defects"] = {{"sym_A1", blocks.sym_defect_A1},
                  {"sym_A2", blocks.sym_defect_A2},
                  {"adjoint_B", blocks.adjoint_defect},
                  {"A1_constant", blocks.constant_residual},
                  {"vanishing_moment", blocks.vanishing_moment},
                  {"parity_moment", blocks.parity_moment}};
  j["norms"] = {{"A1", blocks.A1.cwiseAbs().maxCoeff()},
                {"A2", blocks.A2.cwiseAbs().maxCoeff()},
                {"B", blocks.B.norm()},
                {"C", blocks.C.norm()},
                {"D", blocks.D.norm()}};
  return j.dump(2);
}

}  // namespace vmspec
