#include "vmspec/characteristics.hpp"

#include <algorithm>
#include <cmath>

#include "vmspec/error.hpp"

namespace vmspec {

namespace {

struct Y {
  double x, v1, v2;
};

// v2 is slaved to x through the conserved momentum p = v2 + sigma psi(x), so only
// (x, v1) are integrated and p holds to roundoff.
class Flow {
 public:
  Flow(const EquilibriumState& state, int sigma, const PhasePoint& start)
      : pot_(state.potential), sigma_(sigma), p0_(start.v2 + sigma * state.potential.psi(start.x)) {}

  void rhs(double x, double v1, double& dx, double& dv1) const {
    double psi = 0.0, b = 0.0;
    pot_.eval(x, psi, b);
    const double v2 = p0_ - sigma_ * psi;
    const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
    dx = v1 / e;
    dv1 = sigma_ * v2 / e * b;
  }

  double dv1(const Y& y) const {
    double dx = 0.0, a = 0.0;
    rhs(y.x, y.v1, dx, a);
    return a;
  }

  Y step(const Y& y, double h) const {
    double a1, b1, a2, b2, a3, b3, a4, b4;
    rhs(y.x, y.v1, a1, b1);
    rhs(y.x + 0.5 * h * a1, y.v1 + 0.5 * h * b1, a2, b2);
    rhs(y.x + 0.5 * h * a2, y.v1 + 0.5 * h * b2, a3, b3);
    rhs(y.x + h * a3, y.v1 + h * b3, a4, b4);
    const double x = y.x + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
    const double v1 = y.v1 + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4);
    return {x, v1, p0_ - sigma_ * pot_.psi(x)};
  }

  double energy(const Y& y) const { return std::sqrt(1.0 + y.v1 * y.v1 + y.v2 * y.v2); }
  double momentum(const Y& y) const { return y.v2 + sigma_ * pot_.psi(y.x); }

  // Advances y by total time dt in equal substeps no longer than h.
  Y advance(Y y, double dt, double h) const {
    const long n = std::max(1L, static_cast<long>(std::ceil(std::abs(dt) / h - 1e-12)));
    const double sub = dt / n;
    for (long i = 0; i < n; ++i) y = step(y, sub);
    return y;
  }

  const MagneticPotential& pot_;
  int sigma_;
  double p0_;
};

double wrap(double x, double P) {
  double r = std::fmod(x, P);
  if (r < 0) r += P;
  if (r >= P) r = 0.0;
  return r;
}

PhasePoint to_point(const Y& y, double P) { return {wrap(y.x, P), y.v1, y.v2}; }

void check_start(const PhasePoint& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.v1) || !std::isfinite(p.v2))
    throw Error(ErrorKind::Size, "non-finite phase point");
}

bool stationary(const EquilibriumState& state, const PhasePoint& p) {
  if (p.v1 != 0.0) return false;
  return p.v2 == 0.0 || state.homogeneous || state.potential.B(p.x) == 0.0;
}

}  // namespace

const char* to_string(OrbitKind kind) {
  switch (kind) {
    case OrbitKind::Stationary: return "stationary";
    case OrbitKind::Passing: return "passing";
    case OrbitKind::Trapped: return "trapped";
  }
  return "unknown";
}

PhasePoint flow(const EquilibriumState& state, int sigma, const PhasePoint& start, double s,
                const StepOptions& opts, ConservationReport* report) {
  check_start(start);
  const double P = state.period();
  if (report) *report = {};
  if (s == 0.0 || stationary(state, start)) return {wrap(start.x, P), start.v1, start.v2};
  if (state.homogeneous) return {wrap(start.x + start.vhat1() * s, P), start.v1, start.v2};

  const Flow f(state, sigma, start);
  const Y y0{start.x, start.v1, start.v2};
  const double e0 = f.energy(y0), p0 = f.momentum(y0);
  double drift = 0.0;
  for (int k = 0; k <= opts.max_halvings; ++k) {
    const double h = opts.h / std::ldexp(1.0, k);
    const long n = std::max(1L, static_cast<long>(std::ceil(std::abs(s) / h - 1e-12)));
    const double sub = s / n;
    Y y = y0;
    ConservationReport rep;
    for (long i = 0; i < n; ++i) {
      y = f.step(y, sub);
      rep.de = std::max(rep.de, std::abs(f.energy(y) - e0));
      rep.dp = std::max(rep.dp, std::abs(f.momentum(y) - p0));
    }
    drift = std::max(rep.de, rep.dp);
    if (drift <= opts.tol_cons) {
      if (report) *report = rep;
      return to_point(y, P);
    }
  }
  throw Error(ErrorKind::ConservationFailure, "conservation drift irreducible below tolerance", drift);
}

TrajectorySample sample_backward(const EquilibriumState& state, int sigma, const PhasePoint& start, double S,
                                 int n_nodes, const StepOptions& opts) {
  check_start(start);
  if (n_nodes < 2) throw Error(ErrorKind::Size, "sample_backward needs at least two nodes");
  if (!(S > 0.0)) throw Error(ErrorKind::Size, "sample_backward needs a positive horizon");
  TrajectorySample ts;
  ts.species = sigma;
  Eigen::VectorXd gx, gw;
  gauss_legendre(n_nodes, gx, gw);
  ts.s_nodes = -0.5 * S * (gx.array() + 1.0);
  ts.gl_weights = 0.5 * S * gw;
  ts.states.resize(n_nodes);
  const double P = state.period();

  if (state.homogeneous || stationary(state, start)) {
    for (int i = 0; i < n_nodes; ++i) ts.states[i] = flow(state, sigma, start, ts.s_nodes(i), opts);
    return ts;
  }

  const Flow f(state, sigma, start);
  const Y y0{start.x, start.v1, start.v2};
  const double e0 = f.energy(y0), p0 = f.momentum(y0);
  double drift = 0.0;
  for (int k = 0; k <= opts.max_halvings; ++k) {
    const double h = opts.h / std::ldexp(1.0, k);
    Y y = y0;
    double s = 0.0;
    ConservationReport rep;
    for (int i = 0; i < n_nodes; ++i) {
      y = f.advance(y, ts.s_nodes(i) - s, h);
      s = ts.s_nodes(i);
      ts.states[i] = to_point(y, P);
      rep.de = std::max(rep.de, std::abs(f.energy(y) - e0));
      rep.dp = std::max(rep.dp, std::abs(f.momentum(y) - p0));
    }
    drift = std::max(rep.de, rep.dp);
    if (drift <= opts.tol_cons) {
      ts.conservation = rep;
      return ts;
    }
  }
  throw Error(ErrorKind::ConservationFailure, "conservation drift irreducible below tolerance", drift);
}

namespace {

// Backward integration until the orbit crosses its starting section again in the
// same direction. Returns the period; kind and winding are set in info.
bool detect_period(const Flow& f, const PhasePoint& start, double P, double h, const StepOptions& opts,
                   OrbitInfo& info, double& drift) {
  const Y y0{start.x, start.v1, start.v2};
  const double e0 = f.energy(y0), p0 = f.momentum(y0);
  const bool turning = std::abs(start.v1) <= 1e-10;
  const double dv1_0 = f.dv1(y0);
  const double dir = turning ? (dv1_0 >= 0 ? 1.0 : -1.0) : (start.v1 > 0 ? 1.0 : -1.0);

  auto section = [&](const Y& y) { return turning ? y.v1 : (y.x - start.x) / P; };

  Y prev = y0;
  double s = 0.0;
  drift = 0.0;
  for (long step = 0;; ++step) {
    if (-s > opts.max_period) return false;
    const Y next = f.step(prev, -h);
    drift = std::max({drift, std::abs(f.energy(next) - e0), std::abs(f.momentum(next) - p0)});
    if (drift > opts.tol_cons) return true;  // caller halves h

    bool hit = false;
    double target = 0.0;
    if (turning) {
      const bool crossed = (prev.v1 < 0.0) != (next.v1 < 0.0) || next.v1 == 0.0;
      if (crossed && step > 0 && f.dv1(next) * dir > 0.0) hit = true;
    } else {
      const double up = section(prev), un = section(next);
      const double fp = std::floor(up), fn = std::floor(un);
      if (fp != fn) {
        target = std::max(fp, fn);
        const bool trivial = step == 0 && up == target;
        if (!trivial && prev.v1 * dir > 0.0 && next.v1 * dir > 0.0) hit = true;
      }
    }
    if (hit) {
      const double g_prev = section(prev) - target;
      double lo = 0.0, hi = h;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = section(f.step(prev, -mid)) - target;
        if ((gm < 0.0) == (g_prev < 0.0))
          lo = mid;
        else
          hi = mid;
      }
      info.period = -s + 0.5 * (lo + hi);
      if (turning || target == 0.0) {
        info.kind = OrbitKind::Trapped;
        info.winding = 0;
      } else {
        info.kind = OrbitKind::Passing;
        info.winding = target < 0 ? 1 : -1;
      }
      drift = std::min(drift, opts.tol_cons);
      return true;
    }
    prev = next;
    s -= h;
  }
}

}  // namespace

OrbitInfo orbit_info(const EquilibriumState& state, int sigma, const PhasePoint& start, const StepOptions& opts) {
  check_start(start);
  OrbitInfo info;
  if (stationary(state, start)) return info;
  const double P = state.period();
  if (state.homogeneous) {
    info.kind = OrbitKind::Passing;
    info.period = P / std::abs(start.vhat1());
    info.winding = start.v1 > 0 ? 1 : -1;
    if (info.period > opts.max_period)
      throw Error(ErrorKind::OrbitNotResolved, "orbit period exceeds max_period", info.period);
    return info;
  }
  const Flow f(state, sigma, start);
  double drift = 0.0;
  for (int k = 0; k <= opts.max_halvings; ++k) {
    const double h = opts.h / std::ldexp(1.0, k);
    info.period = 0.0;
    if (!detect_period(f, start, P, h, opts, info, drift))
      throw Error(ErrorKind::OrbitNotResolved, "no closure within max_period", opts.max_period);
    if (info.period > 0.0 && drift <= opts.tol_cons) return info;
  }
  throw Error(ErrorKind::ConservationFailure, "conservation drift irreducible while measuring period", drift);
}

OrbitSamples sample_orbit(const EquilibriumState& state, int sigma, const PhasePoint& start, int n,
                          const StepOptions& opts) {
  OrbitSamples out;
  out.info = orbit_info(state, sigma, start, opts);
  out.x.resize(n);
  out.v1.resize(n);
  out.v2.resize(n);
  const double P = state.period();
  const double T = out.info.period;
  if (out.info.kind == OrbitKind::Stationary) {
    out.x.setConstant(wrap(start.x, P));
    out.v1.setConstant(start.v1);
    out.v2.setConstant(start.v2);
    return out;
  }
  if (state.homogeneous) {
    const double vh = start.vhat1();
    for (int q = 0; q < n; ++q) out.x(q) = wrap(start.x - vh * T * q / n, P);
    out.v1.setConstant(start.v1);
    out.v2.setConstant(start.v2);
    return out;
  }
  const Flow f(state, sigma, start);
  const Y y0{start.x, start.v1, start.v2};
  const double e0 = f.energy(y0), p0 = f.momentum(y0);
  double drift = 0.0;
  for (int k = 0; k <= opts.max_halvings; ++k) {
    const double h = opts.h / std::ldexp(1.0, k);
    Y y = y0;
    ConservationReport rep;
    for (int q = 0; q < n; ++q) {
      if (q > 0) y = f.advance(y, -T / n, h);
      out.x(q) = wrap(y.x, P);
      out.v1(q) = y.v1;
      out.v2(q) = y.v2;
      rep.de = std::max(rep.de, std::abs(f.energy(y) - e0));
      rep.dp = std::max(rep.dp, std::abs(f.momentum(y) - p0));
    }
    y = f.advance(y, -T / n, h);
    drift = std::max(rep.de, rep.dp);
    if (drift <= opts.tol_cons) {
      out.conservation = rep;
      double dx = std::abs(wrap(y.x, P) - wrap(start.x, P));
      dx = std::min(dx, P - dx);
      out.closure = dx + std::abs(y.v1 - start.v1) + std::abs(y.v2 - start.v2);
      return out;
    }
  }
  throw Error(ErrorKind::ConservationFailure, "conservation drift irreducible while sampling orbit", drift);
}

}  // namespace vmspec
