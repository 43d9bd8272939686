#include "vmspec/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Core>

#include "vmspec/error.hpp"

namespace vmspec {

namespace {

using ojson = nlohmann::ordered_json;
constexpr const char* kVersion = "vmspec 0.1.0";
constexpr double kPi = std::numbers::pi;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw Error(ErrorKind::Config, "bad number for " + key + ": '" + text + "'");
  return v;
}

long to_long(const std::string& key, const std::string& text) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorKind::Config, "bad integer for " + key + ": '" + text + "'");
  return v;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ProfileDefaults {
  WeightSpec weight;
  double period;
  int n_r, n_theta, N_x, n, n_s, lambda_count;
  double tol_sym;
};

ProfileDefaults defaults_for(const std::string& profile) {
  if (profile == "paper_homogeneous") return {{1e8, 12.0}, 2.0 * kPi, 32, 256, 32, 8, 64, 48, 1e-6};
  if (profile == "weakfield_family") return {{1e9, 12.0}, 0.0, 8, 64, 8, 4, 64, 24, 1e-3};
  if (profile == "zero") return {{1.0, 12.0}, 2.0 * kPi, 8, 32, 8, 4, 64, 48, 1e-6};
  throw Error(ErrorKind::Config, "unknown profile: " + profile);
}

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

ojson residual_json(const Residual& r) {
  return {{"relative", r.relative}, {"absolute", r.absolute}, {"pass", r.pass}};
}

ojson residuals_json(const ResidualReport& r) {
  return {{"gauss", residual_json(r.gauss)},
          {"ampere1", residual_json(r.ampere1)},
          {"ampere2", residual_json(r.ampere2)},
          {"continuity", residual_json(r.continuity)},
          {"vlasov_weak", residual_json(r.vlasov_weak)},
          {"weak_tests", r.n_tests},
          {"rho_mean", r.rho_mean},
          {"tol", r.tol},
          {"pass", r.pass}};
}

void finish_report(CommandResult& res, Pipeline* p, const std::string& hash, const CommandOptions& opts) {
  ojson prov;
  prov["config_hash"] = hash;
  prov["version"] = kVersion;
  prov["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                  std::to_string(EIGEN_MINOR_VERSION);
  if (!opts.canonical && p) {
    ojson t = ojson::object();
    for (const auto& [name, sec] : p->timings) t[name] = sec;
    prov["timings"] = t;
  }
  res.report["provenance"] = prov;
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out_dir);
  return std::filesystem::path(cfg.out_dir) / name;
}

void write_json(CommandResult& res, const RunConfig& cfg, const std::string& name) {
  const auto path = out_path(cfg, name);
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Config, "cannot write " + path.string());
  os << res.report.dump(2) << '\n';
  res.files.push_back(path.string());
}

template <class Writer>
void write_csv(CommandResult& res, const RunConfig& cfg, const std::string& name, const std::string& hash,
               Writer&& writer) {
  const auto path = out_path(cfg, name);
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Config, "cannot write " + path.string());
  os << "# config_hash=" << hash << '\n';
  writer(os);
  res.files.push_back(path.string());
}

ojson header(const std::string& command, const Pipeline& p, const std::string& hash) {
  ojson j;
  j["command"] = command;
  j["profile"] = p.config().profile;
  j["config_hash"] = hash;
  return j;
}

ojson quad_json(const VelocityQuadrature& q) {
  return {{"n_v", q.size()},
          {"r_max", q.r_max},
          {"panels", static_cast<int>(q.panel_edges.size()) - 1},
          {"n_r_per_panel", q.n_r_per_panel},
          {"n_theta", q.n_theta}};
}

ojson equilibrium_json(Pipeline& p) {
  const EquilibriumState& st = p.equilibrium();
  ojson j;
  j["homogeneous"] = st.homogeneous;
  j["period"] = st.period();
  if (!st.homogeneous) {
    j["epsilon"] = st.epsilon;
    j["T_psi"] = st.period();
    j["P_cr"] = st.p_cr;
    j["T_psi_over_P_cr"] = st.period() / st.p_cr;
    j["psi_C1"] = st.psi_c1;
    j["ode_residual"] = st.ode_residual;
    j["richardson_error"] = st.richardson_error;
    j["sup_B"] = st.potential.sup_B();
    const CenterCheck cc = check_center_conditions(p.profile(), p.quad());
    const StabilityCondition sc = evaluate_stabcond(p.profile(), p.quad(), cc.gprime0);
    j["center"] = {{"g0", cc.g0}, {"gprime0", cc.gprime0}, {"ok", cc.ok}};
    j["stabcond"] = {{"sup_mu_e", sc.sup_mu_e},
                     {"measure_Sb", sc.measure_Sb},
                     {"P_cr", sc.p_cr},
                     {"bound", sc.bound},
                     {"satisfied", sc.satisfied}};
  }
  return j;
}

// Counts at lambda = 0, verdict and K_n. Fills `out`.
Verdict counts_and_verdict(Pipeline& p, ojson& out) {
  const RunConfig& cfg = p.config();
  const OperatorBlocks& b0 = p.blocks0();
  const EigenContext& ctx = p.context();
  const double scale1 = std::max(b0.A1.cwiseAbs().maxCoeff(), 1e-300);
  const double scale2 = std::max(b0.A2.cwiseAbs().maxCoeff(), 1e-300);
  const CountReport c1 = count_signs(ctx.alpha, cfg.tol_eig * scale1);
  const CountReport c2 = count_signs(ctx.beta, cfg.tol_eig * scale2);
  const double tol_l = cfg.tol_eig * std::max({scale1, scale2, 1.0});
  ojson counts;
  counts["neg_A1"] = c1.neg;
  counts["neg_A2"] = c2.neg;
  counts["zero_A2"] = c2.zero;
  counts["ker_A2_trivial"] = c2.zero == 0;
  counts["l0"] = b0.l;
  counts["neg_minus_l0"] = b0.l > 0.0 ? 1 : 0;
  counts["tol_l0"] = tol_l;
  counts["A1_eigenvalues"] = to_std(ctx.alpha.head(std::min<Eigen::Index>(8, ctx.alpha.size())));
  counts["A2_eigenvalues"] = to_std(ctx.beta.head(std::min<Eigen::Index>(8, ctx.beta.size())));
  auto neg_of = [&](const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return count_signs(es.eigenvalues(), cfg.tol_eig * M.cwiseAbs().maxCoeff()).neg;
  };
  const Eigen::VectorXd grid = p.lambda_grid();
  const double lambda_max = grid(grid.size() - 1);
  const OperatorBlocks big = p.assembler().assemble(lambda_max);
  ojson kn = ojson::array();
  for (int n : {cfg.n, 2 * cfg.n}) {
    if (n > cfg.N_x) continue;
    kn.push_back({{"n", n},
                  {"K_n", predicted_count(n, c1.neg, c2.neg, b0.l)},
                  {"neg_M0", neg_of(assemble_M(b0, n, ctx))},
                  {"lambda_max", lambda_max},
                  {"neg_M_lambda_max", neg_of(assemble_M(big, n, ctx))}});
  }
  counts["K_n"] = kn;
  out["counts"] = counts;
  out["diagnostics"] = {{"sym_defect_A1", b0.sym_defect_A1},
                        {"sym_defect_A2", b0.sym_defect_A2},
                        {"adjoint_defect", b0.adjoint_defect},
                        {"vanishing_moment", b0.vanishing_moment},
                        {"parity_moment", b0.parity_moment},
                        {"B0_norm", b0.B.norm()},
                        {"C0_norm", b0.C.norm()},
                        {"D0_norm", b0.D.norm()}};
  try {
    const Verdict v = verdict(c1.neg, c2.neg, b0.l, c2.zero == 0, tol_l);
    out["verdict"] = to_string(v);
    return v;
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::HypothesisFailure) throw;
    out["verdict"] = to_string(Verdict::Inconclusive);
    out["note"] = "hypothesis failure: l0 ~ 0";
    return Verdict::Inconclusive;
  }
}

ojson sweep_json(const SweepResult& sw) {
  ojson j;
  j["lambda_min"] = sw.lambdas(0);
  j["lambda_max"] = sw.lambdas(sw.lambdas.size() - 1);
  j["count"] = sw.lambdas.size();
  std::vector<int> neg;
  for (const auto& c : sw.counts) neg.push_back(c.neg);
  j["neg"] = neg;
  j["min_abs_eigenvalue"] = to_std(sw.min_abs);
  ojson cr = ojson::array();
  for (const auto& [a, b] : sw.crossings)
    cr.push_back({{"lambda_lo", sw.lambdas(a)},
                  {"lambda_hi", sw.lambdas(b)},
                  {"neg_lo", sw.counts[a].neg},
                  {"neg_hi", sw.counts[b].neg}});
  j["crossings"] = cr;
  return j;
}

// Locates the first crossing, reconstructs and checks the mode. Returns null json when
// the sweep has no crossing.
ojson find_mode(Pipeline& p, const SweepResult& sw, CommandResult& res, const std::string& hash) {
  if (sw.crossings.empty()) return nullptr;
  const RunConfig& cfg = p.config();
  Stopwatch t;
  const KernelCrossing kc = locate_kernel(sw, p.assembler(), p.context(), cfg.n, 0, cfg.tol_kernel, cfg.tol_eig);
  const GrowingMode mode = reconstruct(p.assembler(), kc);
  const ResidualReport rr = residuals(p.assembler(), mode, cfg.tol_residual);
  p.timings.emplace_back("mode", t.seconds());
  ojson j;
  j["lambda_star"] = kc.lambda_star;
  j["iterations"] = kc.iterations;
  j["min_abs_eigenvalue"] = kc.min_abs_eig;
  j["b"] = kc.b;
  j["phi_norm"] = kc.phi.norm();
  j["psi_norm"] = kc.psi.norm();
  j["residuals"] = residuals_json(rr);

  ojson manifest = ojson::parse(mode_manifest_json(mode, rr));
  manifest["config_hash"] = hash;
  CommandResult tmp;
  tmp.report = manifest;
  write_json(tmp, cfg, "mode.json");
  write_csv(tmp, cfg, "mode_fields.csv", hash, [&](std::ostream& os) { write_mode_fields_csv(os, mode); });
  write_csv(tmp, cfg, "mode_distribution.csv", hash,
            [&](std::ostream& os) { write_mode_distribution_csv(os, mode, p.quad()); });
  res.files.insert(res.files.end(), tmp.files.begin(), tmp.files.end());
  return j;
}

SweepResult run_sweep(Pipeline& p) {
  Stopwatch t;
  const SweepResult sw = sweep(p.assembler(), p.context(), p.config().n, p.lambda_grid(), p.config().tol_eig);
  p.timings.emplace_back("sweep", t.seconds());
  return sw;
}

}  // namespace

// ---------------------------------------------------------------------------
// Settings and configuration

Settings parse_settings(std::istream& in, const std::string& source) {
  Settings s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Config, source + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw Error(ErrorKind::Config, source + ":" + std::to_string(lineno) + ": empty key or value");
    s[key] = value;
  }
  return s;
}

Settings read_settings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config file " + path);
  return parse_settings(in, path);
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "profile.name", "weight.c",   "weight.alpha", "domain.period", "domain.epsilon", "grid.n_r",
      "grid.n_theta", "grid.N_x",   "grid.n",       "grid.n_s",      "tol.tail",       "tol.cons",
      "tol.eig",      "tol.kernel", "tol.residual", "tol.sym",       "tol.equil",      "lambda.min",
      "lambda.max",   "lambda.count", "output.dir", "run.seed",      "run.jobs"};
  return keys;
}

RunConfig resolve_config(const Settings& settings) {
  RunConfig cfg;
  if (auto it = settings.find("profile.name"); it != settings.end()) cfg.profile = it->second;
  const ProfileDefaults d = defaults_for(cfg.profile);
  cfg.weight = d.weight;
  cfg.period = d.period;
  cfg.n_r = d.n_r;
  cfg.n_theta = d.n_theta;
  cfg.N_x = d.N_x;
  cfg.n = d.n;
  cfg.n_s = d.n_s;
  cfg.lambda_count = d.lambda_count;
  cfg.tol_sym = d.tol_sym;

  const auto& keys = known_keys();
  for (const auto& [key, value] : settings) {
    if (key == "profile.name") continue;
    if (key.rfind("profile.", 0) == 0) {
      cfg.params[key.substr(8)] = to_double(key, value);
      continue;
    }
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw Error(ErrorKind::Config, "unknown config key: " + key);
    auto tol = [&](double& field) {
      field = to_double(key, value);
      if (!(field > 0.0 && field < 1.0)) throw Error(ErrorKind::Config, key + " must lie in (0, 1)");
    };
    auto size = [&](int& field) {
      const long v = to_long(key, value);
      if (v < 1 || v > 1000000) throw Error(ErrorKind::Config, key + " must be a positive size");
      field = static_cast<int>(v);
    };
    if (key == "weight.c") cfg.weight.c = to_double(key, value);
    else if (key == "weight.alpha") cfg.weight.alpha = to_double(key, value);
    else if (key == "domain.period") {
      if (!cfg.homogeneous())
        throw Error(ErrorKind::Config, "domain.period does not apply to weakfield_family (the period is T_psi)");
      cfg.period = to_double(key, value);
    } else if (key == "domain.epsilon") {
      if (cfg.homogeneous()) throw Error(ErrorKind::Config, "domain.epsilon applies to weakfield_family only");
      cfg.epsilon = to_double(key, value);
    }
    else if (key == "grid.n_r") size(cfg.n_r);
    else if (key == "grid.n_theta") size(cfg.n_theta);
    else if (key == "grid.N_x") size(cfg.N_x);
    else if (key == "grid.n") size(cfg.n);
    else if (key == "grid.n_s") size(cfg.n_s);
    else if (key == "tol.tail") tol(cfg.tol_tail);
    else if (key == "tol.cons") tol(cfg.tol_cons);
    else if (key == "tol.eig") tol(cfg.tol_eig);
    else if (key == "tol.kernel") tol(cfg.tol_kernel);
    else if (key == "tol.residual") tol(cfg.tol_residual);
    else if (key == "tol.sym") tol(cfg.tol_sym);
    else if (key == "tol.equil") tol(cfg.tol_equil);
    else if (key == "lambda.min") cfg.lambda_min = to_double(key, value);
    else if (key == "lambda.max") cfg.lambda_max = to_double(key, value);
    else if (key == "lambda.count") size(cfg.lambda_count);
    else if (key == "output.dir") cfg.out_dir = value;
    else if (key == "run.seed") {
      const long v = to_long(key, value);
      if (v < 0) throw Error(ErrorKind::Config, "run.seed must be nonnegative");
      cfg.seed = static_cast<std::uint64_t>(v);
    } else if (key == "run.jobs") size(cfg.jobs);
  }

  if (!cfg.params.empty() && cfg.profile != "weakfield_family")
    throw Error(ErrorKind::Config, cfg.profile + " takes no profile parameters");
  if (!(cfg.weight.c > 0.0)) throw Error(ErrorKind::Config, "weight.c must be positive");
  if (!(cfg.weight.alpha > 2.0)) throw Error(ErrorKind::Config, "weight.alpha must exceed 2 for integrability");
  if (cfg.homogeneous() && !(cfg.period > 0.0)) throw Error(ErrorKind::Config, "domain.period must be positive");
  if (!(cfg.epsilon > 0.0)) throw Error(ErrorKind::Config, "domain.epsilon must be positive");
  if (cfg.n_theta % 2 != 0 || cfg.n_theta < 4) throw Error(ErrorKind::Config, "grid.n_theta must be even and >= 4");
  if (cfg.N_x % 2 != 0 || cfg.N_x < 2) throw Error(ErrorKind::Config, "grid.N_x must be even and >= 2");
  if (cfg.n > cfg.N_x) throw Error(ErrorKind::Config, "grid.n must not exceed grid.N_x");
  if (cfg.n_s % 2 != 0 || cfg.n_s < 16) throw Error(ErrorKind::Config, "grid.n_s must be even and >= 16");
  if (cfg.lambda_count < 2) throw Error(ErrorKind::Config, "lambda.count must be at least 2");
  if (cfg.lambda_min < 0.0 || cfg.lambda_max < 0.0) throw Error(ErrorKind::Config, "lambda bounds must be positive");
  if (cfg.lambda_min > 0.0 && cfg.lambda_max > 0.0 && !(cfg.lambda_min < cfg.lambda_max))
    throw Error(ErrorKind::Config, "lambda.min must be below lambda.max");
  // Profile parameters are checked by the profile constructor.
  make_profile(cfg.profile, cfg.params, cfg.weight);
  return cfg;
}

std::string canonical_text(const RunConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["profile.name"] = cfg.profile;
  for (const auto& [k, v] : cfg.params) kv["profile." + k] = fmt(v);
  kv["weight.c"] = fmt(cfg.weight.c);
  kv["weight.alpha"] = fmt(cfg.weight.alpha);
  if (cfg.homogeneous())
    kv["domain.period"] = fmt(cfg.period);
  else
    kv["domain.epsilon"] = fmt(cfg.epsilon);
  kv["grid.n_r"] = std::to_string(cfg.n_r);
  kv["grid.n_theta"] = std::to_string(cfg.n_theta);
  kv["grid.N_x"] = std::to_string(cfg.N_x);
  kv["grid.n"] = std::to_string(cfg.n);
  kv["grid.n_s"] = std::to_string(cfg.n_s);
  kv["tol.tail"] = fmt(cfg.tol_tail);
  kv["tol.cons"] = fmt(cfg.tol_cons);
  kv["tol.eig"] = fmt(cfg.tol_eig);
  kv["tol.kernel"] = fmt(cfg.tol_kernel);
  kv["tol.residual"] = fmt(cfg.tol_residual);
  kv["tol.sym"] = fmt(cfg.tol_sym);
  kv["tol.equil"] = fmt(cfg.tol_equil);
  kv["lambda.min"] = fmt(cfg.lambda_min);
  kv["lambda.max"] = fmt(cfg.lambda_max);
  kv["lambda.count"] = std::to_string(cfg.lambda_count);
  kv["run.seed"] = std::to_string(cfg.seed);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(cfg))));
  return buf;
}

GoldenIntegrals homogeneous_golden(const EquilibriumProfile& profile, const VelocityQuadrature& quad) {
  GoldenIntegrals g;
  const double r_kink = std::sqrt(3.0);
  double inner = 0.0, outer = 0.0, mass_outer = 0.0, mass = 0.0;
  for (Eigen::Index j = 0; j < quad.size(); ++j) {
    const double v1 = quad.v1(j), v2 = quad.v2(j);
    const double e = std::sqrt(1.0 + v1 * v1 + v2 * v2);
    const double r = std::hypot(v1, v2);
    const double me = profile.mu_e(-1, e, v2);
    const double a = v1 / e;
    const double w = quad.w(j);
    mass += w * me;
    if (r < r_kink) {
      inner += w * me * a * a;
    } else {
      outer += w * me * a * a;
      mass_outer += w * me;
    }
  }
  // The angular integral of cos^2 is pi and of 1 is 2 pi.
  g.I = inner / kPi;
  g.II = outer / kPi;
  g.tail = -mass_outer / (2.0 * kPi);
  g.mu_e_integral = mass;
  g.l0 = 2.0 * (inner + outer);
  return g;
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(const RunConfig& cfg) : cfg_(cfg) {
  Stopwatch t;
  profile_ = make_profile(cfg.profile, cfg.params, cfg.weight);
  quad_ = build_velocity_quadrature(cfg.weight, profile_.kinks, cfg.tol_tail, cfg.n_r, cfg.n_theta);
  timings.emplace_back("quadrature", t.seconds());
}

Pipeline::~Pipeline() = default;

const EquilibriumState& Pipeline::equilibrium() {
  if (!state_) {
    Stopwatch t;
    if (cfg_.homogeneous()) {
      state_ = make_homogeneous_state(profile_, cfg_.period);
    } else {
      CenterOdeOptions opts;
      opts.tol_equil = cfg_.tol_equil;
      state_ = solve_equilibrium_potential(profile_, cfg_.epsilon, quad_, opts);
    }
    timings.emplace_back("equilibrium", t.seconds());
  }
  return *state_;
}

const BlockAssembler& Pipeline::assembler() {
  if (!assembler_) {
    const EquilibriumState& st = equilibrium();
    Stopwatch t;
    const FourierBasis basis = build_fourier_basis(st.period(), cfg_.N_x, false);
    AssemblyOptions ao;
    ao.smoothing.n_s = cfg_.n_s;
    ao.smoothing.step.tol_cons = cfg_.tol_cons;
    ao.tol_sym = cfg_.tol_sym;
    ao.jobs = cfg_.jobs;
    assembler_ = std::make_unique<BlockAssembler>(st, basis, quad_, ao);
    timings.emplace_back("orbits", t.seconds());
  }
  return *assembler_;
}

const OperatorBlocks& Pipeline::blocks0() {
  if (!blocks0_) {
    const BlockAssembler& as = assembler();
    Stopwatch t;
    blocks0_ = as.assemble(0.0);
    timings.emplace_back("assemble_lambda0", t.seconds());
  }
  return *blocks0_;
}

const EigenContext& Pipeline::context() {
  if (!ctx_) ctx_ = make_eigen_context(blocks0(), cfg_.tol_eig);
  return *ctx_;
}

Eigen::VectorXd Pipeline::lambda_grid() {
  const double P = equilibrium().period();
  const double k1 = 2.0 * kPi / P;
  const double lo = cfg_.lambda_min > 0.0 ? cfg_.lambda_min : 1e-2 * k1;
  const double hi = cfg_.lambda_max > 0.0 ? cfg_.lambda_max : 1e2 * k1;
  if (!(lo < hi)) throw Error(ErrorKind::Config, "lambda grid is empty");
  return default_lambda_grid(P, cfg_.lambda_count, lo / k1, hi / k1);
}

// ---------------------------------------------------------------------------
// Commands

CommandResult cmd_validate(Pipeline& p, const CommandOptions& opts) {
  const std::string hash = config_hash(p.config());
  CommandResult res;
  res.report = header("validate", p, hash);
  Stopwatch t;
  const ValidationReport vr = validate_profile(p.profile(), p.config().weight);
  p.timings.emplace_back("validate", t.seconds());
  res.report["validation"] = {{"e_max", vr.e_max},
                              {"p_max", vr.p_max},
                              {"max_negativity", vr.max_negativity},
                              {"max_decay_violation", vr.max_decay_violation},
                              {"decay_violation_at", {vr.decay_violation_e, vr.decay_violation_p}},
                              {"max_symmetry_violation", vr.max_symmetry_violation},
                              {"pass", vr.pass}};
  res.report["quadrature"] = quad_json(p.quad());
  if (!p.config().homogeneous()) {
    const CenterCheck cc = check_center_conditions(p.profile(), p.quad());
    res.report["center"] = {{"g0", cc.g0},
                            {"gprime0", cc.gprime0},
                            {"ok", cc.ok},
                            {"P_cr", cc.gprime0 < 0.0 ? 2.0 * kPi / std::sqrt(-cc.gprime0) : 0.0}};
  }
  finish_report(res, &p, hash, opts);
  write_json(res, p.config(), "validate.json");
  return res;
}

CommandResult cmd_equilibrium(Pipeline& p, const CommandOptions& opts) {
  const std::string hash = config_hash(p.config());
  CommandResult res;
  res.report = header("equilibrium", p, hash);
  res.report["equilibrium"] = equilibrium_json(p);
  finish_report(res, &p, hash, opts);
  write_json(res, p.config(), "equilibrium.json");
  const EquilibriumState& st = p.equilibrium();
  write_csv(res, p.config(), "potential.csv", hash, [&](std::ostream& os) {
    os << "x,psi,B\n";
    os.precision(17);
    const int n = 256;
    for (int i = 0; i < n; ++i) {
      const double x = st.period() * i / n;
      double psi = 0.0, B = 0.0;
      if (!st.homogeneous) st.potential.eval(x, psi, B);
      os << x << ',' << psi << ',' << B << '\n';
    }
  });
  return res;
}

CommandResult cmd_assemble(Pipeline& p, const CommandOptions& opts) {
  const std::string hash = config_hash(p.config());
  CommandResult res;
  res.report = header("assemble", p, hash);
  const BlockAssembler& as = p.assembler();
  Stopwatch t;
  const OperatorBlocks blk = as.assemble(opts.lambda);
  p.timings.emplace_back("assemble", t.seconds());
  res.report["blocks"] = ojson::parse(blocks_manifest_json(blk, p.config().tol_sym));
  const OrbitCacheStats cs = as.cache_stats();
  res.report["orbits"] = {{"passing", cs.passing},
                          {"trapped", cs.trapped},
                          {"stationary", cs.stationary},
                          {"unresolved", cs.unresolved},
                          {"max_drift", cs.max_drift},
                          {"max_closure", cs.max_closure}};
  finish_report(res, &p, hash, opts);
  write_json(res, p.config(), "blocks.json");
  write_csv(res, p.config(), "blocks.csv", hash, [&](std::ostream& os) { write_blocks_csv(os, blk); });
  return res;
}

CommandResult cmd_sweep(Pipeline& p, const CommandOptions& opts) {
  const std::string hash = config_hash(p.config());
  CommandResult res;
  res.report = header("sweep", p, hash);
  const SweepResult sw = run_sweep(p);
  res.report["n"] = p.config().n;
  res.report["sweep"] = sweep_json(sw);
  finish_report(res, &p, hash, opts);
  write_json(res, p.config(), "sweep.json");
  write_csv(res, p.config(), "spectra.csv", hash, [&](std::ostream& os) { write_sweep_csv(os, sw); });
  return res;
}

CommandResult cmd_analyze(Pipeline& p, const CommandOptions& opts) {
  const RunConfig& cfg = p.config();
  const std::string hash = config_hash(cfg);
  CommandResult res;
  res.report = header("analyze", p, hash);
  res.report["n"] = cfg.n;
  res.report["N_x"] = cfg.N_x;
  res.report["equilibrium"] = equilibrium_json(p);
  counts_and_verdict(p, res.report);
  const SweepResult sw = run_sweep(p);
  res.report["sweep"] = sweep_json(sw);
  if (opts.find_mode) {
    res.report["crossing"] = find_mode(p, sw, res, hash);
    if (sw.crossings.empty()) res.report["crossing_note"] = "neg(M) does not change over the lambda grid";
  }
  if (opts.emit_spectra)
    write_csv(res, cfg, "spectra.csv", hash, [&](std::ostream& os) { write_sweep_csv(os, sw); });
  finish_report(res, &p, hash, opts);
  write_json(res, cfg, "report.json");
  return res;
}

CommandResult cmd_mode(Pipeline& p, const CommandOptions& opts) {
  CommandOptions o = opts;
  o.find_mode = true;
  CommandResult res = cmd_analyze(p, o);
  if (res.report["crossing"].is_null())
    throw Error(ErrorKind::NoCrossing, "no kernel crossing on the lambda grid");
  return res;
}

namespace {

GoldenEntry golden(const std::string& name, double value, double expected, double tol) {
  return {name, value, expected, tol, std::isfinite(value) && std::abs(value - expected) <= tol};
}

ojson golden_json(const std::vector<GoldenEntry>& table) {
  ojson arr = ojson::array();
  for (const auto& g : table)
    arr.push_back({{"name", g.name}, {"value", g.value}, {"expected", g.expected}, {"tol", g.tol}, {"pass", g.pass}});
  return arr;
}

}  // namespace

CommandResult cmd_example(const Settings& settings, const CommandOptions& opts) {
  // Pinned defaults; only output and worker settings pass through.
  Settings pinned;
  if (opts.example == "homogeneous")
    pinned["profile.name"] = "paper_homogeneous";
  else if (opts.example == "weakfield")
    pinned["profile.name"] = "weakfield_family";
  else
    throw Error(ErrorKind::Config, "example must be homogeneous or weakfield");
  for (const char* key : {"output.dir", "run.jobs"})
    if (auto it = settings.find(key); it != settings.end()) pinned[key] = it->second;
  const RunConfig cfg = resolve_config(pinned);
  const std::string hash = config_hash(cfg);
  Pipeline p(cfg);
  CommandResult res;
  res.report = header("example", p, hash);
  res.report["example"] = opts.example;
  std::vector<GoldenEntry> table;

  if (opts.example == "homogeneous") {
    const GoldenIntegrals g = homogeneous_golden(p.profile(), p.quad());
    const double I = 1.5 - std::log(2.0);
    const double tail = std::sqrt(kPi) / 2.0 + 2.0;
    const double II = -2.531116789945364;
    table.push_back(golden("I", g.I, I, 1e-8));
    table.push_back(golden("II", g.II, II, 1e-8));
    table.push_back(golden("II_range", g.II, -2.5, 0.15));
    table.push_back(golden("tail_moment", g.tail, tail, 1e-6));
    table.push_back(golden("mu_e_integral", g.mu_e_integral, 2.0 * kPi * (1.5 - tail), 1e-6));
    table.push_back(golden("l0", p.blocks0().l, 2.0 * kPi * (I + II), 1e-6));
    counts_and_verdict(p, res.report);
    if (opts.emit_spectra) {
      const SweepResult sw = run_sweep(p);
      res.report["sweep"] = sweep_json(sw);
      write_csv(res, cfg, "spectra.csv", hash, [&](std::ostream& os) { write_sweep_csv(os, sw); });
    }
  } else {
    res.report["equilibrium"] = equilibrium_json(p);
    const double p_cr = p.equilibrium().p_cr;
    ojson conv = ojson::array();
    double ratio_small = 0.0;
    for (double eps : {cfg.epsilon, cfg.epsilon / 2, cfg.epsilon / 4}) {
      CenterOdeOptions o;
      o.tol_equil = cfg.tol_equil;
      const EquilibriumState st = solve_equilibrium_potential(p.profile(), eps, p.quad(), o);
      conv.push_back({{"epsilon", eps},
                      {"T_psi", st.period()},
                      {"T_psi_over_P_cr", st.period() / p_cr},
                      {"ode_residual", st.ode_residual},
                      {"psi_C1", st.psi_c1}});
      ratio_small = st.period() / p_cr;
      char tag[32];
      std::snprintf(tag, sizeof tag, "%g", eps);
      table.push_back(golden(std::string("ode_residual_eps_") + tag, st.ode_residual, 0.0, cfg.tol_equil));
    }
    res.report["epsilon_sequence"] = conv;
    table.push_back(golden("T_psi_over_P_cr_smallest_eps", ratio_small, 1.0, 0.02));
    table.push_back(golden("P_cr", p_cr, 2.5742983947918607, 1e-6));
    // Reported, not asserted: the conclusion needs epsilon small enough.
    counts_and_verdict(p, res.report);
    if (opts.emit_spectra) {
      const SweepResult sw = run_sweep(p);
      res.report["sweep"] = sweep_json(sw);
      write_csv(res, cfg, "spectra.csv", hash, [&](std::ostream& os) { write_sweep_csv(os, sw); });
    }
  }

  res.report["golden"] = golden_json(table);
  std::vector<std::string> bad;
  for (const auto& g : table)
    if (!g.pass) bad.push_back(g.name);
  res.report["golden_pass"] = bad.empty();
  if (!bad.empty()) {
    res.report["golden_mismatch"] = bad;
    res.exit_code = exit_code(ErrorKind::GoldenMismatch);
  }
  finish_report(res, &p, hash, opts);
  write_json(res, cfg, "example_" + opts.example + ".json");
  return res;
}

CommandResult run_command(const std::string& command, const Settings& settings, const CommandOptions& opts,
                          std::ostream& log) {
  std::string out_dir = ".";
  if (auto it = settings.find("output.dir"); it != settings.end()) out_dir = it->second;
  std::string hash = "";
  try {
    CommandResult res;
    if (command == "example") {
      res = cmd_example(settings, opts);
    } else {
      const RunConfig cfg = resolve_config(settings);
      hash = config_hash(cfg);
      Pipeline p(cfg);
      if (command == "validate") res = cmd_validate(p, opts);
      else if (command == "equilibrium") res = cmd_equilibrium(p, opts);
      else if (command == "assemble") res = cmd_assemble(p, opts);
      else if (command == "sweep") res = cmd_sweep(p, opts);
      else if (command == "analyze") res = cmd_analyze(p, opts);
      else if (command == "mode") res = cmd_mode(p, opts);
      else throw Error(ErrorKind::Config, "unknown command: " + command);
    }
    const auto& r = res.report;
    if (r.contains("verdict")) log << "verdict: " << r["verdict"].get<std::string>() << '\n';
    if (r.contains("golden")) {
      for (const auto& g : r["golden"])
        log << (g["pass"].get<bool>() ? "ok       " : "MISMATCH ") << g["name"].get<std::string>() << " = "
            << g["value"].get<double>() << " (expected " << g["expected"].get<double>() << " +- "
            << g["tol"].get<double>() << ")\n";
    }
    for (const auto& f : res.files) log << "wrote " << f << '\n';
    return res;
  } catch (const Error& err) {
    CommandResult res;
    res.exit_code = exit_code(err.kind());
    res.report["error"] = to_string(err.kind());
    res.report["message"] = err.what();
    res.report["value"] = err.value();
    res.report["exit_code"] = res.exit_code;
    if (!hash.empty()) res.report["config_hash"] = hash;
    log << "error (" << to_string(err.kind()) << "): " << err.what() << '\n';
    try {
      std::filesystem::create_directories(out_dir);
      const auto path = std::filesystem::path(out_dir) / "error.json";
      std::ofstream os(path);
      os << res.report.dump(2) << '\n';
      res.files.push_back(path.string());
    } catch (const std::exception&) {
    }
    return res;
  }
}

std::string rederive_verdict(const nlohmann::ordered_json& report) {
  const auto& c = report.at("counts");
  const int a1 = c.at("neg_A1").get<int>();
  const int a2 = c.at("neg_A2").get<int>();
  const double l0 = c.at("l0").get<double>();
  const double tol = c.at("tol_l0").get<double>();
  const bool ker = c.at("ker_A2_trivial").get<bool>();
  try {
    return to_string(verdict(a1, a2, l0, ker, tol));
  } catch (const Error&) {
    return to_string(Verdict::Inconclusive);
  }
}

}  // namespace vmspec
