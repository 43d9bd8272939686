#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmspec/equilibrium.hpp"
#include "vmspec/growing_mode.hpp"
#include "vmspec/operators.hpp"
#include "vmspec/spectra.hpp"

namespace vmspec {

// Raw dotted key=value settings, later keys win.
using Settings = std::map<std::string, std::string>;

Settings parse_settings(std::istream& in, const std::string& source = "<config>");
Settings read_settings_file(const std::string& path);

struct RunConfig {
  std::string profile = "paper_homogeneous";
  std::map<std::string, double> params;
  WeightSpec weight{1e8, 12.0};
  double period = 0.0;   // homogeneous profiles
  double epsilon = 0.05; // weakfield_family
  int n_r = 32, n_theta = 256, N_x = 32, n = 8, n_s = 64;
  double tol_tail = 1e-12, tol_cons = 1e-8, tol_eig = 1e-8, tol_kernel = 1e-8, tol_residual = 1e-4;
  double tol_sym = 1e-6, tol_equil = 1e-6;
  double lambda_min = 0.0, lambda_max = 0.0;  // absolute; resolved from the period when 0
  int lambda_count = 48;
  std::string out_dir = ".";
  std::uint64_t seed = 20240917;
  int jobs = 1;

  bool homogeneous() const { return profile != "weakfield_family"; }
};

// Profile defaults overlaid with the settings. Unknown keys and out-of-range values
// raise a Config error.
RunConfig resolve_config(const Settings& settings);

// Every key accepted by resolve_config (profile parameters excepted).
const std::vector<std::string>& known_keys();

// key=value lines of every result-affecting field, sorted.
std::string canonical_text(const RunConfig& cfg);
std::uint64_t fnv1a64(const std::string& text);
std::string config_hash(const RunConfig& cfg);

struct GoldenIntegrals {
  double I = 0.0;     // int_0^sqrt3 r^3/(1+r^2) dr
  double II = 0.0;    // int_sqrt3^inf eta'(<v>) r^3/(1+r^2) dr
  double tail = 0.0;  // -int_sqrt3^inf eta'(<v>) r dr
  double mu_e_integral = 0.0;  // one species
  double l0 = 0.0;             // both species
};

// Read off the velocity quadrature split at the kink r = sqrt(3).
GoldenIntegrals homogeneous_golden(const EquilibriumProfile& profile, const VelocityQuadrature& quad);

struct GoldenEntry {
  std::string name;
  double value = 0.0, expected = 0.0, tol = 0.0;
  bool pass = false;
};

class Pipeline {
 public:
  explicit Pipeline(const RunConfig& cfg);
  ~Pipeline();

  const RunConfig& config() const { return cfg_; }
  const EquilibriumProfile& profile() const { return profile_; }
  const VelocityQuadrature& quad() const { return quad_; }
  const EquilibriumState& equilibrium();
  const BlockAssembler& assembler();
  const OperatorBlocks& blocks0();
  const EigenContext& context();
  Eigen::VectorXd lambda_grid();

  // Wall-clock seconds per stage, in insertion order.
  std::vector<std::pair<std::string, double>> timings;

 private:
  RunConfig cfg_;
  EquilibriumProfile profile_;
  VelocityQuadrature quad_;
  std::optional<EquilibriumState> state_;
  std::unique_ptr<BlockAssembler> assembler_;
  std::optional<OperatorBlocks> blocks0_;
  std::optional<EigenContext> ctx_;
};

struct CommandOptions {
  double lambda = 1.0;  // assemble
  bool find_mode = false;
  bool emit_spectra = false;
  bool canonical = false;
  std::string example;  // homogeneous | weakfield
};

struct CommandResult {
  nlohmann::ordered_json report;
  int exit_code = 0;
  std::vector<std::string> files;
};

CommandResult cmd_validate(Pipeline& p, const CommandOptions& opts);
CommandResult cmd_equilibrium(Pipeline& p, const CommandOptions& opts);
CommandResult cmd_assemble(Pipeline& p, const CommandOptions& opts);
CommandResult cmd_sweep(Pipeline& p, const CommandOptions& opts);
CommandResult cmd_analyze(Pipeline& p, const CommandOptions& opts);
CommandResult cmd_mode(Pipeline& p, const CommandOptions& opts);
// Pinned defaults; only output settings are taken from the settings.
CommandResult cmd_example(const Settings& settings, const CommandOptions& opts);

// Resolves the config, runs the subcommand, writes artifacts. Errors become
// error.json plus the mapped exit code.
CommandResult run_command(const std::string& command, const Settings& settings, const CommandOptions& opts,
                          std::ostream& log);

// Verdict re-derived from the counts in an analyze report.
std::string rederive_verdict(const nlohmann::ordered_json& report);

}  // namespace vmspec
