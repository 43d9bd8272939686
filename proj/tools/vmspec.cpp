#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vmspec/cli.hpp"
#include "vmspec/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Linear stability of purely magnetic 1.5d relativistic Vlasov-Maxwell equilibria"};
  app.require_subcommand(1);
  app.fallthrough();

  // Numeric flags are kept as text and validated with the config file.
  std::string config_path, profile, out, epsilon, lambda_min, lambda_max, n, jobs;
  vmspec::CommandOptions opts;

  app.add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--profile", profile, "paper_homogeneous | weakfield_family | zero");
  app.add_option("--epsilon", epsilon, "weak-field amplitude");
  app.add_option("--n", n, "truncation n");
  app.add_option("--lambda-min", lambda_min);
  app.add_option("--lambda-max", lambda_max);
  app.add_option("--jobs", jobs, "worker threads");
  app.add_option("--out", out, "output directory (VMSPEC_OUT overrides)");
  app.add_flag("--find-mode", opts.find_mode, "locate the kernel crossing and reconstruct the mode");
  app.add_flag("--emit-spectra", opts.emit_spectra, "write M_n eigenvalues over the lambda grid");
  app.add_flag("--canonical", opts.canonical, "omit timings so reports are byte-reproducible");

  app.add_subcommand("validate", "check the profile against the weight and symmetry rules");
  app.add_subcommand("equilibrium", "build the equilibrium (weak-field potential if applicable)");
  auto* assemble = app.add_subcommand("assemble", "assemble operator blocks at one lambda");
  assemble->add_option("--lambda", opts.lambda, "growth rate")->check(CLI::NonNegativeNumber);
  app.add_subcommand("sweep", "negative-eigenvalue counts of M_n over the lambda grid");
  app.add_subcommand("analyze", "counts, verdict and sweep");
  app.add_subcommand("mode", "analyze and reconstruct the growing mode");
  auto* example = app.add_subcommand("example", "reproduce the worked examples against stored values");
  example->add_option("which", opts.example, "homogeneous | weakfield")
      ->required()
      ->check(CLI::IsMember({"homogeneous", "weakfield"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : vmspec::exit_code(vmspec::ErrorKind::Config);
  }

  vmspec::Settings settings;
  try {
    if (!config_path.empty()) settings = vmspec::read_settings_file(config_path);
  } catch (const vmspec::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return vmspec::exit_code(err.kind());
  }
  if (!profile.empty()) settings["profile.name"] = profile;
  if (app.count("--epsilon")) settings["domain.epsilon"] = epsilon;
  if (app.count("--n")) settings["grid.n"] = n;
  if (app.count("--lambda-min")) settings["lambda.min"] = lambda_min;
  if (app.count("--lambda-max")) settings["lambda.max"] = lambda_max;
  if (app.count("--jobs")) settings["run.jobs"] = jobs;
  if (!out.empty()) settings["output.dir"] = out;
  if (const char* env = std::getenv("VMSPEC_OUT"); env && *env) settings["output.dir"] = env;

  const std::string command = app.get_subcommands().front()->get_name();
  const vmspec::CommandResult res = vmspec::run_command(command, settings, opts, std::cout);
  return res.exit_code;
}
