#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "vmspec/cli.hpp"

using namespace vmspec;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("vmspec_test_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Settings small_homogeneous(const std::string& out) {
  return {{"profile.name", "paper_homogeneous"}, {"grid.n_r", "8"},    {"grid.n_theta", "32"},
          {"grid.N_x", "8"},                     {"grid.n", "4"},      {"lambda.count", "12"},
          {"output.dir", out}};
}

}  // namespace

TEST_CASE("settings parser") {
  std::istringstream in("# comment\nprofile.name = zero\n\n  grid.n=4   # trailing\nweight.c = 2e3\n");
  const Settings s = parse_settings(in);
  CHECK(s.at("profile.name") == "zero");
  CHECK(s.at("grid.n") == "4");
  CHECK(s.at("weight.c") == "2e3");
  std::istringstream bad("grid.n 4\n");
  CHECK_THROWS_AS(parse_settings(bad), Error);
  CHECK_THROWS_AS(read_settings_file("/nonexistent/vmspec.cfg"), Error);
}

TEST_CASE("config resolution and validation") {
  const RunConfig d = resolve_config({});
  CHECK(d.profile == "paper_homogeneous");
  CHECK(d.n_theta == 256);
  const RunConfig w = resolve_config({{"profile.name", "weakfield_family"}, {"profile.theta", "0.6"}});
  CHECK_FALSE(w.homogeneous());
  CHECK(w.params.at("theta") == 0.6);
  CHECK(w.tol_sym == 1e-3);

  auto rejects = [](const Settings& s) {
    try {
      resolve_config(s);
    } catch (const Error& e) {
      return e.kind() == ErrorKind::Config;
    }
    return false;
  };
  CHECK(rejects({{"grid.bogus", "1"}}));
  CHECK(rejects({{"profile.name", "nope"}}));
  CHECK(rejects({{"profile.theta", "0.6"}}));  // parameters only for the weak-field family
  CHECK(rejects({{"grid.n_theta", "31"}}));
  CHECK(rejects({{"grid.N_x", "7"}}));
  CHECK(rejects({{"grid.n", "0"}}));
  CHECK(rejects({{"grid.n", "40"}}));
  CHECK(rejects({{"grid.n_r", "abc"}}));
  CHECK(rejects({{"tol.eig", "0"}}));
  CHECK(rejects({{"tol.eig", "1.5"}}));
  CHECK(rejects({{"weight.alpha", "2"}}));
  CHECK(rejects({{"profile.name", "weakfield_family"}, {"domain.period", "3"}}));
  CHECK(rejects({{"domain.epsilon", "0.1"}}));
  CHECK(rejects({{"lambda.min", "2"}, {"lambda.max", "1"}}));
  for (const auto& k : known_keys()) CHECK(k.find('.') != std::string::npos);
}

TEST_CASE("config hash") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  const RunConfig a = resolve_config({});
  const RunConfig b = resolve_config({{"run.jobs", "3"}, {"output.dir", "/tmp/x"}});
  const RunConfig c = resolve_config({{"grid.n", "6"}});
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
  CHECK(canonical_text(a).find("grid.n=8") != std::string::npos);
}

TEST_CASE("golden integrals of the homogeneous profile") {
  const RunConfig cfg = resolve_config({});
  Pipeline p(cfg);
  const GoldenIntegrals g = homogeneous_golden(p.profile(), p.quad());
  // Dense Simpson oracle of the second integral in the energy variable:
  // int_2^inf eta'(e) (e^2 - 1) / e de.
  const int n = 200000;
  const double a = 2.0, b = 14.0, h = (b - a) / n;
  auto f = [](double e) { return -2 * (e - 2) * std::exp(-(e - 2) * (e - 2)) * (e * e - 1) / e; };
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(a + i * h);
  const double II = s * h / 3;
  CHECK(g.II == doctest::Approx(II).epsilon(1e-10));
  CHECK(g.II == doctest::Approx(-2.531116789945364).epsilon(1e-10));
  CHECK(g.I == doctest::Approx(1.5 - std::log(2.0)).epsilon(1e-12));
  CHECK(g.tail == doctest::Approx(std::sqrt(3.14159265358979323846) / 2 + 2).epsilon(1e-10));
  CHECK(g.l0 == doctest::Approx(2 * 3.14159265358979323846 * (g.I + g.II)));
}

TEST_CASE("analyze on the zero profile") {
  TempDir t;
  std::ostringstream log;
  CommandOptions o;
  o.canonical = true;
  o.emit_spectra = true;
  const Settings s{{"profile.name", "zero"}, {"output.dir", t.str()}};
  const CommandResult r = run_command("analyze", s, o, log);
  CHECK(r.exit_code == 0);
  CHECK(r.report["verdict"] == "INCONCLUSIVE");
  CHECK(r.report["note"] == "hypothesis failure: l0 ~ 0");
  CHECK(r.report["counts"]["neg_A1"] == 0);
  CHECK(r.report["counts"]["neg_A2"] == 0);
  CHECK(rederive_verdict(r.report) == "INCONCLUSIVE");
  CHECK(fs::exists(t.path / "report.json"));
  const std::string csv = slurp(t.path / "spectra.csv");
  CHECK(csv.rfind("# config_hash=" + r.report["config_hash"].get<std::string>(), 0) == 0);
  for (const auto& kn : r.report["counts"]["K_n"]) CHECK(kn["neg_M_lambda_max"] == kn["n"].get<int>() + 1);
}

TEST_CASE("canonical reports are byte-identical") {
  TempDir t;
  CommandOptions o;
  o.canonical = true;
  std::ostringstream log;
  REQUIRE(run_command("analyze", small_homogeneous(t.str("a")), o, log).exit_code == 0);
  REQUIRE(run_command("analyze", small_homogeneous(t.str("b")), o, log).exit_code == 0);
  const std::string a = slurp(t.path / "a" / "report.json");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp(t.path / "b" / "report.json"));
  CHECK(a.find("timings") == std::string::npos);
}

TEST_CASE("every subcommand writes its artifact") {
  TempDir t;
  CommandOptions o;
  o.canonical = true;
  std::ostringstream log;
  for (const std::string cmd : {"validate", "equilibrium", "assemble", "sweep"}) {
    const CommandResult r = run_command(cmd, small_homogeneous(t.str(cmd)), o, log);
    CHECK(r.exit_code == 0);
    CHECK_FALSE(r.files.empty());
    for (const auto& f : r.files) CHECK(fs::exists(f));
  }
  CHECK(fs::exists(t.path / "assemble" / "blocks.csv"));
  CHECK(fs::exists(t.path / "sweep" / "spectra.csv"));
}

TEST_CASE("the verdict is re-derivable from the report") {
  nlohmann::ordered_json rep;
  rep["counts"] = {{"neg_A1", 0}, {"neg_A2", 2}, {"l0", -1.0}, {"tol_l0", 1e-8}, {"ker_A2_trivial", true}};
  CHECK(rederive_verdict(rep) == "UNSTABLE_T1");
  rep["counts"]["neg_A2"] = 0;
  rep["counts"]["neg_A1"] = 1;
  CHECK(rederive_verdict(rep) == "UNSTABLE_T2");
  rep["counts"]["l0"] = 0.0;
  CHECK(rederive_verdict(rep) == "INCONCLUSIVE");
}

TEST_CASE("exit codes and error reports") {
  TempDir t;
  CommandOptions o;
  std::ostringstream log;
  const CommandResult bad = run_command("analyze", {{"grid.nope", "1"}, {"output.dir", t.str()}}, o, log);
  CHECK(bad.exit_code == 2);
  CHECK(bad.report["error"] == "config error");
  CHECK(fs::exists(t.path / "error.json"));

  // The homogeneous profile has no crossing on its grid, so mode reconstruction fails numerically.
  const CommandResult none = run_command("mode", small_homogeneous(t.str("mode")), o, log);
  CHECK(none.exit_code == 3);
  CHECK(none.report.contains("config_hash"));

  const CommandResult unknown = run_command("frobnicate", small_homogeneous(t.str("x")), o, log);
  CHECK(unknown.exit_code == 2);
}

TEST_CASE("homogeneous example matches its golden table") {
  TempDir t;
  CommandOptions o;
  o.example = "homogeneous";
  o.canonical = true;
  std::ostringstream log;
  const CommandResult r = run_command("example", {{"output.dir", t.str()}}, o, log);
  CHECK(r.exit_code == 0);
  for (const auto& g : r.report["golden"]) CHECK_MESSAGE(g["pass"].get<bool>(), g["name"].get<std::string>());
  CHECK(log.str().find("MISMATCH") == std::string::npos);
  CHECK(fs::exists(t.path / "example_homogeneous.json"));
}
