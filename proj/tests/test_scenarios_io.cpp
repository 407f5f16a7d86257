#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "evd/cli.hpp"
#include "evd/errors.hpp"
#include "evd/io.hpp"
#include "evd/scenario.hpp"

using namespace evd;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "evd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_root() {
  return fs::temp_directory_path() / ("evd-test-" + std::to_string(::getpid()));
}

struct ScratchCleanup {
  ~ScratchCleanup() {
    std::error_code ec;
    fs::remove_all(scratch_root(), ec);
  }
} cleanup;

fs::path scratch(const std::string& name) {
  const fs::path p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Orders reported for one field in converge.csv.
std::vector<std::string> orders(const fs::path& csv, const std::string& field) {
  std::ifstream f(csv);
  std::string line;
  std::getline(f, line);
  std::vector<std::string> out;
  while (std::getline(f, line)) {
    std::stringstream ls(line);
    std::vector<std::string> parts;
    std::string p;
    while (std::getline(ls, p, ',')) parts.push_back(p);
    if (parts.size() == 5 && parts[0] == field && parts[4] != "-") out.push_back(parts[4]);
  }
  return out;
}

bool same_bits(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("shipped scenario library") {
  const auto names = preset_names();
  for (const char* n : {"rest-state", "gravity-settling", "shear-creep", "rigid-rotation-0d",
                        "two-phase-inclusion", "damage-bar-stretch", "diffusion-swelling",
                        "maxwell-0d", "dilation-0d", "damage-0d", "translation"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  CHECK_THROWS_AS(preset("no-such-scenario"), ConfigError);
}

TEST_CASE("config round trip is the identity for every preset") {
  for (const auto& n : preset_names()) {
    const nlohmann::json j1 = to_json(preset(n));
    const nlohmann::json j2 = to_json(scenario_from_json(j1));
    CHECK_MESSAGE(j1 == j2, n);
    const nlohmann::json j3 = to_json(scenario_from_json(nlohmann::json::parse(j1.dump())));
    CHECK(j1 == j3);
  }
}

TEST_CASE("dotted overrides edit the key tree") {
  nlohmann::json j = load_config_json("preset:rest-state");
  apply_override(j, "lambda=12.5");
  apply_override(j, "grid.cells.0=10");
  apply_override(j, "material.energy.mu=2");
  apply_override(j, "solver.scheme=central");
  apply_override(j, "gravity=[0,-1,0]");
  const ScenarioConfig c = scenario_from_json(j);
  CHECK(c.lambda == 12.5);
  CHECK(c.grid.cells[0] == 10);
  CHECK(c.material.energy.mu == 2.0);
  CHECK(c.solver.scheme == AdvectionScheme::Central);
  CHECK(c.gravity[1] == -1.0);
  CHECK_THROWS_AS(apply_override(j, "lambda"), ConfigError);
  nlohmann::json bad = j;
  apply_override(bad, "material.energy.nonsense=1");
  CHECK_THROWS_AS(scenario_from_json(bad), ConfigError);
}

TEST_CASE("config file loading") {
  const fs::path p = scratch("cfg") / "c.json";
  fs::create_directories(p.parent_path());
  {
    nlohmann::json j = to_json(preset("translation"));
    j["name"] = "from-file";
    std::ofstream(p) << j.dump(2);
  }
  CHECK(scenario_from_json(load_config_json(p.string())).name == "from-file");
  CHECK_THROWS_AS(load_config_json((p.parent_path() / "missing.json").string()), ConfigError);
  const fs::path broken = p.parent_path() / "broken.json";
  std::ofstream(broken) << "{ not json";
  CHECK_THROWS_AS(load_config_json(broken.string()), ConfigError);
}

TEST_CASE("initial data preconditions are rejected") {
  ScenarioConfig c = preset("rest-state");
  c.initial.rho0 = 0.0;
  CHECK_THROWS_AS(make_initial_state(c, make_grid(c.grid)), ConfigError);
  c = preset("rest-state");
  c.initial.Fe0 = Mat3::diag(1.0, 1.0, -1.0);
  CHECK_THROWS_AS(make_initial_state(c, make_grid(c.grid)), ConfigError);
  c = preset("rest-state");
  c.initial.alpha0 = 1.5;
  CHECK_THROWS_AS(make_initial_state(c, make_grid(c.grid)), ConfigError);
  c = preset("rest-state");
  c.grid.cells = {3, 16, 1};
  CHECK_THROWS_AS(make_grid(c.grid), ConfigError);
}

TEST_CASE("golden ledger header") {
  CHECK(ledger_header() ==
        "step,t,tau,kinetic,stored,energy,stokes,hyper,plastic,damage,diffusion,dissipation,power,"
        "residual_step,residual,mass,min_rho,max_inv_rho,min_det_fe,max_norm_fe,max_inv_det_fe,"
        "activation,newton_iterations,continuation,fe_iterations,alpha_iterations,alpha_residual,"
        "complementarity,bound_violation,retries,cfl");
}

TEST_CASE("ledger rows round trip through the CSV reader") {
  const fs::path dir = scratch("ledger");
  fs::create_directories(dir);
  LedgerRow row;
  row.step = 7;
  row.energy.t = 0.1 + 0.2;
  row.energy.kinetic = 1.0 / 3.0;
  row.energy.stored = 2.5e-17;
  row.energy.residual = -4.25e-9;
  row.mass = 0.7;
  row.report.tau = 0.01;
  row.report.retries = 2;
  {
    std::ofstream f(dir / "ledger.csv");
    f << ledger_header() << "\n" << format_ledger_row(row) << "\n";
  }
  const LedgerTable t = read_ledger(dir / "ledger.csv");
  REQUIRE(t.rows.size() == 1);
  CHECK(t.column("step")[0] == 7.0);
  CHECK(t.column("t")[0] == 0.1 + 0.2);
  CHECK(t.column("kinetic")[0] == 1.0 / 3.0);
  CHECK(t.column("energy")[0] == 1.0 / 3.0 + 2.5e-17);
  CHECK(t.column("residual")[0] == -4.25e-9);
  CHECK(t.column("retries")[0] == 2.0);
  CHECK_THROWS_AS(t.column("bogus"), Error);
  std::ofstream(dir / "bad.csv") << "step,t\n1,2\n";
  CHECK_THROWS_AS(read_ledger(dir / "bad.csv"), Error);
}

TEST_CASE("snapshots round trip bit-exactly in both encodings") {
  const fs::path dir = scratch("snap");
  fs::create_directories(dir);
  const ScenarioConfig c = preset("diffusion-swelling");
  const Grid g = Grid::make(2, {6, 5, 1}, {1.2, 1.0, 1.0}, Boundary::SlipBox);
  State s = make_initial_state(c, g);
  s.t = 0.1 + 0.2;
  s.rho[3] = 1.0 / 3.0;
  s.v[0][4] = -0.0;
  s.v[1][2] = std::numeric_limits<double>::denorm_min();
  s.Fe[1][0] = 1e300;
  s.mu = ScalarField::LinSpaced(g.cells(), -1.0, 1.0 / 7.0);
  s.dual = ScalarField::Zero(g.cells());
  const Snapshot snap = make_snapshot(g, s, 42);
  for (bool binary : {true, false}) {
    const fs::path p = dir / (binary ? "b.evd" : "a.evd");
    write_snapshot(p, snap, binary);
    const Snapshot back = read_snapshot(p);
    CHECK(back.dim == 2);
    CHECK(back.cells == snap.cells);
    CHECK(back.spacing == snap.spacing);
    CHECK(back.boundary == "slip-box");
    CHECK(back.time == s.t);
    CHECK(back.step == 42);
    REQUIRE(back.fields.size() == snap.fields.size());
    for (std::size_t f = 0; f < snap.fields.size(); ++f) {
      CHECK(back.fields[f].first == snap.fields[f].first);
      REQUIRE(back.fields[f].second.size() == snap.fields[f].second.size());
      for (std::size_t k = 0; k < snap.fields[f].second.size(); ++k)
        CHECK(same_bits(back.fields[f].second[k], snap.fields[f].second[k]));
    }
  }
  const std::string header = read_file(dir / "a.evd").substr(0, 300);
  CHECK(header.find("order row-major index=(i*ny+j)*nz+k") != std::string::npos);
  CHECK(header.find("fields rho:1 v:3 Fe:9 xi:3 alpha:1 mu:1 dual:1") != std::string::npos);
}

TEST_CASE("cli run of the rest state writes a flat ledger") {
  const fs::path dir = scratch("rest");
  const auto r = cli({"run", "--config", "preset:rest-state", "--set", "T=0.1", "--set",
                      "output.snapshot_every=5", "--out", dir.string()});
  REQUIRE(r.code == kExitOk);
  const LedgerTable t = read_ledger(dir / "ledger.csv");
  REQUIRE(t.rows.size() == 11);
  for (double x : t.column("residual")) CHECK(std::abs(x) <= 1e-12);
  for (double x : t.column("kinetic")) CHECK(x == 0.0);
  const auto mass = t.column("mass");
  for (double m : mass) CHECK(m == mass.front());
  CHECK(fs::exists(dir / "config.json"));
  CHECK(fs::exists(dir / "snapshot_000000.evd"));
  CHECK(fs::exists(dir / "snapshot_000010.evd"));
  CHECK(fs::exists(dir / "final.evd"));
  const Snapshot fin = read_snapshot(dir / "final.evd");
  CHECK(fin.step == 10);

  const auto rep = cli({"report", "--out", dir.string()});
  CHECK(rep.code == kExitOk);
  CHECK(rep.out.find("steps") != std::string::npos);
}

TEST_CASE("cli output directory falls back to the environment") {
  const fs::path base = scratch("env");
  ::setenv("EVD_OUT_DIR", base.string().c_str(), 1);
  const auto r = cli({"run", "--config", "preset:rigid-rotation-0d", "--set", "T=0.01"});
  ::unsetenv("EVD_OUT_DIR");
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(base / "rigid-rotation-0d" / "trajectory.csv"));
}

TEST_CASE("cli rejects invalid initial data with exit code 1") {
  const auto r = cli({"run", "--config", "preset:rest-state", "--set", "initial.rho0=0", "--out",
                      scratch("bad").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("precondition") != std::string::npos);
  CHECK(cli({"run", "--config", "preset:nope"}).code == kExitConfig);
  CHECK(cli({"run"}).code == kExitConfig);
  CHECK(cli({"converge", "--config", "preset:maxwell-0d", "--levels", "2", "--out",
             scratch("lv").string()})
            .code == kExitConfig);
  CHECK(cli({"oracle0d", "--config", "preset:rest-state"}).code == kExitConfig);
}

TEST_CASE("cli reports a step-failure abort with exit code 2 and the step index") {
  const auto r = cli({"run", "--config", "preset:shear-creep", "--set", "grid.cells=[8,8,1]",
                      "--set", "solver.max_newton=1", "--set", "solver.continuation_stages=1",
                      "--set", "solver.max_retries=1", "--set", "T=0.05", "--out",
                      scratch("fail").string()});
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("aborted at step 2:") != std::string::npos);
}

TEST_CASE("shear creep dissipates plastically after onset") {
  const fs::path dir = scratch("creep");
  const auto r = cli({"run", "--config", "preset:shear-creep", "--set", "T=0.1", "--out",
                      dir.string()});
  REQUIRE(r.code == kExitOk);
  const LedgerTable t = read_ledger(dir / "ledger.csv");
  const auto plastic = t.column("plastic");
  REQUIRE(plastic.size() > 2);
  for (std::size_t k = 1; k < plastic.size(); ++k) CHECK(plastic[k] > 0.0);
  for (double x : t.column("min_rho")) CHECK(x > 0.0);
  for (double x : t.column("min_det_fe")) CHECK(x > 0.0);
}

TEST_CASE("cli converge: translation is exact, Maxwell is first order") {
  const fs::path tr = scratch("conv-tr");
  auto r = cli({"converge", "--config", "preset:translation", "--set", "T=0.1", "--out", tr.string()});
  REQUIRE(r.code == kExitOk);
  for (const char* f : {"rho", "v", "Fe", "xi", "alpha", "state"})
    for (const auto& o : orders(tr / "converge.csv", f)) CHECK(o == "exact");

  const fs::path mx = scratch("conv-mx");
  r = cli({"converge", "--config", "preset:maxwell-0d", "--levels", "4", "--out", mx.string()});
  REQUIRE(r.code == kExitOk);
  const auto o = orders(mx / "converge.csv", "Fe");
  REQUIRE(o.size() == 2);
  for (const auto& s : o) {
    CHECK(std::stod(s) >= 0.8);
    CHECK(std::stod(s) <= 1.2);
  }
}

TEST_CASE("cli converge: smooth shear layer is first order in the state norm") {
  const fs::path dir = scratch("conv-shear");
  const auto r = cli({"converge", "--config", "preset:shear-creep", "--set", "T=0.2", "--set",
                      "grid.cells=[4,16,1]", "--out", dir.string()});
  REQUIRE(r.code == kExitOk);
  const auto o = orders(dir / "converge.csv", "state");
  REQUIRE(o.size() == 1);
  CHECK(std::stod(o[0]) >= 0.9);
}

TEST_CASE("cli check-material passes on defaults and locates a broken derivative") {
  auto r = cli({"check-material", "--config", "preset:rest-state", "--samples", "100"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("PASS") != std::string::npos);
  r = cli({"check-material", "--config", "preset:rest-state", "--samples", "100", "--set",
           "material.energy.family=broken-fixture"});
  CHECK(r.code == kExitFailure);
  CHECK(r.out.find("worst branch") != std::string::npos);
}

TEST_CASE("cli oracle0d passes for rigid rotation") {
  const auto r = cli({"oracle0d", "--config", "preset:rigid-rotation-0d"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("stored-energy drift per unit time (reference)") != std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("cli lists presets") {
  const auto r = cli({"presets"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("diffusion-swelling") != std::string::npos);
}

TEST_CASE("scenario files in the repository match the presets") {
  int found = 0;
  for (const auto& name : preset_names()) {
    const fs::path p = fs::path(EVD_SOURCE_DIR) / "scenarios" / (name + ".json");
    REQUIRE_MESSAGE(fs::exists(p), p.string());
    CHECK(to_json(scenario_from_json(load_config_json(p.string()))) == to_json(preset(name)));
    ++found;
  }
  CHECK(found == static_cast<int>(preset_names().size()));
  const auto r = cli({"config", "--config", "preset:maxwell-0d", "--set", "lambda=7"});
  CHECK(r.code == kExitOk);
  CHECK(scenario_from_json(nlohmann::json::parse(r.out)).lambda == 7.0);
}
