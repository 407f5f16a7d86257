#include "evd/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "evd/errors.hpp"
#include "evd/io.hpp"
#include "evd/oracle.hpp"
#include "evd/scenario.hpp"

namespace evd {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  double tau = 0.0;
};

ScenarioConfig resolve(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  nlohmann::json j = load_config_json(c.config);
  for (const auto& s : c.sets) apply_override(j, s);
  if (c.tau > 0.0) j["tau"] = c.tau;
  return scenario_from_json(j);
}

fs::path output_dir(const Common& c, const ScenarioConfig& cfg, const std::string& suffix = "") {
  if (!c.out.empty()) return c.out;
  const char* env = std::getenv("EVD_OUT_DIR");
  fs::path base = env && *env ? fs::path(env) : fs::path("runs");
  return base / (cfg.name + suffix);
}

void write_config(const fs::path& dir, const ScenarioConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream f(dir / "config.json");
  f << to_json(cfg).dump(2) << "\n";
}

StepReport initial_report(const Problem& pb, const State& s) {
  StepReport r;
  r.monitors = monitors(s, pb.lambda);
  return r;
}

// ---------------------------------------------------------------------------

int run_0d(const ScenarioConfig& cfg, const fs::path& dir, std::ostream& out) {
  write_config(dir, cfg);
  const auto traj = kinematic_drive(make_drive(cfg), cfg.material, cfg.lambda, cfg.solver);
  std::ofstream f(dir / "trajectory.csv");
  f << "t,Fe00,Fe01,Fe02,Fe10,Fe11,Fe12,Fe20,Fe21,Fe22,alpha,det_fe,stored,plastic\n";
  f << std::setprecision(17);
  for (const auto& s : traj) {
    f << s.t;
    for (double x : s.Fe.a) f << "," << x;
    f << "," << s.alpha << "," << det(s.Fe) << "," << s.stored << "," << s.plastic << "\n";
  }
  const auto& last = traj.back();
  out << "0d run '" << cfg.name << "': " << traj.size() - 1 << " steps, t = " << last.t
      << ", stored = " << last.stored << ", det Fe = " << det(last.Fe) << "\n";
  out << "wrote " << (dir / "trajectory.csv").string() << "\n";
  return kExitOk;
}

int cmd_run(const Common& c, std::ostream& out, std::ostream& err) {
  const ScenarioConfig cfg = resolve(c);
  const fs::path dir = output_dir(c, cfg);
  if (cfg.mode == "0d") return run_0d(cfg, dir, out);

  const Problem pb = make_problem(cfg);
  const State init = make_initial_state(cfg, pb.grid);
  Stepper stepper(pb, cfg.solver);
  stepper.check_tau_admissible(init, cfg.tau);
  write_config(dir, cfg);

  RunWriter writer(dir, pb.grid, cfg.output.snapshot_every, cfg.output.binary);
  {
    LedgerRow row;
    row.energy = ledger_at(pb, stepper.ops(), init);
    row.mass = sum(pb.grid, init.rho);
    row.report = initial_report(pb, init);
    writer.ledger(row);
    writer.snapshot(init, 0);
  }
  double max_residual = 0.0;
  const RunResult res = run(stepper, init, cfg.T, [&](const State& s, const StepReport& rep,
                                                      const EnergyLedger& L) {
    LedgerRow row;
    row.step = rep.step;
    row.energy = L;
    row.mass = sum(pb.grid, s.rho);
    row.report = rep;
    max_residual = std::max(max_residual, std::abs(L.residual));
    writer.ledger(row);
    writer.snapshot(s, rep.step);
  });
  writer.finish(res.final, res.steps);

  const Monitors m = monitors(res.final, pb.lambda);
  out << "run '" << cfg.name << "': " << res.steps << " steps, t = " << res.final.t << "\n";
  out << "  energy " << kinetic_energy(pb.grid, res.final) + stored_energy(pb, res.final)
      << ", max |ledger residual| " << max_residual << "\n";
  out << "  min rho " << m.min_rho << ", min det Fe " << m.min_det_fe << ", activation "
      << m.activation << "\n";
  out << "  output in " << dir.string() << "\n";
  if (!res.completed) {
    err << "run aborted at " << res.message << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct Level {
  double tau;
  bool ok;
  std::string message;
  std::vector<std::pair<std::string, std::vector<double>>> fields;
};

Level run_level_0d(const ScenarioConfig& cfg) {
  Level lv{cfg.tau, true, "", {}};
  const auto traj = kinematic_drive(make_drive(cfg), cfg.material, cfg.lambda, cfg.solver);
  const auto& s = traj.back();
  lv.fields.push_back({"Fe", std::vector<double>(s.Fe.a.begin(), s.Fe.a.end())});
  lv.fields.push_back({"alpha", {s.alpha}});
  return lv;
}

Level run_level_field(const ScenarioConfig& cfg) {
  Level lv{cfg.tau, true, "", {}};
  const Problem pb = make_problem(cfg);
  const State init = make_initial_state(cfg, pb.grid);
  Stepper stepper(pb, cfg.solver);
  const RunResult res = run(stepper, init, cfg.T);
  if (!res.completed) {
    lv.ok = false;
    lv.message = res.message;
    return lv;
  }
  // Cell values scaled by sqrt(cell volume), so Euclidean norms are L2 norms.
  const double w = std::sqrt(pb.grid.cell_volume());
  auto pack = [&](std::initializer_list<const Eigen::VectorXd*> comps) {
    std::vector<double> v;
    for (const auto* c : comps)
      for (Eigen::Index k = 0; k < c->size(); ++k) v.push_back(w * (*c)[k]);
    return v;
  };
  const State& f = res.final;
  lv.fields.push_back({"rho", pack({&f.rho})});
  lv.fields.push_back({"v", pack({&f.v[0], &f.v[1], &f.v[2]})});
  std::vector<double> fe;
  for (const auto& c : f.Fe)
    for (Eigen::Index k = 0; k < c.size(); ++k) fe.push_back(w * c[k]);
  lv.fields.push_back({"Fe", fe});
  lv.fields.push_back({"xi", pack({&f.xi[0], &f.xi[1], &f.xi[2]})});
  lv.fields.push_back({"alpha", pack({&f.alpha})});
  return lv;
}

double diff_norm(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

double norm2(const std::vector<double>& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

int cmd_converge(const Common& c, int levels, std::ostream& out, std::ostream& err) {
  if (levels < 3) throw ConfigError("--levels must be at least 3");
  ScenarioConfig cfg = resolve(c);
  const fs::path dir = output_dir(c, cfg, "-converge");
  write_config(dir, cfg);

  std::vector<Level> runs;
  bool failed = false;
  for (int l = 0; l < levels; ++l) {
    ScenarioConfig lc = cfg;
    lc.tau = cfg.tau / std::pow(2.0, l);
    lc.solver.tau = lc.tau;
    Level lv;
    try {
      lv = cfg.mode == "0d" ? run_level_0d(lc) : run_level_field(lc);
    } catch (const Error& e) {
      lv = Level{lc.tau, false, e.what(), {}};
    }
    out << "level " << l << ": tau = " << lc.tau << (lv.ok ? "" : "  FAILED: " + lv.message)
        << "\n";
    runs.push_back(std::move(lv));
    if (!runs.back().ok) {
      failed = true;
      break;
    }
  }

  for (auto& lv : runs) {
    if (!lv.ok) continue;
    std::vector<double> all;
    for (const auto& f : lv.fields) all.insert(all.end(), f.second.begin(), f.second.end());
    lv.fields.push_back({"state", std::move(all)});
  }

  std::ofstream csv(dir / "converge.csv");
  csv << "field,level,tau,difference,order\n";
  csv << std::setprecision(17);
  out << std::left << std::setw(8) << "field" << std::setw(7) << "level" << std::setw(14) << "tau"
      << std::setw(16) << "|u_t - u_t/2|" << "order\n";
  if (runs.size() >= 2) {
    for (std::size_t fi = 0; fi < runs[0].fields.size(); ++fi) {
      const std::string& name = runs[0].fields[fi].first;
      std::vector<double> d;
      for (std::size_t l = 0; l + 1 < runs.size(); ++l)
        d.push_back(diff_norm(runs[l].fields[fi].second, runs[l + 1].fields[fi].second));
      const double scale = 1.0 + norm2(runs.back().fields[fi].second);
      bool exact = true;
      for (double x : d) exact = exact && x <= 1e-12 * scale;
      for (std::size_t l = 0; l < d.size(); ++l) {
        std::string order = "-";
        if (exact) {
          order = "exact";
        } else if (l > 0 && d[l] > 0.0 && d[l - 1] > 0.0) {
          std::ostringstream os;
          os << std::setprecision(4) << std::log2(d[l - 1] / d[l]);
          order = os.str();
        }
        out << std::setw(8) << name << std::setw(7) << l << std::setw(14) << runs[l].tau
            << std::setw(16) << d[l] << order << "\n";
        csv << name << "," << l << "," << runs[l].tau << "," << d[l] << "," << order << "\n";
      }
    }
  }
  if (failed) {
    csv << "FAILED," << runs.size() - 1 << "," << runs.back().tau << ",nan,"
        << "\"" << runs.back().message << "\"\n";
    err << "convergence study incomplete: level " << runs.size() - 1 << " failed\n";
    return kExitFailure;
  }
  out << "wrote " << (dir / "converge.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_oracle0d(const Common& c, std::ostream& out) {
  const ScenarioConfig cfg = resolve(c);
  if (cfg.mode != "0d") throw ConfigError("oracle0d needs a config with mode = 0d");
  const double tau_fine = std::min(1e-4, cfg.tau / 100.0);
  const Oracle0DConfig oc = make_oracle_config(cfg, tau_fine);
  const OracleTrajectory ref = integrate_0d_reference(oc);
  const auto be = integrate_0d_backward_euler(oc, cfg.tau, cfg.solver.coupling);
  const auto st = kinematic_drive(make_drive(cfg), cfg.material, cfg.lambda, cfg.solver);

  bool pass = true;
  auto check = [&](const std::string& what, double value, double tol) {
    const bool ok = value <= tol;
    pass = pass && ok;
    out << std::left << std::setw(48) << what << std::setw(14) << value << (ok ? "ok" : "FAIL")
        << " (tol " << tol << ")\n";
  };
  auto info = [&](const std::string& what, double value) {
    out << std::left << std::setw(48) << what << value << "\n";
  };

  check("reference self-consistency", ref.self_consistency, 1e-10);
  double be_diff = 0.0, ref_err = 0.0;
  for (std::size_t k = 0; k < st.size() && k < be.size(); ++k) {
    be_diff = std::max({be_diff, frob(st[k].Fe - be[k].Fe), std::abs(st[k].alpha - be[k].alpha)});
  }
  const auto& rl = ref.samples.back();
  ref_err = std::max(frob(st.back().Fe - rl.Fe), std::abs(st.back().alpha - rl.alpha));
  check("stepper vs independent backward Euler", be_diff, 1e-8);
  info("stepper vs reference at T", ref_err);

  if (cfg.drive.kind == "rotation") {
    double drift = 0.0;
    for (const auto& s : ref.samples) drift = std::max(drift, std::abs(s.stored - ref.samples[0].stored));
    check("stored-energy drift per unit time (reference)", drift / cfg.T, 1e-10);
    double sd = 0.0;
    for (const auto& s : st) sd = std::max(sd, std::abs(s.stored - st[0].stored));
    info("stored-energy drift per unit time (stepper)", sd / cfg.T);
  }
  if (cfg.drive.kind == "dilation") {
    const double J0 = det(cfg.initial.Fe0);
    double e = 0.0;
    for (const auto& s : ref.samples)
      e = std::max(e, std::abs(s.det_fe - J0 * std::exp(cfg.drive.rate * s.t)) /
                          (J0 * std::exp(cfg.drive.rate * s.t)));
    check("det Fe law (reference, relative)", e, 1e-9);
  }
  if (cfg.material.internal == InternalVariable::Damage &&
      cfg.material.damage.mode == DamageMode::Unidirectional) {
    double rise = 0.0;
    for (std::size_t k = 1; k < st.size(); ++k) rise = std::max(rise, st[k].alpha - st[k - 1].alpha);
    check("alpha increase (unidirectional)", rise, 1e-12);
  }
  out << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kExitOk : kExitFailure;
}

int cmd_check_material(const Common& c, int samples, std::ostream& out) {
  const ScenarioConfig cfg = resolve(c);
  const auto& mat = cfg.material;
  bool pass = true;

  const FdReport fd = fd_stress_check(mat.energy, cfg.lambda, samples);
  const bool fd_ok = fd.max_error <= 1e-6;
  pass = pass && fd_ok;
  out << "derivative check (" << samples << " samples): max rel error " << fd.max_error
      << (fd_ok ? "  ok" : "  FAIL") << "\n";
  for (std::size_t b = 0; b < 5; ++b)
    out << "  " << std::left << std::setw(12) << to_string(static_cast<Branch>(b)) << " n = "
        << std::setw(5) << fd.per_branch[b] << " max rel error " << fd.per_branch_error[b] << "\n";
  if (!fd_ok) {
    out << "  worst branch: " << to_string(fd.worst_branch) << " at F = [";
    for (std::size_t k = 0; k < 9; ++k) out << (k ? " " : "") << fd.worst_F[k];
    out << "]\n";
  }

  const SeamReport seam = seam_continuity(mat.energy, cfg.lambda, std::max(1, samples / 4));
  const bool seam_ok = seam.max_jump <= 1e-6 && seam.max_kink <= 1e-6;
  pass = pass && seam_ok;
  out << "seam continuity: jump " << seam.max_jump << ", derivative jump " << seam.max_kink
      << (seam_ok ? "  ok" : "  FAIL at " + seam.worst_seam) << "\n";

  const double rt = conjugate_roundtrip(mat.viscoplastic, samples);
  const bool rt_ok = rt <= 1e-10;
  pass = pass && rt_ok;
  out << "conjugate round trip (" << to_string(mat.viscoplastic.family) << "): " << rt
      << (rt_ok ? "  ok" : "  FAIL") << "\n";

  const GrowthBounds gb =
      sample_growth_bounds(mat.viscoplastic, Vec3{}, samples, 3, 10.0);
  out << "viscoplastic coercivity " << gb.coercivity << ", growth " << gb.growth << "\n";

  out << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kExitOk : kExitFailure;
}

int cmd_report(const std::string& dir, std::ostream& out) {
  const LedgerTable t = read_ledger(fs::path(dir) / "ledger.csv");
  if (t.rows.empty()) throw Error("ledger in " + dir + " has no rows");
  auto col = [&](const char* n) { return t.column(n); };
  const auto time = col("t"), energy = col("energy"), residual = col("residual"),
             mass = col("mass"), rho = col("min_rho"), detfe = col("min_det_fe"),
             act = col("activation"), diss = col("dissipation"), tau = col("tau");
  double max_res = 0.0, min_rho = rho[0], min_det = detfe[0], max_act = 0.0, dissipated = 0.0;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    max_res = std::max(max_res, std::abs(residual[k]));
    min_rho = std::min(min_rho, rho[k]);
    min_det = std::min(min_det, detfe[k]);
    max_act = std::max(max_act, act[k]);
    if (k > 0) dissipated += tau[k] * diss[k];
  }
  out << "steps            " << t.rows.size() - 1 << "\n";
  out << "final time       " << time.back() << "\n";
  out << "energy           " << energy.front() << " -> " << energy.back() << "\n";
  out << "dissipated       " << dissipated << "\n";
  out << "max |residual|   " << max_res << "\n";
  out << "mass drift       " << std::abs(mass.back() - mass.front()) / std::abs(mass.front()) << "\n";
  out << "min rho          " << min_rho << "\n";
  out << "min det Fe       " << min_det << "\n";
  out << "max activation   " << max_act << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Staggered solver for viscoelastic flows with inelastic distortion"};
  app.require_subcommand(1);
  Common common;
  int levels = 3;
  int samples = 200;
  std::string report_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "config file or preset:<name>")->required();
    sub->add_option("--set", common.sets, "override key.path=value")->take_all();
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--tau", common.tau, "time step override");
  };
  auto* run_cmd = app.add_subcommand("run", "run the time loop");
  add_common(run_cmd);
  auto* conv_cmd = app.add_subcommand("converge", "time-step refinement study");
  add_common(conv_cmd);
  conv_cmd->add_option("--levels", levels, "number of refinement levels (>= 3)");
  auto* oracle_cmd = app.add_subcommand("oracle0d", "compare a 0D drive with the reference");
  add_common(oracle_cmd);
  auto* mat_cmd = app.add_subcommand("check-material", "derivative and seam checks");
  add_common(mat_cmd);
  mat_cmd->add_option("--samples", samples, "random samples");
  auto* report_cmd = app.add_subcommand("report", "summarize a run directory");
  report_cmd->add_option("--out,dir", report_dir, "run directory")->required();
  auto* list_cmd = app.add_subcommand("presets", "list shipped scenarios");
  auto* config_cmd = app.add_subcommand("config", "print the resolved configuration");
  config_cmd->add_option("--config", common.config, "config file or preset:<name>")->required();
  config_cmd->add_option("--set", common.sets, "override key.path=value")->take_all();
  config_cmd->add_option("--tau", common.tau, "time step override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(common, out, err);
    if (*conv_cmd) return cmd_converge(common, levels, out, err);
    if (*oracle_cmd) return cmd_oracle0d(common, out);
    if (*mat_cmd) return cmd_check_material(common, samples, out);
    if (*report_cmd) return cmd_report(report_dir, out);
    if (*config_cmd) {
      out << to_json(resolve(common)).dump(2) << "\n";
      return kExitOk;
    }
    if (*list_cmd) {
      for (const auto& n : preset_names()) out << n << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace evd
