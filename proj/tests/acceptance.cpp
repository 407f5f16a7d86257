// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "evd/diagnostics.hpp"
#include "evd/errors.hpp"
#include "evd/oracle.hpp"
#include "evd/scenario.hpp"
#include "evd/stepper.hpp"

using namespace evd;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void need(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[fail: " << what << "] ";
    }
  }
};

using Check = std::function<void(Outcome&)>;

double max_diff(const Mat3& a, const Mat3& b) {
  double r = 0.0;
  for (std::size_t k = 0; k < 9; ++k) r = std::max(r, std::abs(a[k] - b[k]));
  return r;
}

double state_diff(const State& a, const State& b) {
  auto d = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return (x - y).cwiseAbs().maxCoeff(); };
  double r = d(a.rho, b.rho);
  for (std::size_t i = 0; i < 3; ++i) r = std::max({r, d(a.v[i], b.v[i]), d(a.xi[i], b.xi[i])});
  for (std::size_t i = 0; i < 9; ++i) r = std::max(r, d(a.Fe[i], b.Fe[i]));
  return std::max(r, d(a.alpha, b.alpha));
}

struct FieldRun {
  Problem pb;
  State s0;
  RunResult result;
};

FieldRun run_field(const ScenarioConfig& c, const StepSink& sink = {}) {
  FieldRun r{make_problem(c), {}, {}};
  r.s0 = make_initial_state(c, r.pb.grid);
  const Stepper st(r.pb, c.solver);
  r.result = run(st, r.s0, c.T, sink);
  return r;
}

ScenarioConfig with_tau(ScenarioConfig c, double tau) {
  c.tau = tau;
  c.solver.tau = tau;
  return c;
}

Oracle0DConfig oracle_of(const Drive0D& d, const MaterialModel& m, double lambda) {
  Oracle0DConfig o;
  o.grad_v = d.grad_v;
  o.Fe0 = d.Fe0;
  o.alpha0 = d.alpha0;
  o.X = d.X;
  o.material = m;
  o.lambda = lambda;
  o.T = d.T;
  return o;
}

void derivative_check(Outcome& o) {
  for (const char* name : {"rest-state", "damage-bar-stretch", "diffusion-swelling"}) {
    const ScenarioConfig c = preset(name);
    const FdReport r = fd_stress_check(c.material.energy, c.lambda, 200);
    for (std::size_t b = 0; b < 5; ++b) o.need(r.per_branch[b] > 0, std::string(name) + " branch uncovered");
    o.need(r.max_error <= 1e-6, name);
    o.detail << name << " max rel " << r.max_error << " (worst " << to_string(r.worst_branch) << "); ";
  }
}

void seam_check(Outcome& o) {
  for (const char* name : {"rest-state", "damage-bar-stretch", "diffusion-swelling"}) {
    const ScenarioConfig c = preset(name);
    const SeamReport s = seam_continuity(c.material.energy, c.lambda, 100);
    o.need(s.max_jump <= 1e-6 && s.max_kink <= 1e-6, name);
    o.detail << name << " jump " << s.max_jump << " kink " << s.max_kink << "; ";
  }
}

void conjugate_check(Outcome& o) {
  const std::pair<const char*, ViscoplasticFamily> families[] = {
      {"quadratic", ViscoplasticFamily::Quadratic},
      {"quartic", ViscoplasticFamily::Quartic},
      {"huber", ViscoplasticFamily::Huber}};
  for (const auto& [name, fam] : families) {
    ViscoplasticPotential z;
    z.family = fam;
    z.theta = 0.7;
    z.beta = fam == ViscoplasticFamily::Quadratic ? 0.0 : 0.5;
    const double r = conjugate_roundtrip(z, 500);
    o.need(r <= 1e-10, name);
    o.detail << name << " " << r << "; ";
  }
}

void mass_check(Outcome& o) {
  for (const char* name : {"shear-creep", "gravity-settling"}) {
    ScenarioConfig c = with_tau(preset(name), 5e-3);
    c.grid.cells = {8, 8, 1};
    c.grid.length = {1.0, 1.0, 1.0};
    c.initial.rho_amplitude = 0.2;
    c.T = 200 * c.tau;
    const double m0 = make_initial_state(c, make_grid(c.grid)).rho.sum();
    double drift = 0.0;
    long steps = 0;
    const FieldRun r = run_field(c, [&](const State& s, const StepReport& rep, const EnergyLedger&) {
      drift = std::max(drift, std::abs(s.rho.sum() - m0) / m0);
      steps = rep.step;
    });
    o.need(r.result.completed && steps == 200, std::string(name) + " did not complete 200 steps");
    o.need(drift <= 1e-12, name);
    o.detail << name << " (" << to_string(c.grid.boundary) << ") drift " << drift << " over " << steps
             << " steps; ";
  }
}

void positivity_check(Outcome& o) {
  for (const auto& name : preset_names()) {
    const ScenarioConfig c = preset(name);
    if (c.mode == "0d") {
      double jmin = std::numeric_limits<double>::infinity();
      for (const auto& s : kinematic_drive(make_drive(c), c.material, c.lambda, c.solver))
        jmin = std::min(jmin, det(s.Fe));
      o.need(jmin > 0.0, name);
      continue;
    }
    double rmin = std::numeric_limits<double>::infinity(), jmin = rmin;
    const FieldRun r = run_field(c, [&](const State&, const StepReport& rep, const EnergyLedger&) {
      rmin = std::min(rmin, rep.monitors.min_rho);
      jmin = std::min(jmin, rep.monitors.min_det_fe);
    });
    o.need(r.result.completed, name + " aborted: " + r.result.message);
    o.need(rmin > 0.0 && jmin > 0.0, name);
    o.detail << name << " " << r.result.steps << " steps min rho " << rmin << " min det Fe " << jmin
             << "; ";
  }
}

void oracle_agreement(Outcome& o) {
  const ScenarioConfig c = preset("maxwell-0d");
  const auto ref = integrate_0d_reference(make_oracle_config(c, c.tau / 100.0));
  o.need(ref.self_consistency <= 1e-10, "reference self-consistency");
  std::vector<double> err;
  for (int l = 0; l < 3; ++l) {
    Drive0D d = make_drive(c);
    d.tau = c.tau / std::pow(2.0, l);
    const auto t = kinematic_drive(d, c.material, c.lambda, c.solver);
    err.push_back(max_diff(t.back().Fe, ref.samples.back().Fe));
  }
  o.detail << "errors";
  for (double e : err) o.detail << " " << e;
  for (std::size_t k = 1; k < err.size(); ++k) {
    const double order = std::log2(err[k - 1] / err[k]);
    o.need(order >= 0.8 && order <= 1.2, "order");
    o.detail << " order " << order;
  }
}

void rotation_check(Outcome& o) {
  const ScenarioConfig c = preset("rigid-rotation-0d");
  const double tau = 1e-3;
  const Oracle0DConfig oc = make_oracle_config(c, tau);
  const auto rk = integrate_rk4(oc);
  double drift = 0.0;
  for (const auto& s : rk) drift = std::max(drift, std::abs(s.stored - rk.front().stored));
  const double per_time = drift / c.T;
  o.need(per_time <= 1e-10, "RK4 path drift");

  // Exact rotations of Fe0 sampled at the same step.
  const double w = c.drive.rate;
  const double e0 = truncate_energy(c.material.energy, c.lambda, c.drive.X, c.initial.Fe0, c.initial.alpha0);
  double frame = 0.0;
  for (long k = 0; k <= std::lround(c.T / tau); ++k) {
    const double a = w * tau * static_cast<double>(k);
    const Mat3 R = Mat3::rows({std::cos(a), std::sin(a), 0, -std::sin(a), std::cos(a), 0, 0, 0, 1});
    frame = std::max(frame, std::abs(truncate_energy(c.material.energy, c.lambda, c.drive.X, R * c.initial.Fe0,
                                                     c.initial.alpha0) - e0));
  }
  o.need(frame / c.T <= 1e-10, "exact rotation drift");

  Drive0D d = make_drive(c);
  d.tau = tau;
  const auto st = kinematic_drive(d, c.material, c.lambda, c.solver);
  d.tau = tau / 2;
  const auto st2 = kinematic_drive(d, c.material, c.lambda, c.solver);
  const double sd = std::abs(st.back().stored - st.front().stored) / c.T;
  const double sd2 = std::abs(st2.back().stored - st2.front().stored) / c.T;
  o.detail << "RK4 path at tau = 1e-3: " << per_time << " per unit time; exact rotations: " << frame / c.T
           << "; backward-Euler stepper (not orthogonal): " << sd << " at tau, " << sd2
           << " at tau/2 (order " << std::log2(sd / sd2) << ")";
}

void det_law_check(Outcome& o) {
  const ScenarioConfig c = preset("dilation-0d");
  const double tau_fine = c.tau / 100.0;
  const auto rk = integrate_rk4(make_oracle_config(c, tau_fine));
  const double J0 = det(c.initial.Fe0);
  double err = 0.0;
  for (const auto& s : rk) {
    const double exact = J0 * std::exp(c.drive.rate * s.t);
    err = std::max(err, std::abs(s.det_fe - exact) / exact);
  }
  o.need(err <= 1e-9, "relative error");
  o.detail << "max relative error " << err << " at tau_fine = " << tau_fine << " over " << rk.size() - 1
           << " steps";
}

double final_residual(const ScenarioConfig& c) {
  const FieldRun r = run_field(c);
  if (!r.result.completed) throw Error("run aborted: " + r.result.message);
  return std::abs(r.result.ledger.back().residual);
}

void energy_residual_check(Outcome& o) {
  ScenarioConfig c = preset("shear-creep");
  c.T = 0.2;
  c.grid.cells = {4, 32, 1};
  std::vector<double> R;
  for (double tau : {0.01, 0.005, 0.0025}) R.push_back(final_residual(with_tau(c, tau)));
  o.detail << "p = 2 |R|";
  for (double r : R) o.detail << " " << r;
  for (std::size_t k = 1; k < R.size(); ++k) {
    const double order = std::log2(R[k - 1] / R[k]);
    o.need(order >= 0.9, "p = 2 order");
    o.detail << " order " << order;
  }
  c.grid.cells = {16, 16, 1};
  c.material.viscosity.exponent = 4.0;
  std::vector<double> Q;
  for (double tau : {0.02, 0.01, 0.005}) Q.push_back(final_residual(with_tau(c, tau)));
  o.detail << "; p = 4 at 16x16 |R|";
  for (double r : Q) o.detail << " " << r;
  for (std::size_t k = 1; k < Q.size(); ++k) {
    const double order = std::log2(Q[k - 1] / Q[k]);
    o.need(order >= 0.9, "p = 4 order");
    o.detail << " order " << order;
  }
}

void truncation_elimination(Outcome& o) {
  ScenarioConfig c = preset("two-phase-inclusion");
  double act = 0.0, norm = 0.0, inv_det = 0.0;
  const FieldRun a = run_field(c, [&](const State&, const StepReport& rep, const EnergyLedger&) {
    act = std::max(act, rep.monitors.activation);
    norm = std::max(norm, rep.monitors.max_norm_fe);
    inv_det = std::max(inv_det, rep.monitors.max_inv_det_fe);
  });
  ScenarioConfig c2 = c;
  c2.lambda = 2.0 * c.lambda;
  const FieldRun b = run_field(c2);
  o.need(a.result.completed && b.result.completed, "run aborted");
  o.need(act == 0.0, "activation");
  const double diff = state_diff(a.result.final, b.result.final);
  const double tol = 10.0 * std::max(c.solver.momentum_rtol, c.solver.local_tol);
  o.need(diff <= tol, "lambda vs 2 lambda");
  o.detail << "lambda " << c.lambda << ": max activation " << act << ", max |Fe| " << norm
           << ", max 1/det Fe " << inv_det << "; |u(lambda) - u(2 lambda)| = " << diff << " (tol " << tol
           << ")";
}

void gronwall_check_all(Outcome& o) {
  const GronwallCertificate ex = gronwall_bound(1.0, 0.1, std::vector<double>(10, 1.0), std::vector<double>(10, 0.0));
  o.need(std::abs(ex.bound - 3.375) <= 1e-3, "worked example");
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto k = static_cast<std::size_t>(1 + u(rng) * 80);
    const double tau = 0.01 + 0.1 * u(rng);
    std::vector<double> a(k), b(k), y;
    for (std::size_t l = 0; l < k; ++l) {
      a[l] = 0.9 / tau * u(rng);
      b[l] = u(rng);
    }
    const double C = 2.0 * u(rng);
    double acc = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      const double cap = (C + tau * (acc + b[l])) / (1.0 - tau * a[l]);
      y.push_back(cap * (l % 2 ? u(rng) : 1.0));
      acc += a[l] * y.back() + b[l];
    }
    if (gronwall_check(C, tau, a, b, y) != -1) ++violations;
  }
  o.need(violations == 0, "random sequences");
  o.detail << "worked example bound " << ex.bound << "; violations in 1000 sequences: " << violations;
}

void damage_check(Outcome& o) {
  ScenarioConfig c = preset("damage-bar-stretch");
  double rise = 0.0, viol = 0.0, min_diss = std::numeric_limits<double>::infinity();
  Eigen::VectorXd prev;
  FieldRun r{make_problem(c), {}, {}};
  r.s0 = make_initial_state(c, r.pb.grid);
  prev = r.s0.alpha;
  const Stepper st(r.pb, c.solver);
  r.result = run(st, r.s0, c.T, [&](const State& s, const StepReport& rep, const EnergyLedger& e) {
    rise = std::max(rise, (s.alpha - prev).maxCoeff());
    viol = std::max({viol, rep.bound_violation, -s.alpha.minCoeff(), s.alpha.maxCoeff() - 1.0});
    min_diss = std::min({min_diss, e.dissipation(), e.damage});
    prev = s.alpha;
  });
  o.need(r.result.completed, "field run aborted");
  o.need(rise <= 1e-12, "monotonicity");
  o.need(viol <= 1e-10, "bounds");
  o.need(min_diss >= 0.0, "dissipation");

  const ScenarioConfig z = preset("damage-0d");
  const Drive0D d = make_drive(z);
  const auto traj = kinematic_drive(d, z.material, z.lambda, z.solver);
  const auto be = integrate_0d_backward_euler(oracle_of(d, z.material, z.lambda), d.tau, z.solver.coupling);
  double err = 0.0;
  for (std::size_t k = 0; k < traj.size() && k < be.size(); ++k)
    err = std::max({err, std::abs(traj[k].alpha - be[k].alpha), max_diff(traj[k].Fe, be[k].Fe)});
  o.need(traj.size() == be.size() && err <= 1e-8, "0D oracle");
  o.detail << "alpha rise " << rise << ", bound violation " << viol << ", min dissipation " << min_diss
           << ", final mean alpha " << r.result.final.alpha.mean() << "; 0D vs oracle " << err;
}

void diffusion_check(Outcome& o) {
  ScenarioConfig c = preset("diffusion-swelling");
  FieldRun r{make_problem(c), {}, {}};
  r.s0 = make_initial_state(c, r.pb.grid);
  const double a0 = sum(r.pb.grid, r.s0.alpha);
  double comp = 0.0, drift = 0.0, min_diss = std::numeric_limits<double>::infinity(), max_diss = 0.0;
  const Stepper st(r.pb, c.solver);
  r.result = run(st, r.s0, c.T, [&](const State& s, const StepReport& rep, const EnergyLedger& e) {
    comp = std::max(comp, rep.complementarity);
    drift = std::max(drift, std::abs(sum(r.pb.grid, s.alpha) - a0) / a0);
    min_diss = std::min(min_diss, e.diffusion);
    max_diss = std::max(max_diss, e.diffusion);
  });
  o.need(r.result.completed, "run aborted");
  o.need(comp <= 1e-9, "complementarity");
  o.need(drift <= 1e-12, "conservation");
  o.need(min_diss >= 0.0, "dissipation");
  o.detail << "complementarity " << comp << ", relative diffusant drift " << drift << ", dissipation in ["
           << min_diss << ", " << max_diss << "]";
}

void spatial_order(Outcome& o) {
  MaterialModel m = preset("shear-creep").material;
  m.viscosity.shear = 0.05;
  m.viscosity.bulk = 0.02;
  ManufacturedFields f;
  f.rho1 = 0.2;
  f.k_rho = Vec3{{2 * kPi, 0.0, 0.0}};
  f.A = Vec3{{0.3, 0.2, 0.0}};
  f.k_v = Vec3{{2 * kPi, 2 * kPi, 0.0}};
  f.phase = Vec3{{0.0, 0.7, 0.0}};
  f.B = Mat3::rows({0.02, 0.01, 0, 0.01, -0.02, 0, 0, 0, 0});
  f.k_F = Vec3{{0.0, 2 * kPi, 0.0}};
  std::vector<ManufacturedResidual> r;
  for (int n : {16, 32, 64})
    r.push_back(manufactured_residual(f, m, 10.0, Grid::make(2, {n, n, 1}, {1, 1, 1}, Boundary::Periodic), 0.01));
  for (std::size_t k = 1; k < r.size(); ++k) {
    const double oc = std::log2(r[k - 1].continuity / r[k].continuity);
    const double om = std::log2(r[k - 1].momentum / r[k].momentum);
    o.need(oc >= 1.8 && oc <= 2.2, "continuity order");
    o.need(om >= 1.8 && om <= 2.2, "momentum order");
    o.detail << "h/" << (8 << k) << "->h/" << (16 << k) << ": continuity " << oc << " momentum " << om << "; ";
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Check>> criteria = {
      {"constitutive derivative check", derivative_check},
      {"truncation seam continuity", seam_check},
      {"conjugate round trip", conjugate_check},
      {"exact discrete mass conservation", mass_check},
      {"positivity invariants", positivity_check},
      {"0D oracle agreement", oracle_agreement},
      {"rigid-rotation energy", rotation_check},
      {"det Fe law", det_law_check},
      {"energy-inequality residual", energy_residual_check},
      {"truncation elimination", truncation_elimination},
      {"discrete Gronwall", gronwall_check_all},
      {"damage", damage_check},
      {"diffusion", diffusion_check},
      {"spatial order", spatial_order},
  };
  int failed = 0;
  int id = 0;
  for (const auto& [name, check] : criteria) {
    ++id;
    Outcome o;
    o.detail << std::setprecision(4);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      check(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << std::setw(2) << id << " " << name << ": "
              << o.detail.str() << " (" << std::fixed << std::setprecision(1) << secs << " s)"
              << std::defaultfloat << "\n"
              << std::flush;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
