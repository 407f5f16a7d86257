#include <doctest.h>

#include <cmath>
#include <random>

#include "evd/diagnostics.hpp"
#include "evd/errors.hpp"
#include "evd/scenario.hpp"
#include "evd/stepper.hpp"

using namespace evd;

namespace {

ScenarioConfig small(const std::string& name, int n = 8) {
  ScenarioConfig c = preset(name);
  c.grid.cells = {n, n, 1};
  c.grid.length = {1.0, 1.0, 1.0};
  return c;
}

// Brute-force recursion: the largest y_k allowed by y_k <= C + tau sum_{l<=k} (a_l y_l + b_l),
// scaled by a random factor in [0, 1].
std::vector<double> admissible_sequence(double C, double tau, const std::vector<double>& a,
                                        const std::vector<double>& b, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> y;
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double cap = (C + tau * (acc + b[k])) / (1.0 - tau * a[k]);
    const double yk = (k % 3 == 0 ? 1.0 : u(rng)) * cap;
    y.push_back(yk);
    acc += a[k] * yk + b[k];
  }
  return y;
}

}  // namespace

TEST_CASE("rest state ledger has zero rates and zero residual") {
  const ScenarioConfig c = small("rest-state");
  const Problem pb = make_problem(c);
  const State s0 = make_initial_state(c, pb.grid);
  const Stepper st(pb, c.solver);
  StepReport rep;
  const State s1 = st.step(s0, c.tau, rep);
  const EnergyLedger L = ledger(pb, st.ops(), s0, s1, c.tau);
  CHECK(L.kinetic == 0.0);
  CHECK(L.stored == 0.0);
  CHECK(L.dissipation() == 0.0);
  CHECK(L.power == 0.0);
  CHECK(L.residual_step == 0.0);
  CHECK(L.residual == 0.0);
}

TEST_CASE("kinetic and stored energies are cell sums") {
  ScenarioConfig c = small("shear-creep");
  c.initial.rho_amplitude = 0.25;
  c.initial.Fe0 = Mat3::diag(1.1, 0.95, 1.0);
  const Problem pb = make_problem(c);
  const State s = make_initial_state(c, pb.grid);
  double ke = 0.0, se = 0.0;
  for (Eigen::Index k = 0; k < pb.grid.cells(); ++k) {
    const Vec3 v = vec_at(s.v, k);
    ke += 0.5 * s.rho[k] * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    se += truncate_energy(pb.material.energy, pb.lambda, vec_at(s.xi, k), mat_at(s.Fe, k), s.alpha[k]);
  }
  CHECK(kinetic_energy(pb.grid, s) == doctest::Approx(ke * pb.grid.cell_volume()).epsilon(1e-13));
  CHECK(stored_energy(pb, s) == doctest::Approx(se * pb.grid.cell_volume()).epsilon(1e-13));
}

TEST_CASE("ledger residual follows its definition and accumulates additively") {
  ScenarioConfig c = small("shear-creep");
  c.T = 0.1;
  const Problem pb = make_problem(c);
  const State s0 = make_initial_state(c, pb.grid);
  const Stepper st(pb, c.solver);
  std::vector<EnergyLedger> rows;
  State prev = s0;
  double running = 0.0;
  const RunResult r = run(st, s0, c.T, [&](const State& cur, const StepReport& rep, const EnergyLedger& e) {
    const EnergyLedger again = ledger(pb, st.ops(), prev, cur, rep.tau, running);
    CHECK(again.residual == e.residual);
    const double e_prev = kinetic_energy(pb.grid, prev) + stored_energy(pb, prev);
    CHECK(e.residual_step ==
          doctest::Approx((e.energy() - e_prev) + rep.tau * (e.dissipation() - e.power)).epsilon(1e-12));
    CHECK(e.stokes >= 0.0);
    CHECK(e.hyper >= 0.0);
    CHECK(e.plastic >= 0.0);
    running = e.residual;
    rows.push_back(e);
    prev = cur;
  });
  REQUIRE(r.completed);
  REQUIRE(rows.size() == 10);
  // Splitting [0, T] at any step gives the same total.
  for (std::size_t split = 1; split < rows.size(); ++split) {
    double first = 0.0, second = 0.0;
    for (std::size_t k = 0; k < split; ++k) first += rows[k].residual_step;
    for (std::size_t k = split; k < rows.size(); ++k) second += rows[k].residual_step;
    CHECK(first == doctest::Approx(rows[split - 1].residual).epsilon(1e-12));
    CHECK(first + second == doctest::Approx(rows.back().residual).epsilon(1e-12));
  }
}

TEST_CASE("rigid rotation drive dissipates nothing") {
  const ScenarioConfig c = preset("rigid-rotation-0d");
  Drive0D d = make_drive(c);
  d.T = 0.2;
  for (const auto& s : kinematic_drive(d, c.material, c.lambda, c.solver)) CHECK(s.plastic == 0.0);
}

TEST_CASE("gronwall worked example") {
  const std::vector<double> a(10, 1.0), b(10, 0.0);
  const GronwallCertificate g = gronwall_bound(1.0, 0.1, a, b);
  CHECK(g.valid);
  CHECK(g.a_max == 1.0);
  CHECK(g.bound == doctest::Approx(std::exp(1.0 / 0.9) / 0.9).epsilon(1e-14));
  CHECK(std::abs(g.bound - 3.375) <= 1e-3);
}

TEST_CASE("gronwall bound without growth is the constant") {
  const std::vector<double> z(25, 0.0);
  CHECK(gronwall_bound(2.5, 0.3, z, z).bound == 2.5);
  CHECK(gronwall_bound(0.0, 0.3, z, z).bound == 0.0);
}

TEST_CASE("gronwall bound holds for random admissible sequences") {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + static_cast<int>(u(rng) * 60);
    const double tau = 0.005 + 0.2 * u(rng);
    const double amax = 0.95 / tau * u(rng);
    std::vector<double> a(static_cast<std::size_t>(k)), b(static_cast<std::size_t>(k));
    for (int l = 0; l < k; ++l) {
      a[static_cast<std::size_t>(l)] = amax * u(rng);
      b[static_cast<std::size_t>(l)] = 3.0 * u(rng);
    }
    const double C = 5.0 * u(rng);
    const std::vector<double> y = admissible_sequence(C, tau, a, b, rng);
    CHECK(gronwall_check(C, tau, a, b, y) == -1);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("gronwall checker flags a sequence above the bound") {
  const std::vector<double> a(5, 1.0), b(5, 0.0);
  std::vector<double> y(5, 1.0);
  y[3] = 1e3;
  CHECK(gronwall_check(1.0, 0.1, a, b, y) == 3);
}

TEST_CASE("gronwall bound is monotone in its data") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(12), b(12);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    const double tau = 0.1;
    const double base = gronwall_bound(1.0, tau, a, b).bound;
    CHECK(gronwall_bound(1.5, tau, a, b).bound > base);
    auto b2 = b;
    b2[4] += 0.5;
    CHECK(gronwall_bound(1.0, tau, a, b2).bound > base);
    auto a2 = a;
    a2[7] += 0.2;
    CHECK(gronwall_bound(1.0, tau, a2, b).bound > base);
  }
}

TEST_CASE("gronwall rejects tau a >= 1") {
  const std::vector<double> a{1.0, 10.0}, b{0.0, 0.0};
  CHECK_THROWS_AS(gronwall_bound(1.0, 0.1, a, b), InvalidCertificate);
  CHECK_NOTHROW(gronwall_bound(1.0, 0.099, a, b));
}

TEST_CASE("monitors at the identity and in the dead zone") {
  const double lambda = 5.0;
  const Grid g = Grid::make(2, {4, 4, 1}, {1, 1, 1}, Boundary::Periodic);
  State s = uniform_state(g, 1.0, Mat3::identity(), 1.0);
  Monitors m = monitors(s, lambda);
  CHECK(m.activation == 0.0);
  CHECK(m.norm_margin == doctest::Approx(lambda - std::sqrt(3.0)).epsilon(1e-15));
  CHECK(m.det_margin == doctest::Approx(lambda - 1.0).epsilon(1e-15));
  CHECK(m.min_rho == 1.0);
  CHECK(m.max_inv_rho == 1.0);
  CHECK(m.min_det_fe == 1.0);

  s = uniform_state(g, 1.0, Mat3::diag(12.0, 1.0, 1.0), 1.0);
  CHECK(monitors(s, lambda).activation == 1.0);
  s = uniform_state(g, 1.0, Mat3::diag(0.05, 1.0, 1.0), 1.0);
  m = monitors(s, lambda);
  CHECK(m.activation == 1.0);
  CHECK(m.dead_det_margin < 0.0);

  s = uniform_state(g, 1.0, Mat3::identity(), 1.0);
  set_mat(s.Fe, 5, Mat3::diag(7.0, 1.0, 1.0));
  CHECK(monitors(s, lambda).activation == doctest::Approx(1.0 / 16.0));
}
