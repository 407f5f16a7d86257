#include <doctest.h>

#include <cmath>
#include <numbers>

#include "evd/errors.hpp"
#include "evd/oracle.hpp"
#include "evd/scenario.hpp"

using namespace evd;

namespace {

constexpr double kPi = std::numbers::pi;

double max_diff(const Mat3& a, const Mat3& b) {
  double r = 0.0;
  for (std::size_t k = 0; k < 9; ++k) r = std::max(r, std::abs(a[k] - b[k]));
  return r;
}

Oracle0DConfig maxwell_with_drive() {
  const ScenarioConfig c = preset("maxwell-0d");
  Oracle0DConfig o = make_oracle_config(c, 1e-2);
  o.grad_v = [](double t) { return Mat3::rows({0.1, 0.5 * std::cos(2 * t), 0, 0, -0.05, 0, 0, 0, -0.05}); };
  o.T = 1.0;
  return o;
}

MaterialModel manufactured_material() {
  MaterialModel m = preset("shear-creep").material;
  m.viscosity.shear = 0.05;
  m.viscosity.bulk = 0.02;
  m.viscosity.hyper = 1e-4;
  return m;
}

ManufacturedResidual residual_at(int n, const ManufacturedFields& f) {
  const Grid g = Grid::make(2, {n, n, 1}, {1.0, 1.0, 1.0}, Boundary::Periodic);
  return manufactured_residual(f, manufactured_material(), 10.0, g, 0.01);
}

}  // namespace

TEST_CASE("RK4 reference converges at fourth order") {
  Oracle0DConfig o = maxwell_with_drive();
  auto final_at = [&](double tau) {
    o.tau_fine = tau;
    return integrate_rk4(o).back();
  };
  const auto a = final_at(0.1), b = final_at(0.05), c = final_at(0.025), ref = final_at(0.0025);
  const double ea = max_diff(a.Fe, ref.Fe), eb = max_diff(b.Fe, ref.Fe), ec = max_diff(c.Fe, ref.Fe);
  CHECK(std::log2(ea / eb) == doctest::Approx(4.0).epsilon(0.08));
  CHECK(std::log2(eb / ec) == doctest::Approx(4.0).epsilon(0.08));
}

TEST_CASE("reference trajectory is self-consistent under step halving") {
  Oracle0DConfig o = maxwell_with_drive();
  o.tau_fine = 1e-4;
  const OracleTrajectory t = integrate_0d_reference(o);
  CHECK(t.self_consistency <= 1e-10);
  CHECK(t.samples.back().t == doctest::Approx(1.0));
}

TEST_CASE("output interval thins the reference samples") {
  Oracle0DConfig o = maxwell_with_drive();
  o.tau_fine = 1e-3;
  o.output_interval = 0.1;
  const auto s = integrate_rk4(o);
  REQUIRE(s.size() == 11);
  for (std::size_t k = 0; k < s.size(); ++k) CHECK(s[k].t == doctest::Approx(0.1 * static_cast<double>(k)));
}

TEST_CASE("equilibrium without drive stays constant") {
  Oracle0DConfig o = make_oracle_config(preset("maxwell-0d"), 1e-3);
  o.Fe0 = Mat3::identity();
  o.grad_v = [](double) { return Mat3::zero(); };
  for (const auto& s : integrate_rk4(o)) {
    CHECK(max_diff(s.Fe, Mat3::identity()) == 0.0);
    CHECK(s.alpha == o.alpha0);
  }
}

TEST_CASE("rigid rotation without plastic flow keeps det Fe and the stored energy") {
  const ScenarioConfig c = preset("rigid-rotation-0d");
  const Oracle0DConfig o = make_oracle_config(c, 1e-4);
  const auto s = integrate_rk4(o);
  const double J0 = det(c.initial.Fe0);
  double dj = 0.0, de = 0.0;
  for (const auto& x : s) {
    dj = std::max(dj, std::abs(x.det_fe - J0));
    de = std::max(de, std::abs(x.stored - s.front().stored));
  }
  CHECK(dj <= 1e-12);
  CHECK(de / c.T <= 1e-10);
}

TEST_CASE("constant dilation follows the exponential det law") {
  const ScenarioConfig c = preset("dilation-0d");
  const Oracle0DConfig o = make_oracle_config(c, c.tau / 100.0);
  const double a = c.drive.rate;
  const double J0 = det(c.initial.Fe0);
  double err = 0.0;
  for (const auto& s : integrate_rk4(o)) {
    const double exact = J0 * std::exp(a * s.t);
    err = std::max(err, std::abs(s.det_fe - exact) / exact);
  }
  CHECK(err <= 1e-9);
}

TEST_CASE("independent backward Euler and RK4 reference agree as tau shrinks") {
  const Oracle0DConfig o = maxwell_with_drive();
  Oracle0DConfig fine = o;
  fine.tau_fine = 1e-4;
  const auto ref = integrate_rk4(fine).back();
  std::vector<double> err;
  for (double tau : {0.04, 0.02, 0.01, 0.005}) {
    const auto be = integrate_0d_backward_euler(o, tau, Coupling::GaussSeidel);
    err.push_back(max_diff(be.back().Fe, ref.Fe));
  }
  for (std::size_t k = 1; k < err.size(); ++k) {
    const double order = std::log2(err[k - 1] / err[k]);
    CHECK(order >= 0.9);
    CHECK(order <= 1.2);
  }
}

TEST_CASE("stepper drive agrees with the reference at first order") {
  const ScenarioConfig c = preset("maxwell-0d");
  const Oracle0DConfig o = make_oracle_config(c, c.tau / 100.0);
  const auto ref = integrate_rk4(o).back();
  std::vector<double> err;
  for (double tau : {0.04, 0.02, 0.01}) {
    Drive0D d = make_drive(c);
    d.tau = tau;
    err.push_back(max_diff(kinematic_drive(d, c.material, c.lambda, c.solver).back().Fe, ref.Fe));
  }
  for (std::size_t k = 1; k < err.size(); ++k) {
    const double order = std::log2(err[k - 1] / err[k]);
    CHECK(order >= 0.8);
    CHECK(order <= 1.2);
  }
}

TEST_CASE("damage reference stays in the admissible range") {
  const ScenarioConfig c = preset("damage-0d");
  const auto s = integrate_rk4(make_oracle_config(c, c.tau / 100.0));
  for (std::size_t k = 1; k < s.size(); ++k) {
    CHECK(s[k].alpha <= s[k - 1].alpha + 1e-14);
    CHECK(s[k].alpha >= 0.0);
  }
}

TEST_CASE("manufactured residual vanishes for a constant state") {
  ManufacturedFields f;
  f.rho0 = 1.3;
  f.B = Mat3::zero();
  const ManufacturedResidual r = residual_at(16, f);
  CHECK(r.continuity <= 1e-12);
  CHECK(r.momentum <= 1e-12);
}

TEST_CASE("manufactured residual converges at second order for a velocity mode") {
  ManufacturedFields f;
  f.A = Vec3{{0.3, 0.2, 0.0}};
  f.k_v = Vec3{{2 * kPi, 2 * kPi, 0.0}};
  f.phase = Vec3{{0.0, 0.7, 0.0}};
  f.B = Mat3::rows({0.02, 0.01, 0, 0.01, -0.02, 0, 0, 0, 0});
  f.k_F = Vec3{{0.0, 2 * kPi, 0.0}};
  const auto a = residual_at(16, f), b = residual_at(32, f), c = residual_at(64, f);
  for (double order : {std::log2(a.momentum / b.momentum), std::log2(b.momentum / c.momentum)}) {
    CHECK(order >= 1.8);
    CHECK(order <= 2.2);
  }
}

TEST_CASE("manufactured continuity residual converges at second order with variable density") {
  ManufacturedFields f;
  f.rho1 = 0.2;
  f.k_rho = Vec3{{2 * kPi, 0.0, 0.0}};
  f.A = Vec3{{0.3, -0.1, 0.0}};
  f.k_v = Vec3{{0.0, 2 * kPi, 0.0}};
  f.B = Mat3::zero();
  const auto a = residual_at(16, f), b = residual_at(32, f), c = residual_at(64, f);
  for (double order : {std::log2(a.continuity / b.continuity), std::log2(b.continuity / c.continuity)}) {
    CHECK(order >= 1.8);
    CHECK(order <= 2.2);
  }
}

TEST_CASE("manufactured residual needs a periodic grid and p = 2") {
  ManufacturedFields f;
  const Grid box = Grid::make(2, {8, 8, 1}, {1, 1, 1}, Boundary::SlipBox);
  CHECK_THROWS_AS(manufactured_residual(f, manufactured_material(), 10.0, box, 0.01), ConfigError);
  MaterialModel m = manufactured_material();
  m.viscosity.exponent = 4.0;
  const Grid per = Grid::make(2, {8, 8, 1}, {1, 1, 1}, Boundary::Periodic);
  CHECK_THROWS_AS(manufactured_residual(f, m, 10.0, per, 0.01), ConfigError);
}

TEST_CASE("branch sampler lands in the requested branch") {
  std::mt19937_64 rng(3);
  for (int b = 0; b < 5; ++b)
    for (int k = 0; k < 40; ++k)
      CHECK(classify(sample_in_branch(static_cast<Branch>(b), 4.0, rng), 4.0) == static_cast<Branch>(b));
}
