#include "evd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evd/errors.hpp"

namespace evd {

double kinetic_energy(const Grid& g, const State& s) {
  ScalarField v2 = ScalarField::Zero(g.cells());
  for (const auto& c : s.v) v2 += c.cwiseAbs2();
  return 0.5 * inner(g, s.rho, v2);
}

double stored_energy(const Problem& pb, const State& s) {
  double e = 0.0;
  for (Eigen::Index c = 0; c < pb.grid.cells(); ++c) {
    e += truncate_energy(pb.material.energy, pb.lambda, vec_at(s.xi, c), mat_at(s.Fe, c),
                         s.alpha[c]);
  }
  return e * pb.grid.cell_volume();
}

namespace {

void rates(const Problem& pb, const Operators& ops, const State& s, EnergyLedger& L) {
  const Grid& g = pb.grid;
  const MaterialModel& mat = pb.material;
  const MatField gv = ops.grad(s.v);
  double stokes = 0.0, plastic = 0.0, power = 0.0;
  for (Eigen::Index c = 0; c < g.cells(); ++c) {
    const Mat3 G = mat_at(gv, c);
    stokes += ddot(mat.stokes_stress(G), G);
    const Vec3 X = vec_at(s.xi, c);
    const Mat3 F = mat_at(s.Fe, c);
    const TruncatedEnergy e = evaluate_truncated(mat.energy, pb.lambda, X, F, s.alpha[c]);
    if (e.branch != Branch::Dead && mat.viscoplastic.theta > 0.0) {
      const Mat3 M = dev(transpose(F) * e.dF);
      plastic += ddot(conjugate_rate(mat.viscoplastic, X, M), M);
    }
    power += s.rho[c] * dot(pb.gravity, vec_at(s.v, c));
  }
  const double vol = g.cell_volume();
  L.kinetic = kinetic_energy(g, s);
  L.stored = stored_energy(pb, s);
  L.stokes = stokes * vol;
  L.hyper = ops.hyper_dissipation(s.v, mat.viscosity.hyper, mat.viscosity.exponent);
  L.plastic = plastic * vol;
  L.power = power * vol;
  L.t = s.t;
}

}  // namespace

EnergyLedger ledger_at(const Problem& pb, const Operators& ops, const State& s) {
  EnergyLedger L;
  rates(pb, ops, s, L);
  if (pb.material.internal == InternalVariable::Diffusion) {
    ScalarField m(pb.grid.cells());
    for (Eigen::Index c = 0; c < pb.grid.cells(); ++c)
      m[c] = pb.material.diffusion.m(vec_at(s.xi, c), s.alpha[c]);
    L.diffusion = ops.face_dissipation(m, s.mu);
  }
  return L;
}

EnergyLedger ledger(const Problem& pb, const Operators& ops, const State& prev, const State& next,
                    double tau, double cumulative) {
  EnergyLedger L = ledger_at(pb, ops, next);
  if (pb.material.internal == InternalVariable::Damage) {
    const ScalarField transport = ops.advect(next.alpha, next.v, AdvectionScheme::Upwind);
    const ScalarField r = (next.alpha - prev.alpha) / tau + transport;
    double d = 0.0;
    for (Eigen::Index c = 0; c < r.size(); ++c) d += pb.material.damage.dissipation(r[c]);
    L.damage = d * pb.grid.cell_volume();
  }
  const double e_prev = kinetic_energy(pb.grid, prev) + stored_energy(pb, prev);
  L.residual_step = (L.energy() - e_prev) + tau * L.dissipation() - tau * L.power;
  L.residual = cumulative + L.residual_step;
  return L;
}

Monitors monitors(const State& s, double lambda) {
  Monitors m;
  const Eigen::Index n = s.rho.size();
  m.min_rho = s.rho.minCoeff();
  m.max_inv_rho = s.rho.cwiseInverse().maxCoeff();
  m.min_det_fe = std::numeric_limits<double>::infinity();
  long active = 0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const Mat3 F = mat_at(s.Fe, c);
    const double J = det(F);
    m.min_det_fe = std::min(m.min_det_fe, J);
    m.max_norm_fe = std::max(m.max_norm_fe, frob(F));
    m.max_inv_det_fe = std::max(m.max_inv_det_fe, J > 0.0 ? 1.0 / J
                                                           : std::numeric_limits<double>::infinity());
    if (classify(F, lambda) != Branch::Untruncated) ++active;
  }
  m.norm_margin = lambda - m.max_norm_fe;
  m.det_margin = lambda - m.max_inv_det_fe;
  m.dead_norm_margin = 2.0 * lambda - m.max_norm_fe;
  m.dead_det_margin = 2.0 * lambda - m.max_inv_det_fe;
  m.activation = n > 0 ? static_cast<double>(active) / static_cast<double>(n) : 0.0;
  return m;
}

GronwallCertificate gronwall_bound(double C, double tau, const std::vector<double>& a,
                                   const std::vector<double>& b) {
  GronwallCertificate g;
  double sa = 0.0, sb = 0.0;
  for (double x : a) {
    g.a_max = std::max(g.a_max, x);
    sa += x;
  }
  for (double x : b) sb += x;
  if (tau * g.a_max >= 1.0) {
    throw InvalidCertificate("gronwall_bound: tau * max a = " + std::to_string(tau * g.a_max) +
                             " >= 1");
  }
  const double q = 1.0 - g.a_max * tau;
  g.bound = (C + tau * sb) * std::exp(tau * sa / q) / q;
  g.valid = true;
  return g;
}

long gronwall_check(double C, double tau, const std::vector<double>& a,
                    const std::vector<double>& b, const std::vector<double>& y) {
  std::vector<double> pa, pb;
  for (std::size_t k = 0; k < y.size(); ++k) {
    pa.push_back(a[k]);
    pb.push_back(b[k]);
    const GronwallCertificate g = gronwall_bound(C, tau, pa, pb);
    if (y[k] > g.bound * (1.0 + 1e-14)) return static_cast<long>(k);
  }
  return -1;
}

}  // namespace evd
