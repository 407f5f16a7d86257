#pragma once

// Energy-dissipation ledger, a-priori monitors and the discrete Gronwall bound.

#include <string>
#include <vector>

#include "evd/state.hpp"

namespace evd {

struct EnergyLedger {
  double t = 0.0;
  double kinetic = 0.0;
  double stored = 0.0;
  // Rates at the new state (W).
  double stokes = 0.0;
  double hyper = 0.0;
  double plastic = 0.0;
  double damage = 0.0;
  double diffusion = 0.0;
  double power = 0.0;
  // R for this step and its signed running sum (J).
  double residual_step = 0.0;
  double residual = 0.0;

  double energy() const { return kinetic + stored; }
  double dissipation() const { return stokes + hyper + plastic + damage + diffusion; }
};

double kinetic_energy(const Grid& g, const State& s);
double stored_energy(const Problem& pb, const State& s);

/// Ledger of the step prev -> next taken with step size tau. `cumulative` is
/// the running residual before this step.
EnergyLedger ledger(const Problem& pb, const Operators& ops, const State& prev, const State& next,
                    double tau, double cumulative = 0.0);
/// Ledger entry at a single state with no step attached (rates only).
EnergyLedger ledger_at(const Problem& pb, const Operators& ops, const State& s);

struct Monitors {
  double min_rho = 0.0;
  double max_inv_rho = 0.0;
  double min_det_fe = 0.0;
  double max_norm_fe = 0.0;
  double max_inv_det_fe = 0.0;
  double norm_margin = 0.0;       // lambda - max |Fe|
  double det_margin = 0.0;        // lambda - max 1/det Fe
  double dead_norm_margin = 0.0;  // 2 lambda - max |Fe|
  double dead_det_margin = 0.0;   // 2 lambda - max 1/det Fe
  double activation = 0.0;        // fraction of cells outside the untruncated region
};

Monitors monitors(const State& s, double lambda);

struct GronwallCertificate {
  double bound = 0.0;
  double a_max = 0.0;
  bool valid = false;
};

/// Bound on y_k from y_k <= C + tau sum_{l<=k} (a_l y_l + b_l):
///   y_k <= (C + tau sum b) exp(tau sum a / (1 - a tau)) / (1 - a tau), a = max a_l.
/// Throws InvalidCertificate when tau a >= 1.
GronwallCertificate gronwall_bound(double C, double tau, const std::vector<double>& a,
                                   const std::vector<double>& b);

/// Checks y_k <= bound for every prefix k of the sequences. Returns the index
/// of the first violation or -1.
long gronwall_check(double C, double tau, const std::vector<double>& a,
                    const std::vector<double>& b, const std::vector<double>& y);

}  // namespace evd
