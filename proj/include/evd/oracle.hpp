#pragma once

// Reference computations used to verify the solver: a high-resolution 0D
// integrator of the constitutive subsystem, an independent 0D backward-Euler
// integrator, finite-difference checks of the truncated energy derivatives,
// and a manufactured-solution residual evaluator for the spatial assembly.

#include <array>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "evd/grid.hpp"
#include "evd/material.hpp"
#include "evd/stepper.hpp"

namespace evd {

struct Oracle0DConfig {
  std::function<Mat3(double)> grad_v;
  Mat3 Fe0 = Mat3::identity();
  double alpha0 = 1.0;
  Vec3 X{};
  MaterialModel material{};
  double lambda = 10.0;
  double tau_fine = 1e-4;
  double T = 1.0;
  /// Output every `output_interval` in time (must be a multiple of tau_fine).
  double output_interval = 0.0;
};

struct OracleSample {
  double t;
  Mat3 Fe;
  double alpha;
  double stored;
  double det_fe;
};

struct OracleTrajectory {
  std::vector<OracleSample> samples;
  /// Max difference of the final (Fe, alpha) between tau_fine and tau_fine/2.
  double self_consistency = 0.0;
};

/// Classical RK4 on Fe' = (grad v) Fe - Fe L_lambda, alpha' = D_lambda.
/// Throws InvariantViolation if det Fe reaches 0.
std::vector<OracleSample> integrate_rk4(const Oracle0DConfig& cfg);
/// RK4 run plus a step-halving run for the self-consistency estimate.
OracleTrajectory integrate_0d_reference(const Oracle0DConfig& cfg);

/// Independent backward-Euler integration with step tau and the given damage
/// coupling; dense Newton on each step.
std::vector<OracleSample> integrate_0d_backward_euler(const Oracle0DConfig& cfg, double tau,
                                                      Coupling coupling);

struct FdReport {
  double max_error_dF = 0.0;      // relative, [phi_lambda]'_F
  double max_error_stress = 0.0;  // relative, T_lambda
  double max_error_dalpha = 0.0;  // relative, [phi_lambda]'_alpha
  double max_error = 0.0;
  Branch worst_branch = Branch::Untruncated;
  Mat3 worst_F{};
  std::array<int, 5> per_branch{};
  std::array<double, 5> per_branch_error{};
};

/// Samples F in every truncation branch (samples / 5 each, at least one) and
/// compares analytic derivatives against central differences with step h.
FdReport fd_stress_check(const StoredEnergy& phi, double lambda, int samples, unsigned seed = 7,
                         double h = 1e-5);

/// Continuity of phi_lambda and of its derivative across the four seams
/// |F| = lambda, 2 lambda and det F = 1/lambda, 1/(2 lambda), relative to the
/// size of the untruncated energy at the crossing point.
struct SeamReport {
  double max_jump = 0.0;
  double max_kink = 0.0;
  double worst = 0.0;
  std::string worst_seam;
};
SeamReport seam_continuity(const StoredEnergy& phi, double lambda, int samples, unsigned seed = 11);

/// max |zeta'([zeta*]'(M)) - M| over random deviatoric M with |M| in [1e-3, 10].
double conjugate_roundtrip(const ViscoplasticPotential& zeta, int samples, unsigned seed = 5);

/// Random F inside the requested branch of the truncation.
Mat3 sample_in_branch(Branch b, double lambda, std::mt19937_64& rng);

/// Smooth periodic fields with closed-form derivatives:
///   rho = rho0 + rho1 sin(k_rho . x)
///   v_i = A_i sin(k_v . x + phase_i)
///   Fe  = I + B sin(k_F . x)
/// xi is the identity.
struct ManufacturedFields {
  double rho0 = 1.0, rho1 = 0.0;
  Vec3 k_rho{};
  Vec3 A{};
  Vec3 phase{};
  Vec3 k_v{};
  Mat3 B{};
  Vec3 k_F{};
};

struct ManufacturedResidual {
  double continuity = 0.0;  // max-norm error of the discrete continuity operator
  double momentum = 0.0;    // max-norm error of the discrete momentum operator
};

/// Discrete spatial residual minus the exact continuous operator at cell
/// centres. Needs a periodic grid and hyperviscosity exponent 2; the energy
/// must not depend on X.
ManufacturedResidual manufactured_residual(const ManufacturedFields& f, const MaterialModel& mat,
                                           double lambda, const Grid& grid, double tau,
                                           const Vec3& gravity = Vec3{});

State manufactured_state(const ManufacturedFields& f, const Grid& grid);

}  // namespace evd
