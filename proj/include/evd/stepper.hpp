#pragma once

// The staggered time step: implicit mass-momentum solve with the stress
// lagged, then transport of the material coordinate, then the elastic
// distortion, then damage or diffusion.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evd/diagnostics.hpp"
#include "evd/state.hpp"

namespace evd {

enum class Coupling { GaussSeidel, Monolithic };
/// Frozen keeps rho and v fixed and only runs the constitutive updates.
enum class MomentumMode { Dynamic, Frozen };

struct StepConfig {
  double tau = 1e-2;
  double momentum_rtol = 1e-11;
  double momentum_atol = 1e-12;
  double transport_tol = 1e-13;
  double local_tol = 1e-13;
  double complementarity_tol = 1e-11;
  int max_newton = 25;
  int max_local_newton = 40;
  int max_active_set = 60;
  // (eps, delta) continuation used when plain Newton fails.
  double eps0 = 1e-2;
  double delta0 = 1e-2;
  double continuation_factor = 0.1;
  int continuation_stages = 4;
  bool force_continuation = false;
  AdvectionScheme scheme = AdvectionScheme::Upwind;
  Coupling coupling = Coupling::GaussSeidel;
  MomentumMode momentum = MomentumMode::Dynamic;
  int max_retries = 8;
};

struct MomentumReport {
  int iterations = 0;
  double residual = 0.0;
  bool continuation = false;
  int continuation_iterations = 0;
};

struct StepReport {
  long step = 0;
  double t = 0.0;
  double tau = 0.0;
  MomentumReport momentum;
  int xi_iterations = 0;
  int fe_iterations = 0;
  double fe_residual = 0.0;
  int alpha_iterations = 0;
  double alpha_residual = 0.0;
  double complementarity = 0.0;
  double bound_violation = 0.0;
  Monitors monitors;
  bool tau_admissible = true;     // tau M |g| < 1
  bool div_admissible = true;     // tau |div v| <= 1/sqrt 2
  double cfl = 0.0;               // tau max sum_a |v_a| / h_a, informational
  bool truncation_warning = false;
  int retries = 0;
};

/// Regularization of the mass-momentum system: eps |v|^{p-2} v in the
/// momentum equation, delta |grad rho|^2 grad rho diffusion of mass and its
/// companion delta |grad rho|^2 (grad v) grad rho.
struct Regularization {
  double eps = 0.0;
  double delta = 0.0;
};

class Stepper {
 public:
  Stepper(Problem problem, StepConfig cfg);

  const Problem& problem() const { return pb_; }
  const StepConfig& config() const { return cfg_; }
  StepConfig& config() { return cfg_; }
  const Operators& ops() const { return ops_; }

  /// Solves for (rho, v) with the stress lagged at prev; p = rho v.
  /// Falls back to (eps, delta) continuation; throws StepFailure when both fail.
  MomentumReport solve_mass_momentum(const State& prev, double tau, State& next) const;
  /// One Newton solve of the regularized system; returns false on failure.
  bool newton_mass_momentum(const State& prev, double tau, const Regularization& reg,
                            State& next, MomentumReport& rep) const;
  /// Residual of the regularized mass-momentum system at (rho, v) of `next`.
  Eigen::VectorXd mass_momentum_residual(const State& prev, double tau, const Regularization& reg,
                                         const State& next) const;

  VectorField update_xi(const VectorField& xi_prev, const VectorField& v, double tau) const;
  MatField update_Fe(const MatField& Fe_prev, const VectorField& v, const VectorField& xi,
                     const ScalarField& alpha, double tau, StepReport* rep = nullptr) const;
  ScalarField update_damage(const ScalarField& alpha_prev, const MatField& Fe,
                            const VectorField& xi, const VectorField& v, double tau,
                            StepReport* rep = nullptr) const;
  /// Monolithic (Fe, alpha) solve for damage.
  void update_fe_damage(const MatField& Fe_prev, const ScalarField& alpha_prev,
                        const VectorField& v, const VectorField& xi, double tau, MatField& Fe,
                        ScalarField& alpha, StepReport* rep = nullptr) const;
  /// Returns alpha; writes mu and the normal-cone multiplier.
  ScalarField update_diffusion(const ScalarField& alpha_prev, const MatField& Fe,
                               const VectorField& xi, const VectorField& v, double tau,
                               ScalarField& mu, ScalarField& dual,
                               StepReport* rep = nullptr) const;

  State step(const State& prev, double tau, StepReport& rep) const;

  /// Checks tau M |g|_inf < 1 with M the total mass; throws ConfigError otherwise.
  void check_tau_admissible(const State& s, double tau) const;

 private:
  Problem pb_;
  StepConfig cfg_;
  Operators ops_;
};

using StepSink = std::function<void(const State&, const StepReport&, const EnergyLedger&)>;

struct RunResult {
  State final;
  long steps = 0;
  bool completed = false;
  long failed_step = -1;
  std::string message;
  std::vector<EnergyLedger> ledger;
};

/// Time loop to T. Failed steps are retried with tau halved; the run continues
/// at the reduced step and the last step is clipped to land on T.
RunResult run(const Stepper& stepper, const State& initial, double T, const StepSink& sink = {});

// ---------------------------------------------------------------------------
// Homogeneous constitutive drive
// ---------------------------------------------------------------------------

struct Drive0D {
  std::function<Mat3(double)> grad_v;  // prescribed homogeneous velocity gradient
  Mat3 Fe0 = Mat3::identity();
  double alpha0 = 1.0;
  Vec3 X{};
  double tau = 1e-2;
  double T = 1.0;
};

struct Sample0D {
  double t;
  Mat3 Fe;
  double alpha;
  double stored;
  double plastic;  // L : M at the sample
};

/// Integrates the constitutive subsystem with the stepper's backward-Euler
/// updates and coupling mode.
std::vector<Sample0D> kinematic_drive(const Drive0D& drive, const MaterialModel& material,
                                      double lambda, const StepConfig& cfg);

}  // namespace evd
