#pragma once

// Pointwise constitutive layer: stored energies with their truncation,
// truncated Cauchy stress and inelastic distortion rate, and the dissipation
// potentials driving viscoplastic flow, damage and diffusion.
//
// Energies are per unit actual volume (J/m^3). Heterogeneity enters through
// the material coordinate X = xi(x).

#include <string>
#include <string_view>

#include "evd/tensor.hpp"

namespace evd {

// ---------------------------------------------------------------------------
// Heterogeneity
// ---------------------------------------------------------------------------

enum class ShapeKind { None, TwoPhase, Sinusoidal };

/// Spatial shape s(X) used to modulate material parameters.
///   TwoPhase:   s = 1 inside the ball |X - center| < radius, 0 outside.
///   Sinusoidal: s = sin(2 pi X[axis] / wavelength).
struct MaterialShape {
  ShapeKind kind = ShapeKind::None;
  Vec3 center{};
  double radius = 0.0;
  int axis = 0;
  double wavelength = 1.0;

  double value(const Vec3& X) const;
  Vec3 gradient(const Vec3& X) const;
};

// ---------------------------------------------------------------------------
// Stored energy
// ---------------------------------------------------------------------------

enum class EnergyFamily {
  /// g(a) mu/2 (J^{-2/3}|F|^2 - 3) + kappa/2 (J-1)^2 + Gc (1-a), g(a) = eta + (1-eta) a^2.
  NeoHookeanDamage,
  /// mu/2 (J^{-2/3}|F|^2 - 3) + kappa/2 (J-1-beta a)^2 + kc/2 (a - a0(X))^2.
  NeoHookeanSwelling,
  /// Negative-control fixture: NeoHookeanDamage with a perturbed volumetric derivative.
  BrokenFixture,
};

std::string_view to_string(EnergyFamily f);
EnergyFamily energy_family_from_string(std::string_view s);

struct StoredEnergy {
  EnergyFamily family = EnergyFamily::NeoHookeanDamage;
  double mu = 1.0;
  double kappa = 1.0;
  double eta = 1e-3;      // residual stiffness of the degradation function
  double gc = 0.0;        // damage activation energy
  double swelling = 0.0;  // beta
  double chem = 0.0;      // kc
  double a0 = 0.0;        // reference concentration

  MaterialShape shape{};
  double mu_contrast = 0.0;     // mu(X) = mu (1 + mu_contrast s(X))
  double kappa_contrast = 0.0;  // kappa(X) = kappa (1 + kappa_contrast s(X))
  double gc_contrast = 0.0;     // gc(X) = gc (1 + gc_contrast s(X))
  double a0_jump = 0.0;         // a0(X) = a0 + a0_jump s(X)

  double value(const Vec3& X, const Mat3& F, double alpha) const;
  Mat3 dF(const Vec3& X, const Mat3& F, double alpha) const;
  double dalpha(const Vec3& X, const Mat3& F, double alpha) const;
  double d2alpha(const Vec3& X, const Mat3& F, double alpha) const;
  Vec3 dX(const Vec3& X, const Mat3& F, double alpha) const;

  struct Local {
    double mu, kappa, gc, a0;
  };
  Local at(const Vec3& X) const;
};

// ---------------------------------------------------------------------------
// Truncation
// ---------------------------------------------------------------------------

enum class Branch { Untruncated, BlendDet, BlendNorm, BlendBoth, Dead };
std::string_view to_string(Branch b);

/// Which piece of the three-branch truncation formula applies at F.
Branch classify(const Mat3& F, double lambda);

/// The two C^1 blend factors and their derivatives with respect to det F and |F|.
struct BlendFactors {
  double det = 1.0, ddet = 0.0;
  double norm = 1.0, dnorm = 0.0;
};
BlendFactors blend_factors(double detF, double normF, double lambda);

struct TruncatedEnergy {
  double phi = 0.0;       // phi_lambda
  Mat3 dF{};              // [phi_lambda]'_F
  double dalpha = 0.0;    // [phi_lambda]'_alpha
  double d2alpha = 0.0;   // [phi_lambda]''_alpha
  Branch branch = Branch::Untruncated;
};

TruncatedEnergy evaluate_truncated(const StoredEnergy& phi, double lambda, const Vec3& X,
                                   const Mat3& F, double alpha);

double truncate_energy(const StoredEnergy& phi, double lambda, const Vec3& X, const Mat3& F,
                       double alpha);

/// T_lambda = [phi_lambda]'_F F^T + phi_lambda I.
Mat3 truncated_stress(const StoredEnergy& phi, double lambda, const Vec3& X, const Mat3& F,
                      double alpha);

/// Mandel stress F^T [phi_lambda]'_F.
Mat3 truncated_mandel(const StoredEnergy& phi, double lambda, const Vec3& X, const Mat3& F,
                      double alpha);

// ---------------------------------------------------------------------------
// Viscoplastic dissipation potential on deviatoric rates
// ---------------------------------------------------------------------------

enum class ViscoplasticFamily {
  Quadratic,  // |L|^2 / (2 theta)
  Quartic,    // |L|^2 / (2 theta) + beta |L|^4 / 4
  Huber,      // |L|^2 / (2 theta) + beta (sqrt(1 + |L|^2) - 1)
};
std::string_view to_string(ViscoplasticFamily f);
ViscoplasticFamily viscoplastic_family_from_string(std::string_view s);

struct ViscoplasticPotential {
  ViscoplasticFamily family = ViscoplasticFamily::Quadratic;
  /// Maxwell fluidity; theta = 0 switches viscoplastic flow off.
  double theta = 1.0;
  double beta = 0.0;
  MaterialShape shape{};
  double theta_contrast = 0.0;

  int max_newton = 60;

  double theta_at(const Vec3& X) const;
  double value(const Vec3& X, const Mat3& L) const;
  Mat3 derivative(const Vec3& X, const Mat3& L) const;
  /// Second derivative of zeta applied to a direction E.
  Mat3 second_derivative(const Vec3& X, const Mat3& L, const Mat3& E) const;
  /// Upper bound on |[zeta*]'(M)| / |M|.
  double rate_bound_factor(const Vec3& X) const { return theta_at(X); }
};

/// L in R^{3x3}_dev solving zeta'(X, L) = M_dev, i.e. [zeta(X,.)*]'(M_dev).
/// Throws ConvergenceError if the damped Newton iteration stalls.
Mat3 conjugate_rate(const ViscoplasticPotential& zeta, const Vec3& X, const Mat3& M_dev);

/// Sampled check of quadratic coercivity and growth of zeta. Returns the
/// observed (inf zeta/|L|^2, sup zeta/(1+|L|^2)) over `samples` random rates.
struct GrowthBounds {
  double coercivity;
  double growth;
};
GrowthBounds sample_growth_bounds(const ViscoplasticPotential& zeta, const Vec3& X, int samples,
                                  unsigned seed, double max_norm);

/// [zeta*]'(dev(F^T [phi_lambda]'_F)).
Mat3 truncated_plastic_rate(const StoredEnergy& phi, const ViscoplasticPotential& zeta,
                            double lambda, const Vec3& X, const Mat3& F, double alpha);

/// A priori bound on |L_lambda| over all F, from the truncation region
/// |F| <= 2 lambda, det F >= 1/(2 lambda).
double plastic_rate_bound(const StoredEnergy& phi, const ViscoplasticPotential& zeta,
                          double lambda);

// ---------------------------------------------------------------------------
// Damage
// ---------------------------------------------------------------------------

enum class DamageMode { Bidirectional, Unidirectional };
enum class DamageSign {
  Dissipative,  // rate = [zeta*]'(-phi'_alpha): stored energy non-increasing
  Literal,      // rate = [zeta*]'(+phi'_alpha)
};

struct DamagePotential {
  double modulus = 1.0;  // G, Pa s
  DamageMode mode = DamageMode::Unidirectional;
  DamageSign sign = DamageSign::Dissipative;

  /// [zeta_dm*]'(drive).
  double conjugate_rate(double drive) const;
  /// Generalized derivative of conjugate_rate with respect to drive.
  double conjugate_rate_derivative(double drive) const;
  double value(double rate) const;
  double derivative(double rate) const { return modulus * rate; }
  /// rate * zeta_dm'(rate).
  double dissipation(double rate) const { return rate * derivative(rate); }
};

double damage_rate(const StoredEnergy& phi, const DamagePotential& zeta, double lambda,
                   const Vec3& X, const Mat3& F, double alpha);

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

struct DiffusionLaw {
  double mobility = 1.0;
  /// m(X, a) = mobility (1 + slope a) (1 + contrast s(X)); requires slope > -1.
  double slope = 0.0;
  MaterialShape shape{};
  double contrast = 0.0;

  double m(const Vec3& X, double alpha) const;
  double dm_dalpha(const Vec3& X, double alpha) const;
};

/// Violation of the complementarity conditions of mu in phi'_a + N_[0,1](a):
/// dual > 0 needs a = 1, dual < 0 needs a = 0.
double complementarity_residual(double alpha, double dual);

struct ChemicalPotential {
  double mu;
  double residual;
};

/// mu = [phi_lambda]'_alpha + dual. Throws BoundViolation when alpha leaves [0,1].
ChemicalPotential chemical_potential(const StoredEnergy& phi, double lambda, const Vec3& X,
                                     const Mat3& F, double alpha, double dual);

// ---------------------------------------------------------------------------
// Aggregate
// ---------------------------------------------------------------------------

enum class InternalVariable { None, Damage, Diffusion };

struct Viscosity {
  double shear = 0.0;  // Stokes shear viscosity
  double bulk = 0.0;   // Stokes bulk viscosity
  double hyper = 1e-4; // nu
  double exponent = 2.0;  // p >= 2
};

struct MaterialModel {
  StoredEnergy energy{};
  ViscoplasticPotential viscoplastic{};
  InternalVariable internal = InternalVariable::None;
  DamagePotential damage{};
  DiffusionLaw diffusion{};
  Viscosity viscosity{};

  /// D eps for a velocity gradient (only its symmetric part matters).
  Mat3 stokes_stress(const Mat3& grad_v) const;
};

}  // namespace evd
