#include "evd/material.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "evd/errors.hpp"

namespace evd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double shape_factor(const MaterialShape& s, const Vec3& X, double contrast) {
  return 1.0 + contrast * s.value(X);
}

// Largest value of (1 + c s) over the range of s.
double max_factor(const MaterialShape& s, double c) {
  switch (s.kind) {
    case ShapeKind::None: return 1.0;
    case ShapeKind::TwoPhase: return std::max(1.0, 1.0 + c);
    case ShapeKind::Sinusoidal: return 1.0 + std::abs(c);
  }
  return 1.0;
}

struct Iso {
  double J, n2, Jm23, phi_shape;  // phi_shape = J^{-2/3}|F|^2 - 3
  Mat3 cofF;
};

Iso iso_parts(const Mat3& F) {
  Iso r;
  r.J = det(F);
  r.n2 = ddot(F, F);
  r.Jm23 = std::pow(r.J, -2.0 / 3.0);
  r.phi_shape = r.Jm23 * r.n2 - 3.0;
  r.cofF = cof(F);
  return r;
}

// d/dF of J^{-2/3}|F|^2.
Mat3 iso_derivative(const Iso& p, const Mat3& F) {
  return p.Jm23 * (2.0 * F - (2.0 * p.n2 / (3.0 * p.J)) * p.cofF);
}

}  // namespace

// ---------------------------------------------------------------------------

double MaterialShape::value(const Vec3& X) const {
  switch (kind) {
    case ShapeKind::None: return 0.0;
    case ShapeKind::TwoPhase: return norm(X - center) < radius ? 1.0 : 0.0;
    case ShapeKind::Sinusoidal:
      return std::sin(2.0 * std::numbers::pi * X[static_cast<std::size_t>(axis)] / wavelength);
  }
  return 0.0;
}

Vec3 MaterialShape::gradient(const Vec3& X) const {
  Vec3 g;
  if (kind == ShapeKind::Sinusoidal) {
    const double k = 2.0 * std::numbers::pi / wavelength;
    g[static_cast<std::size_t>(axis)] = k * std::cos(k * X[static_cast<std::size_t>(axis)]);
  }
  return g;
}

std::string_view to_string(EnergyFamily f) {
  switch (f) {
    case EnergyFamily::NeoHookeanDamage: return "neo-hookean-damage";
    case EnergyFamily::NeoHookeanSwelling: return "neo-hookean-swelling";
    case EnergyFamily::BrokenFixture: return "broken-fixture";
  }
  return "?";
}

EnergyFamily energy_family_from_string(std::string_view s) {
  if (s == "neo-hookean-damage" || s == "neo-hookean") return EnergyFamily::NeoHookeanDamage;
  if (s == "neo-hookean-swelling") return EnergyFamily::NeoHookeanSwelling;
  if (s == "broken-fixture") return EnergyFamily::BrokenFixture;
  throw ConfigError("unknown energy family '" + std::string(s) + "'");
}

StoredEnergy::Local StoredEnergy::at(const Vec3& X) const {
  const double s = shape.value(X);
  return {mu * (1.0 + mu_contrast * s), kappa * (1.0 + kappa_contrast * s),
          gc * (1.0 + gc_contrast * s), a0 + a0_jump * s};
}

double StoredEnergy::value(const Vec3& X, const Mat3& F, double alpha) const {
  const Iso p = iso_parts(F);
  if (!(p.J > 0.0)) return kInf;
  const Local c = at(X);
  const double iso = 0.5 * c.mu * p.phi_shape;
  if (family == EnergyFamily::NeoHookeanSwelling) {
    const double e = p.J - 1.0 - swelling * alpha;
    return iso + 0.5 * c.kappa * e * e + 0.5 * chem * (alpha - c.a0) * (alpha - c.a0);
  }
  const double g = eta + (1.0 - eta) * alpha * alpha;
  return g * iso + 0.5 * c.kappa * (p.J - 1.0) * (p.J - 1.0) + c.gc * (1.0 - alpha);
}

Mat3 StoredEnergy::dF(const Vec3& X, const Mat3& F, double alpha) const {
  const Iso p = iso_parts(F);
  const Local c = at(X);
  const Mat3 diso = (0.5 * c.mu) * iso_derivative(p, F);
  switch (family) {
    case EnergyFamily::NeoHookeanSwelling:
      return diso + (c.kappa * (p.J - 1.0 - swelling * alpha)) * p.cofF;
    case EnergyFamily::NeoHookeanDamage:
    case EnergyFamily::BrokenFixture: {
      const double g = eta + (1.0 - eta) * alpha * alpha;
      const double vol = family == EnergyFamily::BrokenFixture ? 1.01 : 1.0;
      return g * diso + (vol * c.kappa * (p.J - 1.0)) * p.cofF;
    }
  }
  return {};
}

double StoredEnergy::dalpha(const Vec3& X, const Mat3& F, double alpha) const {
  const Iso p = iso_parts(F);
  const Local c = at(X);
  if (family == EnergyFamily::NeoHookeanSwelling) {
    return -c.kappa * swelling * (p.J - 1.0 - swelling * alpha) + chem * (alpha - c.a0);
  }
  return 2.0 * (1.0 - eta) * alpha * 0.5 * c.mu * p.phi_shape - c.gc;
}

double StoredEnergy::d2alpha(const Vec3& X, const Mat3& F, double) const {
  const Local c = at(X);
  if (family == EnergyFamily::NeoHookeanSwelling) {
    return c.kappa * swelling * swelling + chem;
  }
  return (1.0 - eta) * c.mu * iso_parts(F).phi_shape;
}

Vec3 StoredEnergy::dX(const Vec3& X, const Mat3& F, double alpha) const {
  const Vec3 ds = shape.gradient(X);
  if (shape.kind != ShapeKind::Sinusoidal) return {};
  const Iso p = iso_parts(F);
  const Local c = at(X);
  double dphi_dmu, dphi_dkappa, dphi_dgc = 0.0, dphi_da0 = 0.0;
  if (family == EnergyFamily::NeoHookeanSwelling) {
    const double e = p.J - 1.0 - swelling * alpha;
    dphi_dmu = 0.5 * p.phi_shape;
    dphi_dkappa = 0.5 * e * e;
    dphi_da0 = -chem * (alpha - c.a0);
  } else {
    dphi_dmu = (eta + (1.0 - eta) * alpha * alpha) * 0.5 * p.phi_shape;
    dphi_dkappa = 0.5 * (p.J - 1.0) * (p.J - 1.0);
    dphi_dgc = 1.0 - alpha;
  }
  const double total = dphi_dmu * mu * mu_contrast + dphi_dkappa * kappa * kappa_contrast +
                       dphi_dgc * gc * gc_contrast + dphi_da0 * a0_jump;
  return total * ds;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::Untruncated: return "untruncated";
    case Branch::BlendDet: return "blend_det";
    case Branch::BlendNorm: return "blend_norm";
    case Branch::BlendBoth: return "blend_both";
    case Branch::Dead: return "dead";
  }
  return "?";
}

Branch classify(const Mat3& F, double lambda) {
  const double J = det(F);
  const double n = frob(F);
  if (n >= 2.0 * lambda || J <= 0.5 / lambda) return Branch::Dead;
  const bool bd = J < 1.0 / lambda;
  const bool bn = n > lambda;
  if (bd && bn) return Branch::BlendBoth;
  if (bd) return Branch::BlendDet;
  if (bn) return Branch::BlendNorm;
  return Branch::Untruncated;
}

BlendFactors blend_factors(double J, double n, double lambda) {
  BlendFactors b;
  if (J <= 0.5 / lambda) {
    b.det = 0.0;
  } else if (J < 1.0 / lambda) {
    const double u = 2.0 * J - 1.0 / lambda;
    const double l2 = lambda * lambda;
    b.det = 3.0 * l2 * u * u - 2.0 * l2 * lambda * u * u * u;
    b.ddet = 2.0 * (6.0 * l2 * u - 6.0 * l2 * lambda * u * u);
  }
  if (n >= 2.0 * lambda) {
    b.norm = 0.0;
  } else if (n > lambda) {
    const double s = n / lambda - 1.0;
    b.norm = 1.0 - (3.0 * s * s - 2.0 * s * s * s);
    b.dnorm = -(6.0 * s - 6.0 * s * s) / lambda;
  }
  return b;
}

TruncatedEnergy evaluate_truncated(const StoredEnergy& phi, double lambda, const Vec3& X,
                                   const Mat3& F, double alpha) {
  TruncatedEnergy r;
  r.branch = classify(F, lambda);
  if (r.branch == Branch::Dead) return r;
  const double J = det(F);
  const double n = frob(F);
  const BlendFactors b = blend_factors(J, n, lambda);
  const double w = b.det * b.norm;
  const double p = phi.value(X, F, alpha);
  r.phi = w * p;
  r.dF = w * phi.dF(X, F, alpha);
  if (r.branch != Branch::Untruncated) {
    r.dF += (p * b.ddet * b.norm) * cof(F) + (p * b.det * b.dnorm / n) * F;
  }
  r.dalpha = w * phi.dalpha(X, F, alpha);
  r.d2alpha = w * phi.d2alpha(X, F, alpha);
  return r;
}

double truncate_energy(const StoredEnergy& phi, double lambda, const Vec3& X, const Mat3& F,
                       double alpha) {
  return evaluate_truncated(phi, lambda, X, F, alpha).phi;
}

Mat3 truncated_stress(const StoredEnergy& phi, double lambda, const Vec3& X, const Mat3& F,
                      double alpha) {
  const TruncatedEnergy e = evaluate_truncated(phi, lambda, X, F, alpha);
  if (e.branch == Branch::Dead) return {};
  return e.dF * transpose(F) + e.phi * Mat3::identity();
}

Mat3 truncated_mandel(const StoredEnergy& phi, double lambda, const Vec3& X, const Mat3& F,
                      double alpha) {
  const TruncatedEnergy e = evaluate_truncated(phi, lambda, X, F, alpha);
  return transpose(F) * e.dF;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ViscoplasticFamily f) {
  switch (f) {
    case ViscoplasticFamily::Quadratic: return "quadratic";
    case ViscoplasticFamily::Quartic: return "quartic";
    case ViscoplasticFamily::Huber: return "huber";
  }
  return "?";
}

ViscoplasticFamily viscoplastic_family_from_string(std::string_view s) {
  if (s == "quadratic") return ViscoplasticFamily::Quadratic;
  if (s == "quartic") return ViscoplasticFamily::Quartic;
  if (s == "huber") return ViscoplasticFamily::Huber;
  throw ConfigError("unknown viscoplastic family '" + std::string(s) + "'");
}

double ViscoplasticPotential::theta_at(const Vec3& X) const {
  return theta * shape_factor(shape, X, theta_contrast);
}

double ViscoplasticPotential::value(const Vec3& X, const Mat3& L) const {
  const double th = theta_at(X);
  const double n2 = ddot(L, L);
  if (th <= 0.0) return n2 == 0.0 ? 0.0 : kInf;
  double v = n2 / (2.0 * th);
  if (family == ViscoplasticFamily::Quartic) v += 0.25 * beta * n2 * n2;
  if (family == ViscoplasticFamily::Huber) v += beta * (std::sqrt(1.0 + n2) - 1.0);
  return v;
}

Mat3 ViscoplasticPotential::derivative(const Vec3& X, const Mat3& L) const {
  const double th = theta_at(X);
  const double n2 = ddot(L, L);
  double c = 1.0 / th;
  if (family == ViscoplasticFamily::Quartic) c += beta * n2;
  if (family == ViscoplasticFamily::Huber) c += beta / std::sqrt(1.0 + n2);
  return c * L;
}

Mat3 ViscoplasticPotential::second_derivative(const Vec3& X, const Mat3& L, const Mat3& E) const {
  const double th = theta_at(X);
  const double n2 = ddot(L, L);
  const double le = ddot(L, E);
  Mat3 r = (1.0 / th) * E;
  if (family == ViscoplasticFamily::Quartic) r += beta * (n2 * E + (2.0 * le) * L);
  if (family == ViscoplasticFamily::Huber) {
    const double s = std::sqrt(1.0 + n2);
    r += beta * ((1.0 / s) * E - (le / (s * s * s)) * L);
  }
  return r;
}

namespace {

// Orthonormal basis of the trace-free 3x3 matrices.
const std::array<Mat3, 8>& dev_basis() {
  static const std::array<Mat3, 8> basis = [] {
    std::array<Mat3, 8> b{};
    const double r2 = 1.0 / std::sqrt(2.0);
    const double r6 = 1.0 / std::sqrt(6.0);
    b[0] = Mat3::diag(r2, -r2, 0.0);
    b[1] = Mat3::diag(r6, r6, -2.0 * r6);
    int k = 2;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (i != j) {
          Mat3 m;
          m(i, j) = 1.0;
          b[static_cast<std::size_t>(k++)] = m;
        }
    return b;
  }();
  return basis;
}

}  // namespace

Mat3 conjugate_rate(const ViscoplasticPotential& zeta, const Vec3& X, const Mat3& M) {
  const double th = zeta.theta_at(X);
  if (th <= 0.0) return {};
  if (zeta.family == ViscoplasticFamily::Quadratic || zeta.beta == 0.0) return th * dev(M);

  const auto& B = dev_basis();
  const Mat3 Md = dev(M);
  const double tol = 1e-13 * (1.0 + frob(Md));
  Mat3 L = th * Md;
  auto residual = [&](const Mat3& l) { return zeta.derivative(X, l) - Md; };
  Mat3 r = residual(L);
  double rn = frob(r);
  for (int it = 0; it < zeta.max_newton && rn > tol; ++it) {
    Eigen::Matrix<double, 8, 8> Jm;
    Eigen::Matrix<double, 8, 1> rv;
    for (std::size_t j = 0; j < 8; ++j) {
      const Mat3 col = zeta.second_derivative(X, L, B[j]);
      for (std::size_t i = 0; i < 8; ++i) Jm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ddot(B[i], col);
      rv(static_cast<Eigen::Index>(j)) = ddot(B[j], r);
    }
    const Eigen::Matrix<double, 8, 1> dx = Jm.ldlt().solve(-rv);
    Mat3 dL;
    for (std::size_t i = 0; i < 8; ++i) dL += dx(static_cast<Eigen::Index>(i)) * B[i];
    double step = 1.0;
    for (int ls = 0; ls < 40; ++ls) {
      const Mat3 trial = L + step * dL;
      const Mat3 rt = residual(trial);
      const double rtn = frob(rt);
      if (rtn < (1.0 - 1e-4 * step) * rn || ls == 39) {
        L = trial;
        r = rt;
        rn = rtn;
        break;
      }
      step *= 0.5;
    }
  }
  if (!(rn <= 1e-10 * (1.0 + frob(Md)))) {
    throw ConvergenceError("conjugate_rate: Newton did not converge", rn);
  }
  return L;
}

GrowthBounds sample_growth_bounds(const ViscoplasticPotential& zeta, const Vec3& X, int samples,
                                  unsigned seed, double max_norm) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  GrowthBounds g{kInf, 0.0};
  const auto& B = dev_basis();
  for (int s = 0; s < samples; ++s) {
    Mat3 L;
    for (const auto& b : B) L += nd(rng) * b;
    const double scale = max_norm * std::pow(ud(rng), 3.0) / frob(L);
    L *= scale;
    const double n2 = ddot(L, L);
    if (n2 == 0.0) continue;
    const double z = zeta.value(X, L);
    g.coercivity = std::min(g.coercivity, z / n2);
    g.growth = std::max(g.growth, z / (1.0 + n2));
  }
  return g;
}

Mat3 truncated_plastic_rate(const StoredEnergy& phi, const ViscoplasticPotential& zeta,
                            double lambda, const Vec3& X, const Mat3& F, double alpha) {
  const TruncatedEnergy e = evaluate_truncated(phi, lambda, X, F, alpha);
  if (e.branch == Branch::Dead) return {};
  return conjugate_rate(zeta, X, dev(transpose(F) * e.dF));
}

double plastic_rate_bound(const StoredEnergy& phi, const ViscoplasticPotential& zeta,
                          double lambda) {
  // Bounds over |F| <= 2 lambda, det F >= 1/(2 lambda), alpha in [0,1].
  const double nmax = 2.0 * lambda;
  const double jmin = 0.5 / lambda;
  const double jmax = std::pow(nmax * nmax / 3.0, 1.5);
  const double cofmax = nmax * nmax / std::sqrt(3.0);
  const double mu = phi.mu * max_factor(phi.shape, phi.mu_contrast);
  const double kappa = phi.kappa * max_factor(phi.shape, phi.kappa_contrast);
  const double gc = std::abs(phi.gc) * max_factor(phi.shape, phi.gc_contrast);
  const double jm23 = std::pow(jmin, -2.0 / 3.0);

  const double iso = 0.5 * mu * (jm23 * nmax * nmax + 3.0);
  const double diso = mu * jm23 * (nmax + nmax * nmax * cofmax / (3.0 * jmin));
  double vol_arg = std::max(jmax, 1.0);
  double extra = gc;
  if (phi.family == EnergyFamily::NeoHookeanSwelling) {
    vol_arg += std::abs(phi.swelling);
    const double a = 1.0 + std::abs(phi.a0) + std::abs(phi.a0_jump);
    extra = 0.5 * std::abs(phi.chem) * a * a;
  }
  const double vol_scale = phi.family == EnergyFamily::BrokenFixture ? 1.01 : 1.0;
  const double phimax = iso + 0.5 * kappa * vol_arg * vol_arg + extra;
  const double dphimax = diso + vol_scale * kappa * vol_arg * cofmax;
  const double dtrunc = dphimax + phimax * (3.0 * lambda * cofmax + 1.5 / lambda);
  const double theta = zeta.theta * max_factor(zeta.shape, zeta.theta_contrast);
  return theta * nmax * dtrunc;
}

// ---------------------------------------------------------------------------

double DamagePotential::conjugate_rate(double drive) const {
  if (mode == DamageMode::Unidirectional) drive = std::min(drive, 0.0);
  return drive / modulus;
}

double DamagePotential::conjugate_rate_derivative(double drive) const {
  if (mode == DamageMode::Unidirectional && drive > 0.0) return 0.0;
  return 1.0 / modulus;
}

double DamagePotential::value(double rate) const {
  if (mode == DamageMode::Unidirectional && rate > 0.0) return kInf;
  return 0.5 * modulus * rate * rate;
}

double damage_rate(const StoredEnergy& phi, const DamagePotential& zeta, double lambda,
                   const Vec3& X, const Mat3& F, double alpha) {
  const TruncatedEnergy e = evaluate_truncated(phi, lambda, X, F, alpha);
  const double drive = zeta.sign == DamageSign::Dissipative ? -e.dalpha : e.dalpha;
  return zeta.conjugate_rate(drive);
}

// ---------------------------------------------------------------------------

double DiffusionLaw::m(const Vec3& X, double alpha) const {
  return mobility * (1.0 + slope * alpha) * shape_factor(shape, X, contrast);
}

double DiffusionLaw::dm_dalpha(const Vec3& X, double) const {
  return mobility * slope * shape_factor(shape, X, contrast);
}

double complementarity_residual(double alpha, double dual) {
  double r = std::max(0.0, -alpha) + std::max(0.0, alpha - 1.0);
  if (dual > 0.0) r += dual * std::abs(1.0 - alpha);
  if (dual < 0.0) r += -dual * std::abs(alpha);
  return r;
}

ChemicalPotential chemical_potential(const StoredEnergy& phi, double lambda, const Vec3& X,
                                     const Mat3& F, double alpha, double dual) {
  if (alpha < -1e-12 || alpha > 1.0 + 1e-12) {
    throw BoundViolation("chemical_potential: alpha = " + std::to_string(alpha) +
                         " outside [0,1]");
  }
  const double d = evaluate_truncated(phi, lambda, X, F, alpha).dalpha;
  return {d + dual, complementarity_residual(alpha, dual)};
}

Mat3 MaterialModel::stokes_stress(const Mat3& gv) const {
  const double t = tr(gv);
  return viscosity.shear * (gv + transpose(gv)) +
         ((viscosity.bulk - 2.0 * viscosity.shear / 3.0) * t) * Mat3::identity();
}

}  // namespace evd
