#include "evd/oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "evd/errors.hpp"

namespace evd {

namespace {

std::string num(double x) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 6);
  return std::string(buf, r.ptr);
}


struct Y {
  Mat3 F;
  double a;
};

Y rhs(const Oracle0DConfig& cfg, double t, const Y& y) {
  const MaterialModel& m = cfg.material;
  Y d;
  d.F = cfg.grad_v(t) * y.F;
  if (m.viscoplastic.theta > 0.0) {
    d.F -= y.F * truncated_plastic_rate(m.energy, m.viscoplastic, cfg.lambda, cfg.X, y.F, y.a);
  }
  d.a = m.internal == InternalVariable::Damage
            ? damage_rate(m.energy, m.damage, cfg.lambda, cfg.X, y.F, y.a)
            : 0.0;
  return d;
}

Y axpy(const Y& y, double s, const Y& d) { return {y.F + s * d.F, y.a + s * d.a}; }

OracleSample make_sample(const Oracle0DConfig& cfg, double t, const Y& y) {
  return {t, y.F, y.a, truncate_energy(cfg.material.energy, cfg.lambda, cfg.X, y.F, y.a), det(y.F)};
}

long steps_for(double T, double tau) { return std::lround(T / tau); }

}  // namespace

std::vector<OracleSample> integrate_rk4(const Oracle0DConfig& cfg) {
  const double h = cfg.tau_fine;
  const long n = steps_for(cfg.T, h);
  const long every = cfg.output_interval > 0.0 ? std::max(1L, std::lround(cfg.output_interval / h)) : 1;
  std::vector<OracleSample> out;
  Y y{cfg.Fe0, cfg.alpha0};
  out.push_back(make_sample(cfg, 0.0, y));
  for (long k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * h;
    const Y k1 = rhs(cfg, t, y);
    const Y k2 = rhs(cfg, t + 0.5 * h, axpy(y, 0.5 * h, k1));
    const Y k3 = rhs(cfg, t + 0.5 * h, axpy(y, 0.5 * h, k2));
    const Y k4 = rhs(cfg, t + h, axpy(y, h, k3));
    y.F += (h / 6.0) * (k1.F + 2.0 * k2.F + 2.0 * k3.F + k4.F);
    y.a += (h / 6.0) * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a);
    if (!(det(y.F) > 0.0)) {
      throw InvariantViolation("integrate_0d_reference: det Fe reached 0 at t = " +
                               num(t + h));
    }
    if ((k + 1) % every == 0 || k + 1 == n) {
      out.push_back(make_sample(cfg, static_cast<double>(k + 1) * h, y));
    }
  }
  return out;
}

OracleTrajectory integrate_0d_reference(const Oracle0DConfig& cfg) {
  OracleTrajectory tr;
  tr.samples = integrate_rk4(cfg);
  Oracle0DConfig half = cfg;
  half.tau_fine = 0.5 * cfg.tau_fine;
  const auto fine = integrate_rk4(half);
  const OracleSample& a = tr.samples.back();
  const OracleSample& b = fine.back();
  double d = std::abs(a.alpha - b.alpha);
  for (std::size_t k = 0; k < 9; ++k) d = std::max(d, std::abs(a.Fe[k] - b.Fe[k]));
  tr.self_consistency = d;
  return tr;
}

// ---------------------------------------------------------------------------

namespace {

// Dense Newton with forward-difference Jacobian for G(u) = 0.
template <int N, class Fn>
Eigen::Matrix<double, N, 1> dense_newton(Fn G, Eigen::Matrix<double, N, 1> u, const char* what) {
  using Vec = Eigen::Matrix<double, N, 1>;
  using Mat = Eigen::Matrix<double, N, N>;
  Vec r = G(u);
  for (int it = 0; it < 60 && r.template lpNorm<Eigen::Infinity>() > 1e-14; ++it) {
    Mat J;
    for (int k = 0; k < N; ++k) {
      const double h = 1e-7 * std::max(1.0, std::abs(u[k]));
      Vec up = u;
      up[k] += h;
      J.col(k) = (G(up) - r) / h;
    }
    const Vec du = J.fullPivLu().solve(-r);
    double s = 1.0;
    for (int ls = 0; ls < 40; ++ls) {
      const Vec rt = G(u + s * du);
      if (rt.allFinite() && rt.norm() < r.norm()) break;
      s *= 0.5;
    }
    u += s * du;
    r = G(u);
  }
  if (!(r.template lpNorm<Eigen::Infinity>() <= 1e-12)) {
    throw ConvergenceError(what, r.template lpNorm<Eigen::Infinity>());
  }
  return u;
}

Mat3 be_fe(const Oracle0DConfig& cfg, const Mat3& G, const Mat3& F0, double a, double tau) {
  const MaterialModel& m = cfg.material;
  auto res = [&](const Eigen::Matrix<double, 9, 1>& u) {
    Mat3 F;
    for (int k = 0; k < 9; ++k) F[static_cast<std::size_t>(k)] = u[k];
    Mat3 r = F - F0 - tau * (G * F);
    if (m.viscoplastic.theta > 0.0)
      r += tau * (F * truncated_plastic_rate(m.energy, m.viscoplastic, cfg.lambda, cfg.X, F, a));
    Eigen::Matrix<double, 9, 1> out;
    for (int k = 0; k < 9; ++k) out[k] = r[static_cast<std::size_t>(k)];
    return out;
  };
  Eigen::Matrix<double, 9, 1> u;
  for (int k = 0; k < 9; ++k) u[k] = F0[static_cast<std::size_t>(k)];
  u = dense_newton<9>(res, u, "backward-Euler oracle: Fe");
  Mat3 F;
  for (int k = 0; k < 9; ++k) F[static_cast<std::size_t>(k)] = u[k];
  return F;
}

double be_alpha(const Oracle0DConfig& cfg, const Mat3& F, double a0, double tau) {
  const MaterialModel& m = cfg.material;
  auto g = [&](double a) {
    return a - a0 - tau * damage_rate(m.energy, m.damage, cfg.lambda, cfg.X, F, a);
  };
  // g is increasing in a; bracket and bisect, then polish with secant steps.
  double lo = a0 - 1.0, hi = a0 + 1.0;
  while (g(lo) > 0.0) lo -= 1.0;
  while (g(hi) < 0.0) hi += 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<OracleSample> integrate_0d_backward_euler(const Oracle0DConfig& cfg, double tau,
                                                      Coupling coupling) {
  const MaterialModel& m = cfg.material;
  const bool damage = m.internal == InternalVariable::Damage;
  std::vector<OracleSample> out;
  Y y{cfg.Fe0, cfg.alpha0};
  out.push_back(make_sample(cfg, 0.0, y));
  const long n = steps_for(cfg.T, tau);
  for (long k = 1; k <= n; ++k) {
    const double t = static_cast<double>(k) * tau;
    const Mat3 G = cfg.grad_v(t);
    if (damage && coupling == Coupling::Monolithic) {
      auto res = [&](const Eigen::Matrix<double, 10, 1>& u) {
        Mat3 F;
        for (int i = 0; i < 9; ++i) F[static_cast<std::size_t>(i)] = u[i];
        const double a = u[9];
        Mat3 r = F - y.F - tau * (G * F);
        if (m.viscoplastic.theta > 0.0)
          r += tau * (F * truncated_plastic_rate(m.energy, m.viscoplastic, cfg.lambda, cfg.X, F, a));
        Eigen::Matrix<double, 10, 1> o;
        for (int i = 0; i < 9; ++i) o[i] = r[static_cast<std::size_t>(i)];
        o[9] = a - y.a - tau * damage_rate(m.energy, m.damage, cfg.lambda, cfg.X, F, a);
        return o;
      };
      Eigen::Matrix<double, 10, 1> u;
      for (int i = 0; i < 9; ++i) u[i] = y.F[static_cast<std::size_t>(i)];
      u[9] = y.a;
      u = dense_newton<10>(res, u, "backward-Euler oracle: monolithic");
      for (int i = 0; i < 9; ++i) y.F[static_cast<std::size_t>(i)] = u[i];
      y.a = u[9];
    } else {
      Mat3 F = be_fe(cfg, G, y.F, y.a, tau);
      if (damage) {
        const double a = be_alpha(cfg, F, y.a, tau);
        F = be_fe(cfg, G, y.F, a, tau);
        y.a = a;
      }
      y.F = F;
    }
    out.push_back(make_sample(cfg, t, y));
  }
  return out;
}

// ---------------------------------------------------------------------------

Mat3 sample_in_branch(Branch b, double lambda, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N;
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  auto rot = [&] {
    Vec3 axis{{N(rng), N(rng), N(rng)}};
    return rotation(axis, uni(0.0, 2.0 * std::numbers::pi));
  };
  for (int attempt = 0; attempt < 10000; ++attempt) {
    double a = 1.0, bb = 1.0, c = 1.0;
    switch (b) {
      case Branch::Untruncated:
        a = uni(0.75, 1.35);
        bb = uni(0.75, 1.35);
        c = uni(0.75, 1.35);
        break;
      case Branch::BlendDet: {
        const double J = uni(0.5 / lambda, 1.0 / lambda);
        a = uni(0.6, 1.4);
        bb = uni(0.6, 1.4);
        c = J / (a * bb);
        break;
      }
      case Branch::BlendNorm: {
        const double n = uni(lambda, 2.0 * lambda);
        bb = uni(0.6, 1.4);
        c = uni(0.6, 1.4);
        const double a2 = n * n - bb * bb - c * c;
        if (a2 <= 0.0) continue;
        a = std::sqrt(a2);
        break;
      }
      case Branch::BlendBoth: {
        const double n = uni(lambda, 2.0 * lambda);
        const double J = uni(0.5 / lambda, 1.0 / lambda);
        bb = uni(0.3, 1.0);
        const double a2 = n * n - bb * bb;
        if (a2 <= 0.0) continue;
        a = std::sqrt(a2);
        c = J / (a * bb);
        break;
      }
      case Branch::Dead:
        if (U(rng) < 0.5) {
          const double n = uni(2.0 * lambda, 3.0 * lambda);
          bb = uni(0.6, 1.4);
          c = uni(0.6, 1.4);
          a = std::sqrt(std::max(n * n - bb * bb - c * c, 0.0));
        } else {
          const double J = uni(0.05 / lambda, 0.5 / lambda);
          a = uni(0.6, 1.4);
          bb = uni(0.6, 1.4);
          c = J / (a * bb);
        }
        break;
    }
    const Mat3 F = rot() * Mat3::diag(a, bb, c) * rot();
    if (classify(F, lambda) == b) return F;
  }
  throw ConfigError("sample_in_branch: could not reach branch " + std::string(to_string(b)));
}

FdReport fd_stress_check(const StoredEnergy& phi, double lambda, int samples, unsigned seed,
                         double h) {
  FdReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double floor = 1e-6 * (std::abs(phi.mu) + std::abs(phi.kappa));
  const int per = std::max(1, samples / 5);
  for (int bi = 0; bi < 5; ++bi) {
    const auto br = static_cast<Branch>(bi);
    for (int s = 0; s < per; ++s) {
      const Mat3 F = sample_in_branch(br, lambda, rng);
      const double a = 0.2 + 0.8 * U(rng);
      const Vec3 X{{U(rng), U(rng), U(rng)}};
      const TruncatedEnergy e = evaluate_truncated(phi, lambda, X, F, a);
      // Step scaled to the distance over which det F changes appreciably, with
      // one Richardson extrapolation of the central difference.
      const Mat3 C = cof(F);
      double cmax = 0.0;
      for (double x : C.a) cmax = std::max(cmax, std::abs(x));
      const double hF = h * std::min(1.0, std::abs(det(F)) / std::max(cmax, 1e-300));
      auto central = [&](std::size_t k, double step) {
        Mat3 Fp = F, Fm = F;
        Fp[k] += step;
        Fm[k] -= step;
        return (truncate_energy(phi, lambda, X, Fp, a) - truncate_energy(phi, lambda, X, Fm, a)) /
               (2.0 * step);
      };
      Mat3 fd;
      for (std::size_t k = 0; k < 9; ++k)
        fd[k] = (4.0 * central(k, 0.5 * hF) - central(k, hF)) / 3.0;
      auto maxabs = [](const Mat3& m) {
        double r = 0.0;
        for (double x : m.a) r = std::max(r, std::abs(x));
        return r;
      };
      const double eF = maxabs(e.dF - fd) / std::max(maxabs(fd), floor);
      // T : E = d/ds phi_lambda((I + sE) F) + phi_lambda tr E, with a dimensionless step.
      const Mat3 T_an = truncated_stress(phi, lambda, X, F, a);
      auto central_T = [&](std::size_t i, std::size_t j, double step) {
        Mat3 E;
        E(i, j) = step;
        const double p = truncate_energy(phi, lambda, X, (Mat3::identity() + E) * F, a);
        const double m = truncate_energy(phi, lambda, X, (Mat3::identity() - E) * F, a);
        return (p - m) / (2.0 * step);
      };
      const double sT = 10.0 * h;
      Mat3 T_fd;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
          T_fd(i, j) = (4.0 * central_T(i, j, 0.5 * sT) - central_T(i, j, sT)) / 3.0 +
                       (i == j ? e.phi : 0.0);
      const double eT = maxabs(T_an - T_fd) / std::max(maxabs(T_fd), floor);
      auto central_a = [&](double step) {
        return (truncate_energy(phi, lambda, X, F, a + step) -
                truncate_energy(phi, lambda, X, F, a - step)) /
               (2.0 * step);
      };
      const double da_fd = (4.0 * central_a(0.5 * h) - central_a(h)) / 3.0;
      const double eA = std::abs(e.dalpha - da_fd) / std::max(std::abs(da_fd), floor);
      rep.max_error_dF = std::max(rep.max_error_dF, eF);
      rep.max_error_stress = std::max(rep.max_error_stress, eT);
      rep.max_error_dalpha = std::max(rep.max_error_dalpha, eA);
      const double worst = std::max({eF, eT, eA});
      rep.per_branch[static_cast<std::size_t>(bi)]++;
      rep.per_branch_error[static_cast<std::size_t>(bi)] =
          std::max(rep.per_branch_error[static_cast<std::size_t>(bi)], worst);
      if (worst > rep.max_error) {
        rep.max_error = worst;
        rep.worst_branch = br;
        rep.worst_F = F;
      }
    }
  }
  return rep;
}

SeamReport seam_continuity(const StoredEnergy& phi, double lambda, int samples, unsigned seed) {
  SeamReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N;
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  auto rot = [&] { return rotation(Vec3{{N(rng), N(rng), N(rng)}}, uni(0.0, 2.0 * std::numbers::pi)); };

  struct Seam {
    const char* name;
    bool norm;
    double at;
  };
  const Seam seams[] = {{"|F| = lambda", true, lambda},
                        {"|F| = 2 lambda", true, 2.0 * lambda},
                        {"det F = 1/lambda", false, 1.0 / lambda},
                        {"det F = 1/(2 lambda)", false, 0.5 / lambda}};
  for (const Seam& seam : seams) {
    for (int s = 0; s < samples; ++s) {
      const double a = uni(0.8, 1.25), b = uni(0.8, 1.25);
      const Mat3 Q = rot(), R = rot();
      // Path F(t) crossing the seam at t = 0, and dF/dt.
      std::function<Mat3(double)> path, rate;
      if (seam.norm) {
        Mat3 V = Q * Mat3::diag(a, b, uni(0.8, 1.25)) * R;
        V *= 1.0 / frob(V);
        path = [=](double t) { return (seam.at + t) * V; };
        rate = [=](double) { return V; };
      } else {
        const Mat3 V = Q * Mat3::diag(a, b, 1.0 / (a * b)) * R;
        path = [=](double t) { return std::cbrt(seam.at + t) * V; };
        rate = [=](double t) { return (1.0 / 3.0) * std::pow(seam.at + t, -2.0 / 3.0) * V; };
      }
      const double alpha = uni(0.2, 1.0);
      const Vec3 X{{U(rng), U(rng), U(rng)}};
      const double d = 1e-8 * seam.at;
      auto val = [&](double t) { return truncate_energy(phi, lambda, X, path(t), alpha); };
      auto slope = [&](double t) {
        return ddot(evaluate_truncated(phi, lambda, X, path(t), alpha).dF, rate(t));
      };
      const Mat3 F0 = path(0.0);
      const double scale = std::abs(phi.value(X, F0, alpha)) +
                           seam.at * std::abs(ddot(phi.dF(X, F0, alpha), rate(0.0))) +
                           1e-12 * (std::abs(phi.mu) + std::abs(phi.kappa));
      const double sp = slope(d), sm = slope(-d);
      const double jump = std::abs(val(d) - val(-d) - d * (sp + sm)) / scale;
      // The blends are C^1 but not C^2, so the one-sided slopes differ by O(d);
      // extrapolate that difference to d = 0.
      const double gap = 2.0 * (slope(0.5 * d) - slope(-0.5 * d)) - (sp - sm);
      const double kink = seam.at * std::abs(gap) / scale;
      rep.max_jump = std::max(rep.max_jump, jump);
      rep.max_kink = std::max(rep.max_kink, kink);
      if (std::max(jump, kink) >= rep.worst) {
        rep.worst = std::max(jump, kink);
        rep.worst_seam = seam.name;
      }
    }
  }
  return rep;
}

double conjugate_roundtrip(const ViscoplasticPotential& zeta, int samples, unsigned seed) {
  if (zeta.theta <= 0.0) return 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N;
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    Mat3 M;
    for (auto& x : M.a) x = N(rng);
    M = dev(M);
    M *= std::pow(10.0, -3.0 + 4.0 * U(rng)) / frob(M);
    const Vec3 X{{U(rng), U(rng), U(rng)}};
    const Mat3 L = conjugate_rate(zeta, X, M);
    worst = std::max(worst, frob(zeta.derivative(X, L) - M));
  }
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

struct Exact {
  double rho;
  Vec3 grad_rho;
  Vec3 v;
  Mat3 grad_v;  // (i, a) = d_a v_i
  Mat3 Fe;
  std::array<Mat3, 3> dFe;  // derivative of Fe along each axis
};

Exact exact_at(const ManufacturedFields& f, const Vec3& x) {
  Exact e;
  const double sr = std::sin(dot(f.k_rho, x)), cr = std::cos(dot(f.k_rho, x));
  e.rho = f.rho0 + f.rho1 * sr;
  e.grad_rho = (f.rho1 * cr) * f.k_rho;
  for (std::size_t i = 0; i < 3; ++i) {
    const double th = dot(f.k_v, x) + f.phase[i];
    e.v[i] = f.A[i] * std::sin(th);
    for (std::size_t a = 0; a < 3; ++a) e.grad_v(i, a) = f.A[i] * std::cos(th) * f.k_v[a];
  }
  const double sf = std::sin(dot(f.k_F, x)), cf = std::cos(dot(f.k_F, x));
  e.Fe = Mat3::identity() + sf * f.B;
  for (std::size_t a = 0; a < 3; ++a) e.dFe[a] = (cf * f.k_F[a]) * f.B;
  return e;
}

}  // namespace

State manufactured_state(const ManufacturedFields& f, const Grid& grid) {
  State s = uniform_state(grid, 1.0, Mat3::identity(), 1.0);
  for (Eigen::Index c = 0; c < grid.cells(); ++c) {
    const Exact e = exact_at(f, grid.center(c));
    s.rho[c] = e.rho;
    set_vec(s.v, c, e.v);
    set_mat(s.Fe, c, e.Fe);
  }
  sync_momentum(s);
  return s;
}

ManufacturedResidual manufactured_residual(const ManufacturedFields& f, const MaterialModel& mat,
                                           double lambda, const Grid& grid, double tau,
                                           const Vec3& gravity) {
  if (grid.bc != Boundary::Periodic) throw ConfigError("manufactured_residual: periodic grid required");
  if (mat.viscosity.exponent != 2.0) throw ConfigError("manufactured_residual: p = 2 required");
  Problem pb{grid, mat, lambda, gravity};
  Stepper stepper(pb, StepConfig{});
  const State s = manufactured_state(f, grid);
  const Eigen::VectorXd R = stepper.mass_momentum_residual(s, tau, Regularization{}, s);

  const int d = grid.dim;
  const Eigen::Index n = grid.cells();
  const double eta = mat.viscosity.shear;
  const double lam = mat.viscosity.bulk - 2.0 * eta / 3.0;
  const double nu = mat.viscosity.hyper;
  const double k2 = dot(f.k_v, f.k_v);
  const Vec3 X{};
  ManufacturedResidual out;
  for (Eigen::Index c = 0; c < n; ++c) {
    const Vec3 x = grid.center(c);
    const Exact e = exact_at(f, x);
    double divv = 0.0;
    for (int a = 0; a < d; ++a) divv += e.grad_v(static_cast<std::size_t>(a), static_cast<std::size_t>(a));
    const double cont = dot(e.grad_rho, e.v) + e.rho * divv;
    out.continuity = std::max(out.continuity, std::abs(R[c] - cont));

    // d/dx_a of T(Fe(x)) by central differences in Fe.
    std::array<Mat3, 3> dT{};
    for (int a = 0; a < d; ++a) {
      const double hF = 1e-6;
      const Mat3 Tp = truncated_stress(mat.energy, lambda, X, e.Fe + hF * e.dFe[static_cast<std::size_t>(a)], 1.0);
      const Mat3 Tm = truncated_stress(mat.energy, lambda, X, e.Fe - hF * e.dFe[static_cast<std::size_t>(a)], 1.0);
      dT[static_cast<std::size_t>(a)] = (1.0 / (2.0 * hF)) * (Tp - Tm);
    }
    for (int i = 0; i < d; ++i) {
      const auto si = static_cast<std::size_t>(i);
      double graddiv = 0.0;
      for (int a = 0; a < d; ++a) {
        const auto sa = static_cast<std::size_t>(a);
        graddiv -= f.A[sa] * std::sin(dot(f.k_v, x) + f.phase[sa]) * f.k_v[sa] * f.k_v[si];
      }
      double divS = -eta * k2 * e.v[si] + (eta + lam) * graddiv;
      double conv = (dot(e.grad_rho, e.v) + e.rho * divv) * e.v[si];
      for (int a = 0; a < d; ++a) {
        const auto sa = static_cast<std::size_t>(a);
        divS += dT[sa](si, sa);
        conv += e.rho * e.v[sa] * e.grad_v(si, sa);
      }
      const double exact = -divS + conv + nu * k2 * k2 * e.v[si] - e.rho * gravity[si];
      out.momentum = std::max(out.momentum, std::abs(R[(1 + i) * n + c] - exact));
    }
  }
  return out;
}

}  // namespace evd
