#include "evd/stepper.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "evd/errors.hpp"

namespace evd {

namespace {

std::string num(double x) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 6);
  return std::string(buf, r.ptr);
}


using Triplets = std::vector<Eigen::Triplet<double>>;
using ColMat = Eigen::SparseMatrix<double, Eigen::ColMajor>;

SpMat diag(const Eigen::VectorXd& x) {
  SpMat m(x.size(), x.size());
  Triplets t;
  t.reserve(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) t.emplace_back(i, i, x[i]);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

SpMat identity(Eigen::Index n) { return diag(Eigen::VectorXd::Ones(n)); }

void add_block(Triplets& t, const SpMat& m, Eigen::Index r0, Eigen::Index c0) {
  for (Eigen::Index k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
}

bool solve_sparse(const SpMat& J, const Eigen::VectorXd& rhs, Eigen::VectorXd& x) {
  ColMat A(J);
  A.makeCompressed();
  Eigen::SparseLU<ColMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) return false;
  x = lu.solve(rhs);
  return lu.info() == Eigen::Success && x.allFinite();
}

double inf_norm(const Eigen::VectorXd& x) { return x.size() ? x.cwiseAbs().maxCoeff() : 0.0; }

// SparseLU that keeps its symbolic analysis while the sparsity pattern repeats.
class ReusableLU {
 public:
  bool solve(const SpMat& J, const Eigen::VectorXd& rhs, Eigen::VectorXd& x) {
    ColMat A(J);
    A.makeCompressed();
    const bool same = analyzed_ && A.rows() == rows_ && A.nonZeros() == nnz_ &&
                      std::equal(A.outerIndexPtr(), A.outerIndexPtr() + A.outerSize() + 1,
                                 outer_.begin()) &&
                      std::equal(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros(), inner_.begin());
    if (!same) {
      lu_.analyzePattern(A);
      rows_ = A.rows();
      nnz_ = A.nonZeros();
      outer_.assign(A.outerIndexPtr(), A.outerIndexPtr() + A.outerSize() + 1);
      inner_.assign(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros());
      analyzed_ = true;
    }
    lu_.factorize(A);
    if (lu_.info() != Eigen::Success) return false;
    x = lu_.solve(rhs);
    return lu_.info() == Eigen::Success && x.allFinite();
  }

 private:
  Eigen::SparseLU<ColMat, Eigen::COLAMDOrdering<int>> lu_;
  bool analyzed_ = false;
  Eigen::Index rows_ = 0, nnz_ = 0;
  std::vector<int> outer_, inner_;
};

// Block-diagonal preconditioner with dense m x m blocks along the diagonal.
class BlockJacobi {
 public:
  BlockJacobi() = default;
  void set_block_size(int m) { m_ = m; }

  template <class Mat>
  BlockJacobi& analyzePattern(const Mat&) { return *this; }
  template <class Mat>
  BlockJacobi& factorize(const Mat& A) {
    const Eigen::Index nb = A.rows() / m_;
    lu_.clear();
    lu_.reserve(static_cast<std::size_t>(nb));
    Eigen::MatrixXd B(m_, m_);
    for (Eigen::Index b = 0; b < nb; ++b) {
      B.setZero();
      for (int i = 0; i < m_; ++i) {
        const Eigen::Index row = b * m_ + i;
        for (typename Mat::InnerIterator it(A, row); it; ++it) {
          const Eigen::Index col = it.col() - b * m_;
          if (col >= 0 && col < m_) B(i, col) += it.value();
        }
      }
      lu_.emplace_back(B);
    }
    return *this;
  }
  template <class Mat>
  BlockJacobi& compute(const Mat& A) { return factorize(A); }

  template <class Rhs>
  Eigen::VectorXd solve(const Rhs& b) const {
    Eigen::VectorXd x(b.size());
    for (std::size_t k = 0; k < lu_.size(); ++k) {
      const auto off = static_cast<Eigen::Index>(k) * m_;
      x.segment(off, m_) = lu_[k].solve(b.segment(off, m_));
    }
    return x;
  }
  Eigen::ComputationInfo info() const { return Eigen::Success; }

 private:
  int m_ = 1;
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lu_;
};

// Iterative solve for block-dominant systems; falls back to a direct solve.
bool solve_block_dominant(const SpMat& J, int m, const Eigen::VectorXd& rhs, Eigen::VectorXd& x) {
  Eigen::BiCGSTAB<SpMat, BlockJacobi> it;
  it.preconditioner().set_block_size(m);
  it.setTolerance(1e-15);
  it.setMaxIterations(200);
  it.compute(J);
  x = it.solve(rhs);
  if (it.info() == Eigen::Success && x.allFinite()) {
    const double res = inf_norm(J * x - rhs);
    if (res <= 1e-14 * std::max(1.0, inf_norm(rhs))) return true;
  }
  return solve_sparse(J, rhs, x);
}

// ---------------------------------------------------------------------------
// Cell-local source with advection:
//   R(u) = u - u_old + tau (s_c(u_c) + (A (x) I_m) u) = 0,
// u laid out cell-major (c * m + k).

using SourceFn = std::function<void(Eigen::Index, const double*, double*)>;
using JacobianFn = std::function<void(Eigen::Index, const double*, double*)>;

struct LocalResult {
  int iterations = 0;
  double residual = 0.0;
};

class LocalSystem {
 public:
  LocalSystem(int m, Eigen::Index n, const SpMat* A, SourceFn s, JacobianFn j)
      : m_(m), n_(n), A_(A && A->nonZeros() > 0 ? A : nullptr), s_(std::move(s)), j_(std::move(j)) {}

  Eigen::VectorXd residual(const Eigen::VectorXd& u, const Eigen::VectorXd& u_old,
                           double tau) const {
    Eigen::VectorXd r = u - u_old;
    std::vector<double> s(static_cast<std::size_t>(m_));
    for (Eigen::Index c = 0; c < n_; ++c) {
      s_(c, u.data() + c * m_, s.data());
      for (int k = 0; k < m_; ++k) r[c * m_ + k] += tau * s[static_cast<std::size_t>(k)];
    }
    if (A_) {
      Eigen::Map<const Eigen::MatrixXd> U(u.data(), m_, n_);
      const Eigen::MatrixXd Y = U * A_->transpose();
      r += tau * Eigen::Map<const Eigen::VectorXd>(Y.data(), Y.size());
    }
    return r;
  }

  void local_jacobian(Eigen::Index c, const double* u, Eigen::MatrixXd& J) const {
    J.resize(m_, m_);
    if (j_) {
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Jr(m_, m_);
      j_(c, u, Jr.data());
      J = Jr;
      return;
    }
    std::vector<double> up(u, u + m_), sp(static_cast<std::size_t>(m_)), sm(static_cast<std::size_t>(m_));
    for (int k = 0; k < m_; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(u[k]));
      up[static_cast<std::size_t>(k)] = u[k] + h;
      s_(c, up.data(), sp.data());
      up[static_cast<std::size_t>(k)] = u[k] - h;
      s_(c, up.data(), sm.data());
      up[static_cast<std::size_t>(k)] = u[k];
      for (int i = 0; i < m_; ++i)
        J(i, k) = (sp[static_cast<std::size_t>(i)] - sm[static_cast<std::size_t>(i)]) / (2.0 * h);
    }
  }

  bool newton_direction(const Eigen::VectorXd& u, const Eigen::VectorXd& r, double tau,
                        Eigen::VectorXd& du) const {
    du.resize(u.size());
    Eigen::MatrixXd Jc;
    if (!A_) {
      for (Eigen::Index c = 0; c < n_; ++c) {
        local_jacobian(c, u.data() + c * m_, Jc);
        const Eigen::MatrixXd K = Eigen::MatrixXd::Identity(m_, m_) + tau * Jc;
        du.segment(c * m_, m_) = K.partialPivLu().solve(-r.segment(c * m_, m_));
      }
      return du.allFinite();
    }
    Triplets t;
    t.reserve(static_cast<std::size_t>(n_ * m_ * m_ + A_->nonZeros() * m_));
    for (Eigen::Index c = 0; c < n_; ++c) {
      local_jacobian(c, u.data() + c * m_, Jc);
      for (int i = 0; i < m_; ++i)
        for (int k = 0; k < m_; ++k)
          t.emplace_back(c * m_ + i, c * m_ + k, (i == k ? 1.0 : 0.0) + tau * Jc(i, k));
    }
    for (Eigen::Index row = 0; row < A_->outerSize(); ++row)
      for (SpMat::InnerIterator it(*A_, row); it; ++it)
        for (int k = 0; k < m_; ++k) t.emplace_back(it.row() * m_ + k, it.col() * m_ + k, tau * it.value());
    SpMat J(n_ * m_, n_ * m_);
    J.setFromTriplets(t.begin(), t.end());
    return solve_block_dominant(J, m_, -r, du);
  }

  LocalResult solve(const Eigen::VectorXd& u_old, double tau, Eigen::VectorXd& u, double tol,
                    int max_it, const char* what) const {
    const double scale = std::max(1.0, inf_norm(u_old));
    const double target = tol * scale;
    LocalResult res;
    Eigen::VectorXd r = residual(u, u_old, tau);
    double rn = inf_norm(r);
    Eigen::VectorXd du;
    while (rn > target && res.iterations < max_it) {
      ++res.iterations;
      if (!newton_direction(u, r, tau, du)) break;
      double step = 1.0;
      bool accepted = false;
      const double r2 = r.norm();
      for (int ls = 0; ls < 30; ++ls) {
        const Eigen::VectorXd trial = u + step * du;
        const Eigen::VectorXd rt = residual(trial, u_old, tau);
        if (rt.allFinite() && rt.norm() <= (1.0 - 1e-4 * step) * r2) {
          u = trial;
          r = rt;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      rn = inf_norm(r);
      if (!accepted) break;
    }
    res.residual = rn;
    if (!(rn <= 100.0 * target)) {
      throw StepFailure(std::string(what) + ": Newton did not converge (residual " +
                            num(rn) + ")",
                        rn);
    }
    return res;
  }

 private:
  int m_;
  Eigen::Index n_;
  const SpMat* A_;
  SourceFn s_;
  JacobianFn j_;
};

// Fe source: -(grad v) F + F L_lambda(X, F, alpha).
void fe_source(const MaterialModel& mat, double lambda, const Mat3& G, const Vec3& X, double alpha,
               const double* u, double* s) {
  Mat3 F;
  for (std::size_t k = 0; k < 9; ++k) F[k] = u[k];
  Mat3 out = -(G * F);
  if (mat.viscoplastic.theta > 0.0) {
    out += F * truncated_plastic_rate(mat.energy, mat.viscoplastic, lambda, X, F, alpha);
  }
  for (std::size_t k = 0; k < 9; ++k) s[k] = out[k];
}

double damage_source(const MaterialModel& mat, double lambda, const Vec3& X, const Mat3& F,
                     double alpha) {
  return -damage_rate(mat.energy, mat.damage, lambda, X, F, alpha);
}

double damage_source_derivative(const MaterialModel& mat, double lambda, const Vec3& X,
                                const Mat3& F, double alpha) {
  const TruncatedEnergy e = evaluate_truncated(mat.energy, lambda, X, F, alpha);
  const bool dissipative = mat.damage.sign == DamageSign::Dissipative;
  const double drive = dissipative ? -e.dalpha : e.dalpha;
  const double ddrive = dissipative ? -e.d2alpha : e.d2alpha;
  return -mat.damage.conjugate_rate_derivative(drive) * ddrive;
}

Eigen::VectorXd pack(const MatField& F) {
  const Eigen::Index n = F[0].size();
  Eigen::VectorXd u(9 * n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (std::size_t k = 0; k < 9; ++k) u[9 * c + static_cast<Eigen::Index>(k)] = F[k][c];
  return u;
}

MatField unpack(const Eigen::VectorXd& u, Eigen::Index n) {
  MatField F;
  for (auto& f : F) f.resize(n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (std::size_t k = 0; k < 9; ++k) F[k][c] = u[9 * c + static_cast<Eigen::Index>(k)];
  return F;
}

}  // namespace

// ---------------------------------------------------------------------------

Stepper::Stepper(Problem problem, StepConfig cfg)
    : pb_(std::move(problem)), cfg_(cfg), ops_(pb_.grid) {
  if (!(pb_.lambda > std::sqrt(3.0))) throw ConfigError("truncation level must exceed sqrt(3)");
  if (pb_.material.viscosity.exponent < 2.0) throw ConfigError("hyperviscosity exponent must be >= 2");
}

void Stepper::check_tau_admissible(const State& s, double tau) const {
  const double mass = sum(pb_.grid, s.rho);
  const double g = std::max({std::abs(pb_.gravity[0]), std::abs(pb_.gravity[1]),
                             std::abs(pb_.gravity[2])});
  if (!(tau > 0.0)) throw ConfigError("time step must be positive");
  if (!(tau * mass * g < 1.0)) {
    std::ostringstream os;
    os << "time step not admissible: tau * M * |g| = " << tau * mass * g << " >= 1";
    throw ConfigError(os.str());
  }
}

// ---------------------------------------------------------------------------
// Mass-momentum

namespace {

struct MomentumCtx {
  const Problem& pb;
  const Operators& ops;
  const State& prev;
  double tau;
  Regularization reg;
  MatField Tlag;
  int d;
  Eigen::Index n;
};

MatField lagged_stress(const Problem& pb, const State& prev) {
  MatField T = constant_mat(pb.grid, Mat3{});
  for (Eigen::Index c = 0; c < pb.grid.cells(); ++c) {
    set_mat(T, c, truncated_stress(pb.material.energy, pb.lambda, vec_at(prev.xi, c),
                                   mat_at(prev.Fe, c), prev.alpha[c]));
  }
  return T;
}

Eigen::VectorXd momentum_residual(const MomentumCtx& x, const ScalarField& rho,
                                  const VectorField& v) {
  const Operators& ops = x.ops;
  const MaterialModel& mat = x.pb.material;
  const int d = x.d;
  const Eigen::Index n = x.n;
  const double tau = x.tau;
  const double eta = mat.viscosity.shear;
  const double lam = mat.viscosity.bulk - 2.0 * eta / 3.0;
  const double p = mat.viscosity.exponent;

  Eigen::VectorXd R((1 + d) * n);
  std::array<ScalarField, 3> flux;  // rho v_a
  ScalarField divflux = ScalarField::Zero(n);
  for (int a = 0; a < d; ++a) {
    flux[static_cast<std::size_t>(a)] = rho.cwiseProduct(v[static_cast<std::size_t>(a)]);
    divflux += ops.dv(a, a) * flux[static_cast<std::size_t>(a)];
  }
  ScalarField Rr = (rho - x.prev.rho) / tau + divflux;

  std::array<ScalarField, 3> grho;
  ScalarField g2 = ScalarField::Zero(n);
  if (x.reg.delta > 0.0) {
    for (int a = 0; a < d; ++a) {
      grho[static_cast<std::size_t>(a)] = ops.d(a, false) * rho;
      g2 += grho[static_cast<std::size_t>(a)].cwiseAbs2();
    }
    for (int a = 0; a < d; ++a) {
      Rr += ops.d(a, false).transpose() *
            (x.reg.delta * g2.cwiseProduct(grho[static_cast<std::size_t>(a)]));
    }
  }
  R.segment(0, n) = Rr;

  MatField gv;
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 3; ++a) {
      const auto k = static_cast<std::size_t>(3 * i + a);
      gv[k] = (i < d && a < d) ? ScalarField(ops.dv(i, a) * v[static_cast<std::size_t>(i)])
                               : ScalarField::Zero(n);
    }
  ScalarField trace = ScalarField::Zero(n);
  for (int a = 0; a < d; ++a) trace += gv[static_cast<std::size_t>(4 * a)];

  const VectorField hyper = ops.hyperstress_apply(v, mat.viscosity.hyper, p);
  ScalarField vnorm2 = ScalarField::Zero(n);
  for (const auto& c : v) vnorm2 += c.cwiseAbs2();

  for (int i = 0; i < d; ++i) {
    const auto si = static_cast<std::size_t>(i);
    ScalarField Ri = (rho.cwiseProduct(v[si]) - x.prev.p[si]) / tau;
    ScalarField conv_a = ScalarField::Zero(n), conv_b = ScalarField::Zero(n);
    for (int a = 0; a < d; ++a) {
      const auto sa = static_cast<std::size_t>(a);
      const auto k = static_cast<std::size_t>(3 * i + a);
      ScalarField S = x.Tlag[k] + eta * (gv[k] + gv[static_cast<std::size_t>(3 * a + i)]);
      if (a == i) S += lam * trace;
      Ri += ops.dv(i, a).transpose() * S;
      conv_a -= ops.dv(i, a).transpose() * flux[sa].cwiseProduct(v[si]);
      conv_b += flux[sa].cwiseProduct(gv[k]);
    }
    Ri += 0.5 * (conv_a + conv_b + v[si].cwiseProduct(divflux));
    Ri += hyper[si];
    Ri -= x.pb.gravity[si] * rho;
    if (x.reg.eps > 0.0) {
      if (p == 2.0) {
        Ri += x.reg.eps * v[si];
      } else {
        Ri += x.reg.eps * vnorm2.array().pow(0.5 * (p - 2.0)).matrix().cwiseProduct(v[si]);
      }
    }
    if (x.reg.delta > 0.0) {
      ScalarField q = ScalarField::Zero(n);
      for (int a = 0; a < d; ++a)
        q += gv[static_cast<std::size_t>(3 * i + a)].cwiseProduct(grho[static_cast<std::size_t>(a)]);
      Ri += x.reg.delta * g2.cwiseProduct(q);
    }
    R.segment((1 + i) * n, n) = Ri;
  }
  return R;
}

SpMat momentum_jacobian(const MomentumCtx& x, const ScalarField& rho, const VectorField& v) {
  const Operators& ops = x.ops;
  const MaterialModel& mat = x.pb.material;
  const int d = x.d;
  const Eigen::Index n = x.n;
  const double tau = x.tau;
  const double eta = mat.viscosity.shear;
  const double lam = mat.viscosity.bulk - 2.0 * eta / 3.0;
  const double p = mat.viscosity.exponent;
  const double nu = mat.viscosity.hyper;

  Triplets t;
  std::array<ScalarField, 3> flux;
  ScalarField divflux = ScalarField::Zero(n);
  for (int a = 0; a < d; ++a) {
    flux[static_cast<std::size_t>(a)] = rho.cwiseProduct(v[static_cast<std::size_t>(a)]);
    divflux += ops.dv(a, a) * flux[static_cast<std::size_t>(a)];
  }
  std::array<ScalarField, 3> grho;
  ScalarField g2 = ScalarField::Zero(n);
  if (x.reg.delta > 0.0) {
    for (int a = 0; a < d; ++a) {
      grho[static_cast<std::size_t>(a)] = ops.d(a, false) * rho;
      g2 += grho[static_cast<std::size_t>(a)].cwiseAbs2();
    }
  }
  auto gvf = [&](int i, int a) -> ScalarField {
    return ops.dv(i, a) * v[static_cast<std::size_t>(i)];
  };

  // continuity
  {
    SpMat Jrr = identity(n) / tau;
    for (int a = 0; a < d; ++a) Jrr += SpMat(ops.dv(a, a) * diag(v[static_cast<std::size_t>(a)]));
    if (x.reg.delta > 0.0) {
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          ScalarField w = 2.0 * x.reg.delta *
                          grho[static_cast<std::size_t>(a)].cwiseProduct(grho[static_cast<std::size_t>(b)]);
          if (a == b) w += x.reg.delta * g2;
          Jrr += SpMat(ops.d(a, false).transpose() * diag(w) * ops.d(b, false));
        }
    }
    add_block(t, Jrr, 0, 0);
    for (int a = 0; a < d; ++a) add_block(t, SpMat(ops.dv(a, a) * diag(rho)), 0, (1 + a) * n);
  }

  // hyperviscosity for p != 2
  Ten3Field H;
  ScalarField hn2;
  if (p != 2.0) {
    H = ops.hessian(v);
    hn2 = ScalarField::Zero(n);
    for (const auto& c : H) hn2 += c.cwiseAbs2();
  }

  ScalarField vnorm2 = ScalarField::Zero(n);
  for (const auto& c : v) vnorm2 += c.cwiseAbs2();

  for (int i = 0; i < d; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const Eigen::Index r0 = (1 + i) * n;
    // d/d rho
    {
      ScalarField dconv = ScalarField::Zero(n);
      SpMat Jir = diag(v[si] / tau);
      SpMat c1(n, n), c3(n, n);
      for (int a = 0; a < d; ++a) {
        const auto sa = static_cast<std::size_t>(a);
        c1 -= SpMat(ops.dv(i, a).transpose() * diag(v[sa].cwiseProduct(v[si])));
        dconv += v[sa].cwiseProduct(gvf(i, a));
        c3 += SpMat(ops.dv(a, a) * diag(v[sa]));
      }
      Jir += 0.5 * (c1 + diag(dconv) + SpMat(diag(v[si]) * c3));
      Jir -= x.pb.gravity[si] * identity(n);
      if (x.reg.delta > 0.0) {
        ScalarField q = ScalarField::Zero(n);
        for (int a = 0; a < d; ++a) q += gvf(i, a).cwiseProduct(grho[static_cast<std::size_t>(a)]);
        for (int b = 0; b < d; ++b) {
          const auto sb = static_cast<std::size_t>(b);
          const ScalarField w = x.reg.delta * (g2.cwiseProduct(gvf(i, b)) + 2.0 * grho[sb].cwiseProduct(q));
          Jir += SpMat(diag(w) * ops.d(b, false));
        }
      }
      add_block(t, Jir, r0, 0);
    }
    for (int j = 0; j < d; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      SpMat Jij(n, n);
      if (i == j) {
        Jij += diag(rho / tau);
        for (int a = 0; a < d; ++a) {
          const auto sa = static_cast<std::size_t>(a);
          Jij += eta * SpMat(ops.dv(i, a).transpose() * ops.dv(i, a));
          Jij += 0.5 * (SpMat(-(ops.dv(i, a).transpose() * diag(flux[sa]))) +
                        SpMat(diag(flux[sa]) * ops.dv(i, a)));
        }
        Jij += 0.5 * diag(divflux);
        if (p == 2.0) {
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) Jij += nu * SpMat(ops.hv(i, a, b).transpose() * ops.hv(i, a, b));
        } else {
          const ScalarField w = nu * hn2.array().pow(0.5 * (p - 2.0)).matrix();
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
              Jij += SpMat(ops.hv(i, a, b).transpose() * diag(w) * ops.hv(i, a, b));
        }
        if (x.reg.delta > 0.0) {
          for (int a = 0; a < d; ++a)
            Jij += SpMat(diag(x.reg.delta * g2.cwiseProduct(grho[static_cast<std::size_t>(a)])) *
                         ops.dv(i, a));
        }
      }
      Jij += eta * SpMat(ops.dv(i, j).transpose() * ops.dv(j, i));
      Jij += lam * SpMat(ops.dv(i, i).transpose() * ops.dv(j, j));
      Jij += 0.5 * (SpMat(-(ops.dv(i, j).transpose() * diag(rho.cwiseProduct(v[si])))) +
                    diag(rho.cwiseProduct(gvf(i, j))) +
                    SpMat(diag(v[si]) * ops.dv(j, j) * diag(rho)));
      if (p != 2.0) {
        ScalarField coef = ScalarField::Zero(n);
        for (Eigen::Index c = 0; c < n; ++c)
          if (hn2[c] > 0.0) coef[c] = nu * (p - 2.0) * std::pow(hn2[c], 0.5 * (p - 4.0));
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) {
            const ScalarField& hi = H[static_cast<std::size_t>(9 * i + 3 * a + b)];
            for (int c2 = 0; c2 < d; ++c2)
              for (int e = 0; e < d; ++e) {
                const ScalarField& hj = H[static_cast<std::size_t>(9 * j + 3 * c2 + e)];
                const ScalarField w = coef.cwiseProduct(hi).cwiseProduct(hj);
                Jij += SpMat(ops.hv(i, a, b).transpose() * diag(w) * ops.hv(j, c2, e));
              }
          }
      }
      if (x.reg.eps > 0.0) {
        if (p == 2.0) {
          if (i == j) Jij += x.reg.eps * identity(n);
        } else {
          ScalarField w = ScalarField::Zero(n);
          for (Eigen::Index c = 0; c < n; ++c) {
            const double vn2 = vnorm2[c];
            if (vn2 == 0.0) continue;
            w[c] = (p - 2.0) * std::pow(vn2, 0.5 * (p - 4.0)) * v[si][c] * v[sj][c];
            if (i == j) w[c] += std::pow(vn2, 0.5 * (p - 2.0));
          }
          Jij += x.reg.eps * diag(w);
        }
      }
      add_block(t, Jij, r0, (1 + j) * n);
    }
  }
  SpMat J((1 + d) * n, (1 + d) * n);
  J.setFromTriplets(t.begin(), t.end());
  return J;
}

}  // namespace

Eigen::VectorXd Stepper::mass_momentum_residual(const State& prev, double tau,
                                                const Regularization& reg,
                                                const State& next) const {
  const MomentumCtx x{pb_, ops_, prev, tau, reg, lagged_stress(pb_, prev), pb_.grid.dim,
                      pb_.grid.cells()};
  return momentum_residual(x, next.rho, next.v);
}

bool Stepper::newton_mass_momentum(const State& prev, double tau, const Regularization& reg,
                                   State& next, MomentumReport& rep) const {
  const MomentumCtx x{pb_, ops_, prev, tau, reg, lagged_stress(pb_, prev), pb_.grid.dim,
                      pb_.grid.cells()};
  const int d = x.d;
  const Eigen::Index n = x.n;
  ScalarField rho = next.rho;
  VectorField v = next.v;
  Eigen::VectorXd R = momentum_residual(x, rho, v);
  const double target = cfg_.momentum_atol + cfg_.momentum_rtol * inf_norm(R);
  double rn = inf_norm(R);
  int it = 0;
  ReusableLU lu;
  while (rn > target) {
    if (it >= cfg_.max_newton || !R.allFinite()) {
      rep.residual = rn;
      return false;
    }
    ++it;
    const SpMat J = momentum_jacobian(x, rho, v);
    Eigen::VectorXd dx;
    if (!lu.solve(J, -R, dx)) {
      rep.residual = rn;
      return false;
    }
    double step = 1.0;
    bool accepted = false;
    const double r2 = R.norm();
    for (int ls = 0; ls < 30; ++ls) {
      ScalarField rt = rho + step * dx.segment(0, n);
      if (rt.minCoeff() > 0.0) {
        VectorField vt = v;
        for (int i = 0; i < d; ++i) vt[static_cast<std::size_t>(i)] += step * dx.segment((1 + i) * n, n);
        const Eigen::VectorXd Rt = momentum_residual(x, rt, vt);
        if (Rt.allFinite() && Rt.norm() <= (1.0 - 1e-4 * step) * r2) {
          rho = std::move(rt);
          v = std::move(vt);
          R = Rt;
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    rn = inf_norm(R);
    if (!accepted && rn > target) {
      rep.residual = rn;
      return false;
    }
  }
  rep.iterations += it;
  rep.residual = rn;
  next.rho = rho;
  next.v = v;
  return true;
}

MomentumReport Stepper::solve_mass_momentum(const State& prev, double tau, State& next) const {
  MomentumReport rep;
  next.rho = prev.rho;
  next.v = prev.v;
  bool ok = false;
  if (!cfg_.force_continuation) {
    ok = newton_mass_momentum(prev, tau, Regularization{}, next, rep);
  }
  if (!ok) {
    rep.continuation = true;
    next.rho = prev.rho;
    next.v = prev.v;
    double f = 1.0;
    for (int s = 0; s <= cfg_.continuation_stages; ++s) {
      const bool last = s == cfg_.continuation_stages;
      const Regularization reg = last ? Regularization{}
                                      : Regularization{cfg_.eps0 * f, cfg_.delta0 * f};
      MomentumReport stage;
      if (!newton_mass_momentum(prev, tau, reg, next, stage)) {
        throw StepFailure("mass-momentum solve failed in continuation stage " +
                              std::to_string(s) + " (residual " + num(stage.residual) +
                              ")",
                          stage.residual);
      }
      rep.continuation_iterations += stage.iterations;
      rep.residual = stage.residual;
      f *= cfg_.continuation_factor;
    }
  }
  if (!(next.rho.minCoeff() > 0.0)) {
    throw StepFailure("mass-momentum solve produced non-positive density", rep.residual);
  }
  for (int i = pb_.grid.dim; i < 3; ++i) next.v[static_cast<std::size_t>(i)].setZero();
  sync_momentum(next);
  return rep;
}

// ---------------------------------------------------------------------------

VectorField Stepper::update_xi(const VectorField& xi_prev, const VectorField& v,
                               double tau) const {
  const Advection adv = ops_.advection(v, cfg_.scheme, GhostRule::MaterialCoordinate);
  if (adv.A.nonZeros() == 0) return xi_prev;
  const Eigen::Index n = pb_.grid.cells();
  ColMat M(identity(n) + tau * adv.A);
  M.makeCompressed();
  Eigen::SparseLU<ColMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(M);
  if (lu.info() != Eigen::Success) throw StepFailure("update_xi: factorization failed", 0.0);
  VectorField xi;
  for (std::size_t i = 0; i < 3; ++i) {
    const Eigen::VectorXd rhs = xi_prev[i] - tau * adv.offset[i];
    xi[i] = lu.solve(rhs);
    const double res = inf_norm(M * xi[i] - rhs);
    if (!(res <= cfg_.transport_tol * std::max(1.0, inf_norm(rhs)) * 100.0)) {
      throw StepFailure("update_xi: linear solve inaccurate", res);
    }
  }
  return xi;
}

MatField Stepper::update_Fe(const MatField& Fe_prev, const VectorField& v, const VectorField& xi,
                            const ScalarField& alpha, double tau, StepReport* rep) const {
  const Eigen::Index n = pb_.grid.cells();
  const MatField gv = ops_.grad(v);
  const Advection adv = ops_.advection(v, cfg_.scheme, GhostRule::ZeroGradient);
  const MaterialModel& mat = pb_.material;
  const double lambda = pb_.lambda;
  LocalSystem sys(
      9, n, &adv.A,
      [&](Eigen::Index c, const double* u, double* s) {
        fe_source(mat, lambda, mat_at(gv, c), vec_at(xi, c), alpha[c], u, s);
      },
      {});
  const Eigen::VectorXd u_old = pack(Fe_prev);
  Eigen::VectorXd u = u_old;
  const LocalResult r = sys.solve(u_old, tau, u, cfg_.local_tol, cfg_.max_local_newton, "update_Fe");
  MatField Fe = unpack(u, n);
  double min_det = std::numeric_limits<double>::infinity();
  bool trunc = false;
  for (Eigen::Index c = 0; c < n; ++c) {
    const Mat3 F = mat_at(Fe, c);
    min_det = std::min(min_det, det(F));
    if (classify(F, lambda) != Branch::Untruncated) trunc = true;
  }
  if (!(min_det > 0.0)) {
    throw InvariantViolation("update_Fe: det Fe = " + num(min_det) + " <= 0");
  }
  if (rep) {
    rep->fe_iterations += r.iterations;
    rep->fe_residual = std::max(rep->fe_residual, r.residual);
    rep->truncation_warning = rep->truncation_warning || trunc;
  }
  return Fe;
}

ScalarField Stepper::update_damage(const ScalarField& alpha_prev, const MatField& Fe,
                                   const VectorField& xi, const VectorField& v, double tau,
                                   StepReport* rep) const {
  const Eigen::Index n = pb_.grid.cells();
  const Advection adv = ops_.advection(v, cfg_.scheme, GhostRule::ZeroGradient);
  const MaterialModel& mat = pb_.material;
  const double lambda = pb_.lambda;
  LocalSystem sys(
      1, n, &adv.A,
      [&](Eigen::Index c, const double* u, double* s) {
        s[0] = damage_source(mat, lambda, vec_at(xi, c), mat_at(Fe, c), u[0]);
      },
      [&](Eigen::Index c, const double* u, double* J) {
        J[0] = damage_source_derivative(mat, lambda, vec_at(xi, c), mat_at(Fe, c), u[0]);
      });
  Eigen::VectorXd a = alpha_prev;
  const LocalResult r = sys.solve(alpha_prev, tau, a, cfg_.local_tol, cfg_.max_local_newton,
                                  "update_damage");
  if (rep) {
    rep->alpha_iterations += r.iterations;
    rep->alpha_residual = std::max(rep->alpha_residual, r.residual);
    rep->bound_violation = std::max({rep->bound_violation, -a.minCoeff(), a.maxCoeff() - 1.0, 0.0});
  }
  return a;
}

void Stepper::update_fe_damage(const MatField& Fe_prev, const ScalarField& alpha_prev,
                               const VectorField& v, const VectorField& xi, double tau,
                               MatField& Fe, ScalarField& alpha, StepReport* rep) const {
  const Eigen::Index n = pb_.grid.cells();
  const MatField gv = ops_.grad(v);
  const Advection adv = ops_.advection(v, cfg_.scheme, GhostRule::ZeroGradient);
  const MaterialModel& mat = pb_.material;
  const double lambda = pb_.lambda;
  LocalSystem sys(
      10, n, &adv.A,
      [&](Eigen::Index c, const double* u, double* s) {
        fe_source(mat, lambda, mat_at(gv, c), vec_at(xi, c), u[9], u, s);
        Mat3 F;
        for (std::size_t k = 0; k < 9; ++k) F[k] = u[k];
        s[9] = damage_source(mat, lambda, vec_at(xi, c), F, u[9]);
      },
      {});
  Eigen::VectorXd u_old(10 * n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (std::size_t k = 0; k < 9; ++k) u_old[10 * c + static_cast<Eigen::Index>(k)] = Fe_prev[k][c];
    u_old[10 * c + 9] = alpha_prev[c];
  }
  Eigen::VectorXd u = u_old;
  const LocalResult r = sys.solve(u_old, tau, u, cfg_.local_tol, cfg_.max_local_newton,
                                  "update_fe_damage");
  Fe = constant_mat(pb_.grid, Mat3{});
  alpha.resize(n);
  double min_det = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < n; ++c) {
    for (std::size_t k = 0; k < 9; ++k) Fe[k][c] = u[10 * c + static_cast<Eigen::Index>(k)];
    alpha[c] = u[10 * c + 9];
    min_det = std::min(min_det, det(mat_at(Fe, c)));
  }
  if (!(min_det > 0.0)) {
    throw InvariantViolation("update_fe_damage: det Fe = " + num(min_det) + " <= 0");
  }
  if (rep) {
    rep->fe_iterations += r.iterations;
    rep->fe_residual = std::max(rep->fe_residual, r.residual);
    rep->alpha_iterations += r.iterations;
    rep->bound_violation = std::max({rep->bound_violation, -alpha.minCoeff(), alpha.maxCoeff() - 1.0, 0.0});
  }
}

// ---------------------------------------------------------------------------
// Diffusion: primal-dual active set on (alpha, mu).

ScalarField Stepper::update_diffusion(const ScalarField& alpha_prev, const MatField& Fe,
                                      const VectorField& xi, const VectorField& v, double tau,
                                      ScalarField& mu, ScalarField& dual, StepReport* rep) const {
  const Eigen::Index n = pb_.grid.cells();
  const MaterialModel& mat = pb_.material;
  const double lambda = pb_.lambda;
  const Advection adv = ops_.advection(v, cfg_.scheme, GhostRule::ZeroGradient);

  auto phi_a = [&](Eigen::Index c, double a) {
    return evaluate_truncated(mat.energy, lambda, vec_at(xi, c), mat_at(Fe, c), a);
  };

  ScalarField alpha = alpha_prev;
  if (mu.size() != n) mu = ScalarField::Zero(n);
  std::vector<int> set(static_cast<std::size_t>(n), 0);
  if (dual.size() == n) {
    for (Eigen::Index c = 0; c < n; ++c) set[static_cast<std::size_t>(c)] = dual[c] > 0 ? 1 : (dual[c] < 0 ? -1 : 0);
  }
  for (Eigen::Index c = 0; c < n; ++c) mu[c] = phi_a(c, alpha[c]).dalpha;

  auto residual = [&](const ScalarField& a, const ScalarField& m_) {
    Eigen::VectorXd R(2 * n);
    ScalarField mob(n);
    for (Eigen::Index c = 0; c < n; ++c) mob[c] = mat.diffusion.m(vec_at(xi, c), a[c]);
    R.segment(0, n) = a - alpha_prev + tau * (adv.A * a - ops_.face_laplacian(mob) * m_);
    for (Eigen::Index c = 0; c < n; ++c) {
      const int s = set[static_cast<std::size_t>(c)];
      R[n + c] = s == 0 ? m_[c] - phi_a(c, a[c]).dalpha : (s > 0 ? a[c] - 1.0 : a[c]);
    }
    return R;
  };

  const double tol = cfg_.local_tol * std::max(1.0, inf_norm(alpha_prev));
  int total = 0;
  bool converged = false;
  double rn = 0.0;
  for (int outer = 0; outer < cfg_.max_active_set && !converged; ++outer) {
    // Newton for the current active set.
    Eigen::VectorXd R = residual(alpha, mu);
    rn = inf_norm(R);
    for (int it = 0; it < cfg_.max_local_newton && rn > tol; ++it) {
      ++total;
      ScalarField mob(n), dmob(n);
      for (Eigen::Index c = 0; c < n; ++c) {
        mob[c] = mat.diffusion.m(vec_at(xi, c), alpha[c]);
        dmob[c] = mat.diffusion.dm_dalpha(vec_at(xi, c), alpha[c]);
      }
      Triplets t;
      const SpMat Jaa = identity(n) + tau * adv.A - tau * ops_.face_laplacian_dm(dmob, mu);
      const SpMat Jam = -tau * ops_.face_laplacian(mob);
      add_block(t, Jaa, 0, 0);
      add_block(t, Jam, 0, n);
      for (Eigen::Index c = 0; c < n; ++c) {
        const int s = set[static_cast<std::size_t>(c)];
        if (s == 0) {
          t.emplace_back(n + c, c, -phi_a(c, alpha[c]).d2alpha);
          t.emplace_back(n + c, n + c, 1.0);
        } else {
          t.emplace_back(n + c, c, 1.0);
        }
      }
      SpMat J(2 * n, 2 * n);
      J.setFromTriplets(t.begin(), t.end());
      Eigen::VectorXd dx;
      if (!solve_sparse(J, -R, dx)) break;
      double step = 1.0;
      const double r2 = R.norm();
      bool accepted = false;
      for (int ls = 0; ls < 30; ++ls) {
        const ScalarField at = alpha + step * dx.segment(0, n);
        const ScalarField mt = mu + step * dx.segment(n, n);
        const Eigen::VectorXd Rt = residual(at, mt);
        if (Rt.allFinite() && Rt.norm() <= (1.0 - 1e-4 * step) * r2) {
          alpha = at;
          mu = mt;
          R = Rt;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      rn = inf_norm(R);
      if (!accepted) break;
    }
    if (rn > 100.0 * tol) break;
    // Update the active set from the multiplier.
    bool changed = false;
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto sc = static_cast<std::size_t>(c);
      const double lam = set[sc] == 0 ? 0.0 : mu[c] - phi_a(c, alpha[c]).dalpha;
      const int s = lam + (alpha[c] - 1.0) > 0.0 ? 1 : (lam + alpha[c] < 0.0 ? -1 : 0);
      if (s != set[sc]) {
        set[sc] = s;
        changed = true;
      }
    }
    converged = !changed;
  }
  if (!converged) {
    throw StepFailure("update_diffusion: active-set iteration did not converge", rn);
  }
  dual = ScalarField::Zero(n);
  double comp = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    if (set[static_cast<std::size_t>(c)] != 0) dual[c] = mu[c] - phi_a(c, alpha[c]).dalpha;
    comp = std::max(comp, complementarity_residual(alpha[c], dual[c]));
  }
  if (rep) {
    rep->alpha_iterations += total;
    rep->alpha_residual = std::max(rep->alpha_residual, rn);
    rep->complementarity = std::max(rep->complementarity, comp);
    rep->bound_violation = std::max({rep->bound_violation, -alpha.minCoeff(), alpha.maxCoeff() - 1.0, 0.0});
  }
  return alpha;
}

// ---------------------------------------------------------------------------

State Stepper::step(const State& prev, double tau, StepReport& rep) const {
  rep.tau = tau;
  State next = prev;
  if (cfg_.momentum == MomentumMode::Dynamic) {
    rep.momentum = solve_mass_momentum(prev, tau, next);
  } else {
    sync_momentum(next);
  }
  next.xi = update_xi(prev.xi, next.v, tau);
  const MaterialModel& mat = pb_.material;
  if (mat.internal == InternalVariable::Damage && cfg_.coupling == Coupling::Monolithic) {
    update_fe_damage(prev.Fe, prev.alpha, next.v, next.xi, tau, next.Fe, next.alpha, &rep);
  } else {
    next.Fe = update_Fe(prev.Fe, next.v, next.xi, prev.alpha, tau, &rep);
    if (mat.internal == InternalVariable::Damage) {
      next.alpha = update_damage(prev.alpha, next.Fe, next.xi, next.v, tau, &rep);
      next.Fe = update_Fe(prev.Fe, next.v, next.xi, next.alpha, tau, &rep);
    } else if (mat.internal == InternalVariable::Diffusion) {
      next.alpha = update_diffusion(prev.alpha, next.Fe, next.xi, next.v, tau, next.mu, next.dual, &rep);
    }
  }
  next.t = prev.t + tau;
  rep.t = next.t;
  rep.monitors = monitors(next, pb_.lambda);
  if (!(rep.monitors.min_rho > 0.0)) throw InvariantViolation("density lost positivity");
  if (!(rep.monitors.min_det_fe > 0.0)) throw InvariantViolation("det Fe lost positivity");
  const double mass = sum(pb_.grid, prev.rho);
  const double g = std::max({std::abs(pb_.gravity[0]), std::abs(pb_.gravity[1]), std::abs(pb_.gravity[2])});
  rep.tau_admissible = tau * mass * g < 1.0;
  rep.div_admissible = tau * inf_norm(ops_.div(next.v)) <= 1.0 / std::sqrt(2.0);
  rep.cfl = 0.0;
  for (Eigen::Index c = 0; c < pb_.grid.cells(); ++c) {
    double courant = 0.0;
    for (int a = 0; a < pb_.grid.dim; ++a)
      courant += std::abs(next.v[static_cast<std::size_t>(a)][c]) / pb_.grid.h[static_cast<std::size_t>(a)];
    rep.cfl = std::max(rep.cfl, tau * courant);
  }
  return next;
}

RunResult run(const Stepper& stepper, const State& initial, double T, const StepSink& sink) {
  const StepConfig& cfg = stepper.config();
  stepper.check_tau_admissible(initial, cfg.tau);
  RunResult res;
  State cur = initial;
  double tau = cfg.tau;
  double cumulative = 0.0;
  int retries = 0;
  const double eps = 1e-12 * std::max(1.0, T);
  while (cur.t < T - eps) {
    const double h = (T - cur.t <= tau * (1.0 + 1e-9)) ? T - cur.t : tau;
    StepReport rep;
    rep.step = res.steps + 1;
    rep.retries = retries;
    State next;
    try {
      next = stepper.step(cur, h, rep);
    } catch (const StepFailure& e) {
      ++retries;
      if (retries > cfg.max_retries) {
        res.final = cur;
        res.failed_step = res.steps + 1;
        res.message = "step " + std::to_string(res.failed_step) + ": retry budget exhausted: " + e.what();
        return res;
      }
      tau *= 0.5;
      continue;
    } catch (const InvariantViolation& e) {
      res.final = cur;
      res.failed_step = res.steps + 1;
      res.message = "step " + std::to_string(res.failed_step) + ": " + e.what();
      return res;
    }
    retries = 0;
    const EnergyLedger L = ledger(stepper.problem(), stepper.ops(), cur, next, h, cumulative);
    cumulative = L.residual;
    ++res.steps;
    if (sink) sink(next, rep, L);
    res.ledger.push_back(L);
    cur = std::move(next);
  }
  res.final = std::move(cur);
  res.completed = true;
  return res;
}

// ---------------------------------------------------------------------------

std::vector<Sample0D> kinematic_drive(const Drive0D& drive, const MaterialModel& material,
                                      double lambda, const StepConfig& cfg) {
  std::vector<Sample0D> out;
  auto sample = [&](double t, const Mat3& F, double a) {
    const TruncatedEnergy e = evaluate_truncated(material.energy, lambda, drive.X, F, a);
    double plastic = 0.0;
    if (material.viscoplastic.theta > 0.0 && e.branch != Branch::Dead) {
      const Mat3 M = dev(transpose(F) * e.dF);
      plastic = ddot(conjugate_rate(material.viscoplastic, drive.X, M), M);
    }
    out.push_back({t, F, a, e.phi, plastic});
  };
  Mat3 F = drive.Fe0;
  double a = drive.alpha0;
  sample(0.0, F, a);
  const bool damage = material.internal == InternalVariable::Damage;
  const auto steps = static_cast<long>(std::llround(drive.T / drive.tau));
  for (long k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) * drive.tau;
    const Mat3 G = drive.grad_v(t);
    auto solve_fe = [&](double alpha) {
      LocalSystem sys(
          9, 1, nullptr,
          [&](Eigen::Index, const double* u, double* s) {
            fe_source(material, lambda, G, drive.X, alpha, u, s);
          },
          {});
      Eigen::VectorXd u_old(9), u(9);
      for (std::size_t i = 0; i < 9; ++i) u_old[static_cast<Eigen::Index>(i)] = F[i];
      u = u_old;
      sys.solve(u_old, drive.tau, u, cfg.local_tol, cfg.max_local_newton, "kinematic_drive");
      Mat3 Fn;
      for (std::size_t i = 0; i < 9; ++i) Fn[i] = u[static_cast<Eigen::Index>(i)];
      return Fn;
    };
    if (damage && cfg.coupling == Coupling::Monolithic) {
      LocalSystem sys(
          10, 1, nullptr,
          [&](Eigen::Index, const double* u, double* s) {
            fe_source(material, lambda, G, drive.X, u[9], u, s);
            Mat3 Fu;
            for (std::size_t i = 0; i < 9; ++i) Fu[i] = u[i];
            s[9] = damage_source(material, lambda, drive.X, Fu, u[9]);
          },
          {});
      Eigen::VectorXd u_old(10);
      for (std::size_t i = 0; i < 9; ++i) u_old[static_cast<Eigen::Index>(i)] = F[i];
      u_old[9] = a;
      Eigen::VectorXd u = u_old;
      sys.solve(u_old, drive.tau, u, cfg.local_tol, cfg.max_local_newton, "kinematic_drive");
      for (std::size_t i = 0; i < 9; ++i) F[i] = u[static_cast<Eigen::Index>(i)];
      a = u[9];
    } else {
      Mat3 Fn = solve_fe(a);
      if (damage) {
        LocalSystem sys(
            1, 1, nullptr,
            [&](Eigen::Index, const double* u, double* s) {
              s[0] = damage_source(material, lambda, drive.X, Fn, u[0]);
            },
            [&](Eigen::Index, const double* u, double* J) {
              J[0] = damage_source_derivative(material, lambda, drive.X, Fn, u[0]);
            });
        Eigen::VectorXd u_old(1), u(1);
        u_old[0] = a;
        u = u_old;
        sys.solve(u_old, drive.tau, u, cfg.local_tol, cfg.max_local_newton, "kinematic_drive");
        a = u[0];
        Fn = solve_fe(a);
      }
      F = Fn;
    }
    if (!(det(F) > 0.0)) {
      throw InvariantViolation("kinematic_drive: det Fe <= 0 at t = " + num(t));
    }
    sample(t, F, a);
  }
  return out;
}

}  // namespace evd
