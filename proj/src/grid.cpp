#include "evd/grid.hpp"

#include <cmath>
#include <string>

#include "evd/errors.hpp"

namespace evd {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Neighbour of a cell along an axis. `ghost` marks a reflected slip-wall
// neighbour (its value is taken from the cell itself); `shift` is the affine
// offset the identity map picks up across the seam or wall.
struct Neighbour {
  Eigen::Index index;
  bool ghost;
  double shift;
};

Neighbour neighbour(const Grid& g, std::array<int, 3> m, int axis, int s) {
  const auto a = static_cast<std::size_t>(axis);
  const int n = g.n[a];
  const int idx = m[a] + s;
  if (idx >= 0 && idx < n) {
    m[a] = idx;
    return {g.index(m[0], m[1], m[2]), false, 0.0};
  }
  const Eigen::Index self = g.index(m[0], m[1], m[2]);
  if (g.bc == Boundary::Periodic) {
    m[a] = (idx + n) % n;
    return {g.index(m[0], m[1], m[2]), false, s * g.length(axis)};
  }
  return {self, true, s * g.h[a]};
}

SpMat from_triplets(const Grid& g, const Triplets& t) {
  SpMat m(g.cells(), g.cells());
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

SpMat first_difference(const Grid& g, int axis, bool odd) {
  Triplets t;
  if (!g.active(axis)) return from_triplets(g, t);
  const double c = 0.5 / g.h[static_cast<std::size_t>(axis)];
  for (Eigen::Index i = 0; i < g.cells(); ++i) {
    const auto m = g.multi(i);
    for (int s : {-1, 1}) {
      const Neighbour nb = neighbour(g, m, axis, s);
      const double sign = nb.ghost && odd ? -1.0 : 1.0;
      t.emplace_back(i, nb.index, s * c * sign);
    }
  }
  return from_triplets(g, t);
}

SpMat second_difference(const Grid& g, int axis, bool odd) {
  Triplets t;
  if (!g.active(axis)) return from_triplets(g, t);
  const double h = g.h[static_cast<std::size_t>(axis)];
  const double c = 1.0 / (h * h);
  for (Eigen::Index i = 0; i < g.cells(); ++i) {
    const auto m = g.multi(i);
    t.emplace_back(i, i, -2.0 * c);
    for (int s : {-1, 1}) {
      const Neighbour nb = neighbour(g, m, axis, s);
      const double sign = nb.ghost && odd ? -1.0 : 1.0;
      t.emplace_back(i, nb.index, c * sign);
    }
  }
  return from_triplets(g, t);
}

}  // namespace

Grid Grid::make(int dim, std::array<int, 3> cells, std::array<double, 3> length, Boundary bc) {
  if (dim != 2 && dim != 3) throw ConfigError("grid: dimension must be 2 or 3");
  Grid g;
  g.dim = dim;
  g.bc = bc;
  for (std::size_t a = 0; a < 3; ++a) {
    if (static_cast<int>(a) >= dim) {
      g.n[a] = 1;
      g.h[a] = 1.0;
      continue;
    }
    if (cells[a] < 4) throw ConfigError("grid: at least 4 cells per axis required");
    if (!(length[a] > 0.0)) throw ConfigError("grid: domain length must be positive");
    g.n[a] = cells[a];
    g.h[a] = length[a] / cells[a];
  }
  return g;
}

std::array<int, 3> Grid::multi(Eigen::Index c) const {
  const auto k = static_cast<int>(c % n[2]);
  const auto j = static_cast<int>((c / n[2]) % n[1]);
  const auto i = static_cast<int>(c / (static_cast<Eigen::Index>(n[1]) * n[2]));
  return {i, j, k};
}

Vec3 Grid::center(Eigen::Index c) const {
  const auto m = multi(c);
  Vec3 x;
  for (std::size_t a = 0; a < 3; ++a) {
    if (static_cast<int>(a) < dim) x[a] = (m[a] + 0.5) * h[a];
  }
  return x;
}

ScalarField constant_scalar(const Grid& g, double value) {
  return ScalarField::Constant(g.cells(), value);
}

VectorField constant_vector(const Grid& g, const Vec3& value) {
  VectorField f;
  for (std::size_t i = 0; i < 3; ++i) f[i] = ScalarField::Constant(g.cells(), value[i]);
  return f;
}

MatField constant_mat(const Grid& g, const Mat3& value) {
  MatField f;
  for (std::size_t k = 0; k < 9; ++k) f[k] = ScalarField::Constant(g.cells(), value[k]);
  return f;
}

VectorField identity_coordinates(const Grid& g) {
  VectorField f = constant_vector(g, Vec3{});
  for (Eigen::Index c = 0; c < g.cells(); ++c) set_vec(f, c, g.center(c));
  return f;
}

double sum(const Grid& g, const ScalarField& f) { return f.sum() * g.cell_volume(); }

double inner(const Grid& g, const ScalarField& a, const ScalarField& b) {
  return a.dot(b) * g.cell_volume();
}

double inner(const Grid& g, const VectorField& a, const VectorField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < 3; ++i) s += a[i].dot(b[i]);
  return s * g.cell_volume();
}

double inner(const Grid& g, const MatField& a, const MatField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < 9; ++i) s += a[i].dot(b[i]);
  return s * g.cell_volume();
}

double max_abs(const VectorField& f) {
  double m = 0.0;
  for (const auto& c : f) m = std::max(m, c.size() ? c.cwiseAbs().maxCoeff() : 0.0);
  return m;
}

// ---------------------------------------------------------------------------

Operators::Operators(const Grid& grid) : grid_(grid) {
  for (int a = 0; a < 3; ++a) {
    d_[a][0] = first_difference(grid, a, false);
    d_[a][1] = first_difference(grid, a, true);
  }
  std::array<std::array<SpMat, 2>, 3> d2;
  for (int a = 0; a < 3; ++a) {
    d2[a][0] = second_difference(grid, a, false);
    d2[a][1] = second_difference(grid, a, true);
  }
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        if (a == b) {
          h_[i][a][b] = d2[a][odd(i, a) ? 1 : 0];
        } else if (a < b) {
          h_[i][a][b] = SpMat(dv(i, a) * dv(i, b));
          h_[i][a][b].makeCompressed();
        } else {
          h_[i][a][b] = h_[i][b][a];
        }
      }
}

ScalarField Operators::div(const VectorField& g) const {
  ScalarField r = ScalarField::Zero(grid_.cells());
  for (int a = 0; a < grid_.dim; ++a) r += dv(a, a) * g[static_cast<std::size_t>(a)];
  return r;
}

VectorField Operators::grad(const ScalarField& f) const {
  VectorField r;
  for (int a = 0; a < 3; ++a) r[static_cast<std::size_t>(a)] = d(a, false) * f;
  return r;
}

MatField Operators::grad(const VectorField& v) const {
  MatField r;
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 3; ++a)
      r[static_cast<std::size_t>(3 * i + a)] = dv(i, a) * v[static_cast<std::size_t>(i)];
  return r;
}

VectorField Operators::div(const MatField& T) const {
  VectorField r;
  for (int i = 0; i < 3; ++i) {
    ScalarField s = ScalarField::Zero(grid_.cells());
    for (int a = 0; a < grid_.dim; ++a)
      s -= dv(i, a).transpose() * T[static_cast<std::size_t>(3 * i + a)];
    r[static_cast<std::size_t>(i)] = s;
  }
  return r;
}

Ten3Field Operators::hessian(const VectorField& v) const {
  Ten3Field r;
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        r[static_cast<std::size_t>(9 * i + 3 * a + b)] = hv(i, a, b) * v[static_cast<std::size_t>(i)];
  return r;
}

namespace {

ScalarField hyper_weight(const Ten3Field& H, double nu, double p, Eigen::Index n) {
  ScalarField w = ScalarField::Constant(n, nu);
  if (p == 2.0) return w;
  ScalarField n2 = ScalarField::Zero(n);
  for (const auto& c : H) n2 += c.cwiseAbs2();
  for (Eigen::Index c = 0; c < n; ++c) w[c] = nu * std::pow(n2[c], 0.5 * (p - 2.0));
  return w;
}

}  // namespace

VectorField Operators::hyperstress_apply(const VectorField& v, double nu, double p) const {
  const Ten3Field H = hessian(v);
  const ScalarField w = hyper_weight(H, nu, p, grid_.cells());
  VectorField r;
  for (int i = 0; i < 3; ++i) {
    ScalarField s = ScalarField::Zero(grid_.cells());
    for (int a = 0; a < grid_.dim; ++a)
      for (int b = 0; b < grid_.dim; ++b) {
        const ScalarField q = w.cwiseProduct(H[static_cast<std::size_t>(9 * i + 3 * a + b)]);
        s += hv(i, a, b).transpose() * q;
      }
    r[static_cast<std::size_t>(i)] = s;
  }
  return r;
}

double Operators::hyper_dissipation(const VectorField& v, double nu, double p) const {
  const Ten3Field H = hessian(v);
  ScalarField n2 = ScalarField::Zero(grid_.cells());
  for (const auto& c : H) n2 += c.cwiseAbs2();
  double s = 0.0;
  for (Eigen::Index c = 0; c < grid_.cells(); ++c) s += nu * std::pow(n2[c], 0.5 * p);
  return s * grid_.cell_volume();
}

Advection Operators::advection(const VectorField& v, AdvectionScheme scheme,
                               GhostRule rule) const {
  const Grid& g = grid_;
  Triplets t;
  Advection out;
  for (auto& o : out.offset) o = ScalarField::Zero(g.cells());
  for (Eigen::Index c = 0; c < g.cells(); ++c) {
    const auto m = g.multi(c);
    for (int a = 0; a < g.dim; ++a) {
      const double va = v[static_cast<std::size_t>(a)][c];
      if (va == 0.0) continue;
      const double h = g.h[static_cast<std::size_t>(a)];
      auto add = [&](int s, double coef) {
        const Neighbour nb = neighbour(g, m, a, s);
        t.emplace_back(c, nb.index, coef);
        if (rule == GhostRule::MaterialCoordinate && nb.shift != 0.0) {
          out.offset[static_cast<std::size_t>(a)][c] += coef * nb.shift;
        }
      };
      if (scheme == AdvectionScheme::Central) {
        add(1, va / (2.0 * h));
        add(-1, -va / (2.0 * h));
      } else if (va > 0.0) {
        t.emplace_back(c, c, va / h);
        add(-1, -va / h);
      } else {
        t.emplace_back(c, c, -va / h);
        add(1, va / h);
      }
    }
  }
  out.A = from_triplets(g, t);
  return out;
}

ScalarField Operators::advect(const ScalarField& f, const VectorField& v,
                              AdvectionScheme scheme) const {
  return advection(v, scheme, GhostRule::ZeroGradient).A * f;
}

VectorField Operators::advect_coordinates(const VectorField& xi, const VectorField& v,
                                          AdvectionScheme scheme) const {
  const Advection adv = advection(v, scheme, GhostRule::MaterialCoordinate);
  VectorField r;
  for (std::size_t i = 0; i < 3; ++i) r[i] = adv.A * xi[i] + adv.offset[i];
  return r;
}

SpMat Operators::face_laplacian(const ScalarField& m) const {
  const Grid& g = grid_;
  Triplets t;
  for (Eigen::Index c = 0; c < g.cells(); ++c) {
    const auto mc = g.multi(c);
    for (int a = 0; a < g.dim; ++a) {
      const Neighbour nb = neighbour(g, mc, a, 1);
      if (nb.ghost) continue;
      const double h = g.h[static_cast<std::size_t>(a)];
      const double w = 0.5 * (m[c] + m[nb.index]) / (h * h);
      t.emplace_back(c, c, -w);
      t.emplace_back(c, nb.index, w);
      t.emplace_back(nb.index, nb.index, -w);
      t.emplace_back(nb.index, c, w);
    }
  }
  return from_triplets(g, t);
}

double Operators::face_dissipation(const ScalarField& m, const ScalarField& u) const {
  const Grid& g = grid_;
  double s = 0.0;
  for (Eigen::Index c = 0; c < g.cells(); ++c) {
    const auto mc = g.multi(c);
    for (int a = 0; a < g.dim; ++a) {
      const Neighbour nb = neighbour(g, mc, a, 1);
      if (nb.ghost) continue;
      const double h = g.h[static_cast<std::size_t>(a)];
      const double du = (u[nb.index] - u[c]) / h;
      s += 0.5 * (m[c] + m[nb.index]) * du * du;
    }
  }
  return s * g.cell_volume();
}

SpMat Operators::face_laplacian_dm(const ScalarField& dm, const ScalarField& u) const {
  const Grid& g = grid_;
  Triplets t;
  for (Eigen::Index c = 0; c < g.cells(); ++c) {
    const auto mc = g.multi(c);
    for (int a = 0; a < g.dim; ++a) {
      const Neighbour nb = neighbour(g, mc, a, 1);
      if (nb.ghost) continue;
      const double h = g.h[static_cast<std::size_t>(a)];
      const double q = 0.5 * (u[nb.index] - u[c]) / (h * h);
      // flux q (m_c + m_n) enters cell c with + and cell n with -
      t.emplace_back(c, c, q * dm[c]);
      t.emplace_back(c, nb.index, q * dm[nb.index]);
      t.emplace_back(nb.index, c, -q * dm[c]);
      t.emplace_back(nb.index, nb.index, -q * dm[nb.index]);
    }
  }
  return from_triplets(g, t);
}

const char* to_string(AdvectionScheme s) {
  return s == AdvectionScheme::Upwind ? "upwind" : "central";
}

const char* to_string(Boundary b) { return b == Boundary::Periodic ? "periodic" : "slip-box"; }

}  // namespace evd
