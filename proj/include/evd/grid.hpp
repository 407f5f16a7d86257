#pragma once

// Cell-centred structured grid and discrete differential operators.
//
// Cells are ordered row-major with the x index slowest:
//   index(i, j, k) = (i * ny + j) * nz + k.
// 2D grids have nz = 1 and unit thickness; vectors keep three components.
//
// All first derivatives are centred differences D_a. In slip-box mode a ghost
// layer reflects the field across each wall: the wall-normal velocity
// component is odd along its own axis, everything else is even. The even and
// odd operators along an axis are exact negative adjoints of each other, so
// -D^T is the discrete divergence matching D and the discrete Green identities
// hold to round-off.

#include <Eigen/Sparse>
#include <array>
#include <vector>

#include "evd/tensor.hpp"

namespace evd {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using ScalarField = Eigen::VectorXd;
using VectorField = std::array<Eigen::VectorXd, 3>;
using MatField = std::array<Eigen::VectorXd, 9>;
using Ten3Field = std::array<Eigen::VectorXd, 27>;

enum class Boundary { Periodic, SlipBox };

struct Grid {
  int dim = 2;
  std::array<int, 3> n{16, 16, 1};
  std::array<double, 3> h{1.0 / 16, 1.0 / 16, 1.0};
  Boundary bc = Boundary::Periodic;

  /// Grid covering [0, length_a] per axis. Throws ConfigError for fewer than 4 cells.
  static Grid make(int dim, std::array<int, 3> cells, std::array<double, 3> length, Boundary bc);

  Eigen::Index cells() const { return static_cast<Eigen::Index>(n[0]) * n[1] * n[2]; }
  Eigen::Index index(int i, int j, int k) const {
    return (static_cast<Eigen::Index>(i) * n[1] + j) * n[2] + k;
  }
  std::array<int, 3> multi(Eigen::Index c) const;
  double length(int a) const { return n[static_cast<std::size_t>(a)] * h[static_cast<std::size_t>(a)]; }
  double cell_volume() const { return h[0] * h[1] * h[2]; }
  Vec3 center(Eigen::Index c) const;
  bool active(int axis) const { return axis < dim; }
};

ScalarField constant_scalar(const Grid& g, double value);
VectorField constant_vector(const Grid& g, const Vec3& value);
MatField constant_mat(const Grid& g, const Mat3& value);
/// The identity map x -> x sampled at cell centres.
VectorField identity_coordinates(const Grid& g);

inline Vec3 vec_at(const VectorField& f, Eigen::Index c) {
  return Vec3{{f[0][c], f[1][c], f[2][c]}};
}
inline void set_vec(VectorField& f, Eigen::Index c, const Vec3& v) {
  for (std::size_t i = 0; i < 3; ++i) f[i][c] = v[i];
}
inline Mat3 mat_at(const MatField& f, Eigen::Index c) {
  Mat3 m;
  for (std::size_t k = 0; k < 9; ++k) m[k] = f[k][c];
  return m;
}
inline void set_mat(MatField& f, Eigen::Index c, const Mat3& m) {
  for (std::size_t k = 0; k < 9; ++k) f[k][c] = m[k];
}

double sum(const Grid& g, const ScalarField& f);  // cell-volume weighted
double inner(const Grid& g, const ScalarField& a, const ScalarField& b);
double inner(const Grid& g, const VectorField& a, const VectorField& b);
double inner(const Grid& g, const MatField& a, const MatField& b);
double max_abs(const VectorField& f);

enum class AdvectionScheme { Upwind, Central };

/// Ghost values used by transport. ZeroGradient suits Fe and alpha; the
/// material-coordinate rule continues the identity map across walls and
/// periodic seams, so xi = x is transported exactly.
enum class GhostRule { ZeroGradient, MaterialCoordinate };

/// (v . grad) f = A f + offset[component] for each scalar component of f.
struct Advection {
  SpMat A;
  std::array<Eigen::VectorXd, 3> offset;  // only used by the material-coordinate rule
};

class Operators {
 public:
  explicit Operators(const Grid& grid);

  const Grid& grid() const { return grid_; }

  /// First difference along `axis`, odd or even ghost reflection.
  const SpMat& d(int axis, bool odd) const { return d_[axis][odd ? 1 : 0]; }
  /// D for velocity component i along axis a.
  const SpMat& dv(int i, int a) const { return d(a, odd(i, a)); }
  /// Second derivative of velocity component i along a, b (compact when a == b).
  const SpMat& hv(int i, int a, int b) const { return h_[i][a][b]; }
  bool odd(int i, int a) const { return grid_.bc == Boundary::SlipBox && i == a; }

  ScalarField div(const VectorField& g) const;  // sum_a D_aa g_a
  VectorField grad(const ScalarField& f) const;  // even reflection
  MatField grad(const VectorField& v) const;     // (i,a) = D_ia v_i
  /// -D^T contraction: (div T)_i = -sum_a D_ia^T T_ia.
  VectorField div(const MatField& T) const;
  Ten3Field hessian(const VectorField& v) const;

  /// Residual r with <r, w> = sum vol nu |H v|^{p-2} H v : H w.
  VectorField hyperstress_apply(const VectorField& v, double nu, double p) const;
  /// sum vol nu |H v|^p.
  double hyper_dissipation(const VectorField& v, double nu, double p) const;

  Advection advection(const VectorField& v, AdvectionScheme scheme, GhostRule rule) const;
  /// Pointwise (v . grad) f for a scalar field with zero-gradient ghosts.
  ScalarField advect(const ScalarField& f, const VectorField& v, AdvectionScheme scheme) const;
  VectorField advect_coordinates(const VectorField& xi, const VectorField& v,
                                 AdvectionScheme scheme) const;

  /// Conservative div(m grad u) with face mobility the mean of the two cells;
  /// zero flux through slip walls.
  SpMat face_laplacian(const ScalarField& m) const;
  /// sum over faces of face volume m_f (du/h)^2.
  double face_dissipation(const ScalarField& m, const ScalarField& u) const;
  /// Derivative of face_laplacian(m(a)) u with respect to a, given dm/da per cell.
  SpMat face_laplacian_dm(const ScalarField& dm, const ScalarField& u) const;

 private:
  Grid grid_;
  std::array<std::array<SpMat, 2>, 3> d_;
  std::array<std::array<std::array<SpMat, 3>, 3>, 3> h_;
};

const char* to_string(AdvectionScheme s);
const char* to_string(Boundary b);

}  // namespace evd
