#include "evd/tensor.hpp"

#include "evd/errors.hpp"

namespace evd {

Mat3 inv(const Mat3& m) {
  const double d = det(m);
  const double scale = frob(m);
  if (!(std::abs(d) > 1e-14 * scale * scale * scale)) {
    throw SingularMatrixError("inv: matrix is singular (det = " + std::to_string(d) + ")");
  }
  return (1.0 / d) * transpose(cof(m));
}

Mat3 rotation(const Vec3& axis, double angle) {
  const double n = norm(axis);
  const Vec3 k = (1.0 / n) * axis;
  Mat3 kx;
  kx(0, 1) = -k[2];
  kx(0, 2) = k[1];
  kx(1, 0) = k[2];
  kx(1, 2) = -k[0];
  kx(2, 0) = -k[1];
  kx(2, 1) = k[0];
  return Mat3::identity() + std::sin(angle) * kx + (1.0 - std::cos(angle)) * (kx * kx);
}

}  // namespace evd
