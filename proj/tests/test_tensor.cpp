#include <doctest.h>

#include <random>

#include "evd/errors.hpp"
#include "evd/tensor.hpp"

using namespace evd;

namespace {

Mat3 random_mat(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> N;
  Mat3 m;
  for (auto& x : m.a) x = scale * N(rng);
  return m;
}

double max_diff(const Mat3& a, const Mat3& b) {
  double r = 0.0;
  for (std::size_t k = 0; k < 9; ++k) r = std::max(r, std::abs(a[k] - b[k]));
  return r;
}

}  // namespace

TEST_CASE("identity determinant, cofactor and inverse") {
  const Mat3 I = Mat3::identity();
  CHECK(det(I) == 1.0);
  CHECK(cof(I) == I);
  CHECK(inv(I) == I);
}

TEST_CASE("diagonal determinant and cofactor by minors") {
  CHECK(det(Mat3::diag(2, 1, 1)) == doctest::Approx(2.0).epsilon(1e-15));
  // minors of diag(2,3,4): 3*4, 2*4, 2*3
  CHECK(max_diff(cof(Mat3::diag(2, 3, 4)), Mat3::diag(12, 8, 6)) < 1e-14);
}

TEST_CASE("deviatoric part and trace split") {
  CHECK(max_diff(dev(Mat3::identity()), Mat3::zero()) < 1e-15);
  CHECK(max_diff(dev(Mat3::diag(3, 0, 0)), Mat3::diag(2, -1, -1)) < 1e-15);
  CHECK(frob(Mat3::diag(6, 0.5, 0.5)) == doctest::Approx(std::sqrt(36.5)).epsilon(1e-15));
  CHECK(frob(Mat3::diag(6, 0.5, 0.5)) == doctest::Approx(6.0415).epsilon(1e-4));
}

TEST_CASE("algebraic identities on random matrices") {
  std::mt19937_64 rng(42);
  for (int s = 0; s < 200; ++s) {
    const Mat3 A = random_mat(rng, 3.0), B = random_mat(rng);
    CHECK(std::abs(tr(dev(A))) <= 1e-13 * frob(A));
    const Mat3 lhs = A * transpose(cof(A));
    CHECK(max_diff(lhs, det(A) * Mat3::identity()) <= 1e-11 * std::max(1.0, std::abs(det(A))) * frob(A));
    CHECK(ddot(A, B) == doctest::Approx(ddot(B, A)).epsilon(1e-15));
    CHECK(ddot(2.0 * A + B, B) == doctest::Approx(2.0 * ddot(A, B) + ddot(B, B)).epsilon(1e-12));
    CHECK(frob(A) * frob(A) == doctest::Approx(ddot(A, A)).epsilon(1e-14));
    if (std::abs(det(A)) > 1e-3) {
      CHECK(max_diff(A * inv(A), Mat3::identity()) < 1e-12 * frob(A) * frob(inv(A)));
      CHECK(max_diff(cof(A), det(A) * transpose(inv(A))) < 1e-11 * frob(cof(A)));
    }
  }
}

TEST_CASE("inverse of a singular matrix throws") {
  const Mat3 S = Mat3::rows({1, 2, 3, 2, 4, 6, 0, 1, 1});
  CHECK_THROWS_AS(inv(S), SingularMatrixError);
  CHECK_THROWS_AS(inv(Mat3::zero()), SingularMatrixError);
}

TEST_CASE("rotations are orthogonal with unit determinant") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N;
  for (int s = 0; s < 20; ++s) {
    const Mat3 R = rotation(Vec3{{N(rng), N(rng), N(rng)}}, N(rng));
    CHECK(max_diff(R * transpose(R), Mat3::identity()) < 1e-14);
    CHECK(det(R) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("third-order tensor norm") {
  Ten3 t;
  t(0, 1, 2) = 3.0;
  t(2, 2, 2) = 4.0;
  CHECK(frob(t) == doctest::Approx(5.0));
  CHECK(ddot(t, t) == doctest::Approx(25.0));
}
