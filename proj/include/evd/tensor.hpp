#pragma once

// Small fixed-size tensors at a point: vectors, 3x3 matrices and 3x3x3
// third-order tensors. Everything is 3D; plane-strain problems embed into
// the 3x3 setting.

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>

namespace evd {

struct Vec3 {
  std::array<double, 3> c{0.0, 0.0, 0.0};

  constexpr double& operator[](std::size_t i) { return c[i]; }
  constexpr double operator[](std::size_t i) const { return c[i]; }

  constexpr Vec3& operator+=(const Vec3& o) {
    for (std::size_t i = 0; i < 3; ++i) c[i] += o.c[i];
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    for (std::size_t i = 0; i < 3; ++i) c[i] -= o.c[i];
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    for (auto& x : c) x *= s;
    return *this;
  }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

inline constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
inline constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
inline constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
inline constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
inline constexpr double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// 3x3 matrix, row-major.
struct Mat3 {
  std::array<double, 9> a{};

  constexpr double& operator()(std::size_t i, std::size_t j) { return a[3 * i + j]; }
  constexpr double operator()(std::size_t i, std::size_t j) const { return a[3 * i + j]; }
  constexpr double& operator[](std::size_t k) { return a[k]; }
  constexpr double operator[](std::size_t k) const { return a[k]; }

  static constexpr Mat3 zero() { return Mat3{}; }
  static constexpr Mat3 identity() { return diag(1.0, 1.0, 1.0); }
  static constexpr Mat3 diag(double x, double y, double z) {
    Mat3 m;
    m(0, 0) = x;
    m(1, 1) = y;
    m(2, 2) = z;
    return m;
  }
  static constexpr Mat3 rows(std::initializer_list<double> v) {
    Mat3 m;
    std::size_t k = 0;
    for (double x : v) {
      if (k < 9) m.a[k++] = x;
    }
    return m;
  }

  constexpr Mat3& operator+=(const Mat3& o) {
    for (std::size_t k = 0; k < 9; ++k) a[k] += o.a[k];
    return *this;
  }
  constexpr Mat3& operator-=(const Mat3& o) {
    for (std::size_t k = 0; k < 9; ++k) a[k] -= o.a[k];
    return *this;
  }
  constexpr Mat3& operator*=(double s) {
    for (auto& x : a) x *= s;
    return *this;
  }
  friend constexpr bool operator==(const Mat3&, const Mat3&) = default;
};

inline constexpr Mat3 operator+(Mat3 a, const Mat3& b) { return a += b; }
inline constexpr Mat3 operator-(Mat3 a, const Mat3& b) { return a -= b; }
inline constexpr Mat3 operator-(Mat3 a) { return a *= -1.0; }
inline constexpr Mat3 operator*(double s, Mat3 a) { return a *= s; }
inline constexpr Mat3 operator*(Mat3 a, double s) { return a *= s; }

inline constexpr Mat3 operator*(const Mat3& x, const Mat3& y) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += x(i, k) * y(k, j);
      r(i, j) = s;
    }
  return r;
}

inline constexpr Vec3 operator*(const Mat3& m, const Vec3& v) {
  Vec3 r;
  for (std::size_t i = 0; i < 3; ++i) r[i] = m(i, 0) * v[0] + m(i, 1) * v[1] + m(i, 2) * v[2];
  return r;
}

inline constexpr Mat3 transpose(const Mat3& m) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r(i, j) = m(j, i);
  return r;
}

inline constexpr Mat3 outer(const Vec3& x, const Vec3& y) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r(i, j) = x[i] * y[j];
  return r;
}

inline constexpr double tr(const Mat3& m) { return m(0, 0) + m(1, 1) + m(2, 2); }

inline constexpr double ddot(const Mat3& x, const Mat3& y) {
  double s = 0.0;
  for (std::size_t k = 0; k < 9; ++k) s += x.a[k] * y.a[k];
  return s;
}

/// Frobenius norm.
inline double frob(const Mat3& m) { return std::sqrt(ddot(m, m)); }

inline constexpr Mat3 dev(const Mat3& m) {
  Mat3 r = m;
  const double t = tr(m) / 3.0;
  r(0, 0) -= t;
  r(1, 1) -= t;
  r(2, 2) -= t;
  return r;
}

inline constexpr Mat3 sym(const Mat3& m) { return 0.5 * (m + transpose(m)); }

inline constexpr double det(const Mat3& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

/// Cofactor matrix; cof(A) = det(A) inv(A)^T for invertible A.
inline constexpr Mat3 cof(const Mat3& m) {
  Mat3 c;
  c(0, 0) = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  c(0, 1) = m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2);
  c(0, 2) = m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0);
  c(1, 0) = m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2);
  c(1, 1) = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
  c(1, 2) = m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1);
  c(2, 0) = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
  c(2, 1) = m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2);
  c(2, 2) = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return c;
}

/// Inverse; throws SingularMatrixError when |det A| <= 1e-14 |A|^3.
Mat3 inv(const Mat3& m);

/// Third-order tensor T(i,a,b), used for second velocity gradients and hyperstress.
struct Ten3 {
  std::array<double, 27> a{};

  constexpr double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return a[9 * i + 3 * j + k];
  }
  constexpr double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return a[9 * i + 3 * j + k];
  }

  constexpr Ten3& operator+=(const Ten3& o) {
    for (std::size_t k = 0; k < 27; ++k) a[k] += o.a[k];
    return *this;
  }
  constexpr Ten3& operator*=(double s) {
    for (auto& x : a) x *= s;
    return *this;
  }
  friend constexpr bool operator==(const Ten3&, const Ten3&) = default;
};

inline constexpr Ten3 operator+(Ten3 a, const Ten3& b) { return a += b; }
inline constexpr Ten3 operator*(double s, Ten3 a) { return a *= s; }

inline constexpr double ddot(const Ten3& x, const Ten3& y) {
  double s = 0.0;
  for (std::size_t k = 0; k < 27; ++k) s += x.a[k] * y.a[k];
  return s;
}
inline double frob(const Ten3& t) { return std::sqrt(ddot(t, t)); }

/// Rotation about a unit axis by the given angle (Rodrigues).
Mat3 rotation(const Vec3& axis, double angle);

}  // namespace evd
