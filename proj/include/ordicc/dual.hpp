#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <utility>

namespace ordicc {

// Upper bound on the number of derivative directions a Dual can carry.
// Partials live in a fixed-capacity Eigen vector so arithmetic never
// allocates.
inline constexpr int kMaxDualDim = 64;

// First-order forward-mode scalar: a value plus a vector of partial
// derivatives. An empty partials vector means "gradient identically zero",
// which keeps expressions that mix constants and variables cheap. Generic
// numeric code can be instantiated with either double or Dual; use val(x)
// when branching on magnitudes.
struct Dual {
  using Partials =
      Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDualDim, 1>;

  double v = 0.0;
  Partials d;  // size 0 == constant

  Dual() = default;
  Dual(double value) : v(value) {}  // implicit on purpose: constants promote
  Dual(double value, Partials partials) : v(value), d(std::move(partials)) {}

  // Unit seed along one coordinate of a dim-dimensional gradient.
  static Dual seeded(double value, int dim, int coordinate) {
    Partials p = Partials::Zero(dim);
    p[coordinate] = 1.0;
    return Dual(value, std::move(p));
  }

  Dual operator-() const {
    if (d.size() == 0) return Dual(-v);
    return Dual(-v, (-d).eval());
  }

  Dual& operator+=(const Dual& o) { *this = *this + o; return *this; }
  Dual& operator-=(const Dual& o) { *this = *this - o; return *this; }
  Dual& operator*=(const Dual& o) { *this = *this * o; return *this; }
  Dual& operator/=(const Dual& o) { *this = *this / o; return *this; }
  Dual& operator+=(double o) { v += o; return *this; }
  Dual& operator-=(double o) { v -= o; return *this; }

  // a * x.d + b * y.d with empty-means-zero semantics.
  static Partials lincomb(double a, const Partials& x, double b,
                          const Partials& y) {
    if (x.size() == 0) {
      if (y.size() == 0) return {};
      return Partials((b * y).eval());
    }
    if (y.size() == 0) return Partials((a * x).eval());
    assert(x.size() == y.size());
    return Partials((a * x + b * y).eval());
  }

  static Partials scaled(double a, const Partials& x) {
    if (x.size() == 0) return {};
    return Partials((a * x).eval());
  }

  friend Dual operator+(const Dual& a, const Dual& b) {
    return Dual(a.v + b.v, lincomb(1.0, a.d, 1.0, b.d));
  }
  friend Dual operator-(const Dual& a, const Dual& b) {
    return Dual(a.v - b.v, lincomb(1.0, a.d, -1.0, b.d));
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    return Dual(a.v * b.v, lincomb(b.v, a.d, a.v, b.d));
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.v;
    return Dual(a.v * inv, lincomb(inv, a.d, -a.v * inv * inv, b.d));
  }

  friend Dual operator+(const Dual& a, double b) { return Dual(a.v + b, a.d); }
  friend Dual operator+(double a, const Dual& b) { return Dual(a + b.v, b.d); }
  friend Dual operator-(const Dual& a, double b) { return Dual(a.v - b, a.d); }
  friend Dual operator-(double a, const Dual& b) {
    return Dual(a - b.v, scaled(-1.0, b.d));
  }
  friend Dual operator*(const Dual& a, double b) {
    return Dual(a.v * b, scaled(b, a.d));
  }
  friend Dual operator*(double a, const Dual& b) {
    return Dual(a * b.v, scaled(a, b.d));
  }
  friend Dual operator/(const Dual& a, double b) {
    return Dual(a.v / b, scaled(1.0 / b, a.d));
  }
  friend Dual operator/(double a, const Dual& b) {
    const double inv = 1.0 / b.v;
    return Dual(a * inv, scaled(-a * inv * inv, b.d));
  }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
  friend bool operator<(const Dual& a, double b) { return a.v < b; }
  friend bool operator>(const Dual& a, double b) { return a.v > b; }
  friend bool operator<=(const Dual& a, double b) { return a.v <= b; }
  friend bool operator>=(const Dual& a, double b) { return a.v >= b; }
  friend bool operator<(double a, const Dual& b) { return a < b.v; }
  friend bool operator>(double a, const Dual& b) { return a > b.v; }
};

inline double val(double x) { return x; }
inline double val(const Dual& x) { return x.v; }

// Gradient of x as a dense dim-vector (empty partials expand to zeros).
inline Eigen::VectorXd grad(const Dual& x, int dim) {
  if (x.d.size() == 0) return Eigen::VectorXd::Zero(dim);
  assert(x.d.size() == dim);
  return Eigen::VectorXd(x.d);
}

inline Dual exp(const Dual& x) {
  const double e = std::exp(x.v);
  return Dual(e, Dual::scaled(e, x.d));
}

inline Dual log(const Dual& x) {
  return Dual(std::log(x.v), Dual::scaled(1.0 / x.v, x.d));
}

inline Dual sqrt(const Dual& x) {
  const double s = std::sqrt(x.v);
  return Dual(s, Dual::scaled(0.5 / s, x.d));
}

inline Dual fabs(const Dual& x) { return x.v < 0.0 ? -x : x; }

// d/dx erfc(x) = -2/sqrt(pi) * exp(-x^2)
inline Dual erfc(const Dual& x) {
  constexpr double two_over_sqrt_pi = 1.1283791670955126;
  return Dual(std::erfc(x.v),
              Dual::scaled(-two_over_sqrt_pi * std::exp(-x.v * x.v), x.d));
}

inline bool isfinite(const Dual& x) { return std::isfinite(x.v); }

}  // namespace ordicc
