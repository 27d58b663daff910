#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace aniso {

// Fixed-size Euclidean vector. Positions and velocities of a particle.
template <std::size_t Dim>
struct Vec {
  std::array<double, Dim> c{};

  static constexpr std::size_t dim = Dim;

  constexpr double& operator[](std::size_t k) { return c[k]; }
  constexpr double operator[](std::size_t k) const { return c[k]; }

  constexpr Vec& operator+=(const Vec& o) {
    for (std::size_t k = 0; k < Dim; ++k) c[k] += o.c[k];
    return *this;
  }
  constexpr Vec& operator-=(const Vec& o) {
    for (std::size_t k = 0; k < Dim; ++k) c[k] -= o.c[k];
    return *this;
  }
  constexpr Vec& operator*=(double s) {
    for (auto& x : c) x *= s;
    return *this;
  }

  friend constexpr Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend constexpr Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend constexpr Vec operator*(Vec a, double s) { return a *= s; }
  friend constexpr Vec operator*(double s, Vec a) { return a *= s; }
  friend constexpr Vec operator-(Vec a) { return a *= -1.0; }
  friend constexpr bool operator==(const Vec&, const Vec&) = default;
};

template <std::size_t Dim>
constexpr double dot(const Vec<Dim>& a, const Vec<Dim>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < Dim; ++k) s += a[k] * b[k];
  return s;
}

template <std::size_t Dim>
inline double norm(const Vec<Dim>& a) {
  return std::sqrt(dot(a, a));
}

using Vec2 = Vec<2>;

inline Vec2 unit_polar(double theta) { return Vec2{{std::cos(theta), std::sin(theta)}}; }

// Counter-clockwise normal of unit_polar(theta).
inline Vec2 unit_polar_normal(double theta) { return Vec2{{-std::sin(theta), std::cos(theta)}}; }

inline double polar_angle(const Vec2& v) { return std::atan2(v[1], v[0]); }

inline Vec2 rotate(const Vec2& v, double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  return Vec2{{c * v[0] - s * v[1], s * v[0] + c * v[1]}};
}

inline constexpr double kPi = 3.14159265358979323846;

// Maps an angle into [-pi, pi).
inline double wrap_angle(double theta) {
  double w = std::fmod(theta + kPi, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  w -= kPi;
  if (w >= kPi) w -= 2.0 * kPi;
  return w;
}

// Signed shortest angular difference a - b, in [-pi, pi).
inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

}  // namespace aniso
