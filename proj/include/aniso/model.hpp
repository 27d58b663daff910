#pragma once

// Interaction kernel, vision weights and the implicit velocity residual of the
// anisotropic first-order aggregation model
//
//   dx_i/dt = v_i,
//   v_i = -(1/N) sum_{j != i} K'(|x_i - x_j|) u_ij g(u_ij . v_i/|v_i|),
//
// with u_ij = (x_i - x_j)/|x_i - x_j|. Everything in this header is a pure
// function of its arguments and is generic in the spatial dimension.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aniso/errors.hpp"
#include "aniso/vec.hpp"

namespace aniso {

// Morse potential K(r) = -C_a exp(-r/l_a) + C_r exp(-r/l_r).
struct KernelParams {
  double c_attract = 3.0;
  double c_repulse = 2.0;
  double l_attract = 2.0;
  double l_repulse = 1.0;

  void validate() const {
    if (!(c_attract > 0.0 && c_repulse > 0.0 && l_attract > 0.0 && l_repulse > 0.0))
      throw ConfigError("kernel parameters must be strictly positive");
  }
};

enum class VisionForm { Tanh, Linear, Uniform };

inline std::string to_string(VisionForm f) {
  switch (f) {
    case VisionForm::Tanh: return "tanh";
    case VisionForm::Linear: return "linear";
    case VisionForm::Uniform: return "uniform";
  }
  return "?";
}

// Field-of-vision weight g(s), s = u_ij . v_i/|v_i| = -cos(phi_ij).
//   Tanh:    [tanh(a(-s + 1 - b/pi)) + 1] / c,  c = tanh(a(2 - b/pi)) + 1
//   Linear:  (-a s + b) / (a + b)
//   Uniform: 1 (isotropic reference model)
struct VisionParams {
  VisionForm form = VisionForm::Tanh;
  double steepness = 5.0;  // a
  double width = kPi;      // b
  double normalization = std::tanh(5.0 * (2.0 - 1.0)) + 1.0;  // c, Tanh only

  static VisionParams tanh(double a, double b) {
    VisionParams v{VisionForm::Tanh, a, b, std::tanh(a * (2.0 - b / kPi)) + 1.0};
    v.validate();
    return v;
  }
  static VisionParams linear(double a, double b) {
    VisionParams v{VisionForm::Linear, a, b, 1.0};
    v.validate();
    return v;
  }
  static VisionParams uniform() { return VisionParams{VisionForm::Uniform, 1.0, 1.0, 1.0}; }

  void validate() const {
    if (form == VisionForm::Uniform) return;
    if (!(steepness > 0.0 && width > 0.0))
      throw ConfigError("vision steepness and width must be strictly positive");
    if (form == VisionForm::Linear && width < steepness)
      throw ConfigError("linear vision requires width >= steepness so that g >= 0");
    if (form == VisionForm::Tanh) {
      const double c = std::tanh(steepness * (2.0 - width / kPi)) + 1.0;
      if (!(c > 0.0)) throw ConfigError("tanh vision normalization is not positive");
      if (std::abs(c - normalization) > 1e-12 * c)
        throw ConfigError("tanh vision normalization inconsistent with steepness/width");
    }
  }
};

struct ModelParams {
  std::size_t n_particles = 4;
  std::size_t dimension = 2;
  KernelParams kernel{};
  VisionParams vision{};

  void validate() const {
    if (n_particles < 2) throw ConfigError("n_particles must be >= 2");
    if (dimension < 1) throw ConfigError("dimension must be >= 1");
    kernel.validate();
    vision.validate();
  }
};

template <std::size_t Dim>
struct PhaseState {
  double time = 0.0;
  std::vector<Vec<Dim>> positions;
  std::vector<Vec<Dim>> velocities;
};

// ---------------------------------------------------------------------------
// Kernel

inline double kernel_value(double r, const KernelParams& k) {
  if (!(r >= 0.0)) throw DomainError("kernel_value: negative distance");
  return -k.c_attract * std::exp(-r / k.l_attract) + k.c_repulse * std::exp(-r / k.l_repulse);
}

// K'(r); negative is repulsive, positive attractive.
inline double kernel_deriv(double r, const KernelParams& k) {
  if (!(r >= 0.0)) throw DomainError("kernel_deriv: negative distance");
  return k.c_attract / k.l_attract * std::exp(-r / k.l_attract) -
         k.c_repulse / k.l_repulse * std::exp(-r / k.l_repulse);
}

inline double kernel_second_deriv(double r, const KernelParams& k) {
  if (!(r >= 0.0)) throw DomainError("kernel_second_deriv: negative distance");
  return -k.c_attract / (k.l_attract * k.l_attract) * std::exp(-r / k.l_attract) +
         k.c_repulse / (k.l_repulse * k.l_repulse) * std::exp(-r / k.l_repulse);
}

// sup_{r >= 0} |K'(r)|. Grid scan over [0, 50 max(l_a, l_r)] refined by a
// golden-section search around the best sample; the tail decays to zero.
inline double kernel_deriv_sup(const KernelParams& k) {
  const double r_max = 50.0 * std::max(k.l_attract, k.l_repulse);
  constexpr int n = 20000;
  const double h = r_max / n;
  int best = 0;
  double best_val = std::abs(kernel_deriv(0.0, k));
  for (int m = 1; m <= n; ++m) {
    const double val = std::abs(kernel_deriv(m * h, k));
    if (val > best_val) {
      best_val = val;
      best = m;
    }
  }
  double lo = std::max(0.0, (best - 1) * h), hi = std::min(r_max, (best + 1) * h);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 100 && hi - lo > 1e-15 * r_max; ++it) {
    const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    if (std::abs(kernel_deriv(a, k)) > std::abs(kernel_deriv(b, k)))
      hi = b;
    else
      lo = a;
  }
  return std::max({best_val, std::abs(kernel_deriv(0.5 * (lo + hi), k)),
                   std::abs(kernel_deriv(0.0, k)), std::abs(kernel_deriv(r_max, k))});
}

// ---------------------------------------------------------------------------
// Vision

namespace detail {
inline double clamp_unit(double s) {
  if (std::abs(s) > 1.0 + 1e-12) throw DomainError("vision argument outside [-1, 1]");
  return std::clamp(s, -1.0, 1.0);
}
}  // namespace detail

inline double vision_weight(double s, const VisionParams& v) {
  s = detail::clamp_unit(s);
  switch (v.form) {
    case VisionForm::Tanh:
      return (std::tanh(v.steepness * (-s + 1.0 - v.width / kPi)) + 1.0) / v.normalization;
    case VisionForm::Linear:
      return (-v.steepness * s + v.width) / (v.steepness + v.width);
    case VisionForm::Uniform:
      return 1.0;
  }
  return 1.0;
}

inline double vision_weight_deriv(double s, const VisionParams& v) {
  s = detail::clamp_unit(s);
  switch (v.form) {
    case VisionForm::Tanh: {
      const double t = std::tanh(v.steepness * (-s + 1.0 - v.width / kPi));
      return -v.steepness * (1.0 - t * t) / v.normalization;
    }
    case VisionForm::Linear:
      return -v.steepness / (v.steepness + v.width);
    case VisionForm::Uniform:
      return 0.0;
  }
  return 0.0;
}

// sup |g'| on [-1, 1].
inline double vision_weight_deriv_sup(const VisionParams& v) {
  switch (v.form) {
    case VisionForm::Tanh: {
      // |g'| is maximal where the tanh argument is closest to zero.
      const double s_star = std::clamp(1.0 - v.width / kPi, -1.0, 1.0);
      return std::abs(vision_weight_deriv(s_star, v));
    }
    case VisionForm::Linear:
      return v.steepness / (v.steepness + v.width);
    case VisionForm::Uniform:
      return 0.0;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Pairwise geometry

template <std::size_t Dim>
struct PairTerm {
  Vec<Dim> unit;      // (x_i - x_j) / |x_i - x_j|
  double dist;        // |x_i - x_j|
  double force;       // K'(|x_i - x_j|)
};

// Unit vectors, distances and K' values from particle i to every other
// particle. Throws on coincident positions.
template <std::size_t Dim>
std::vector<PairTerm<Dim>> pair_terms(std::size_t i, std::span<const Vec<Dim>> x,
                                      const KernelParams& k) {
  if (i >= x.size()) throw DomainError("particle index out of range");
  std::vector<PairTerm<Dim>> out;
  out.reserve(x.size() - 1);
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j == i) continue;
    const Vec<Dim> d = x[i] - x[j];
    const double r = norm(d);
    if (!(r > 0.0)) throw DomainError("coincident particle positions");
    out.push_back({d * (1.0 / r), r, kernel_deriv(r, k)});
  }
  return out;
}

template <std::size_t Dim>
void check_shape(std::span<const Vec<Dim>> x, const ModelParams& p) {
  if (Dim != p.dimension) throw UnsupportedDimension("position dimension does not match model");
  if (x.size() != p.n_particles) throw ConfigError("number of positions does not match model");
}

// -(1/N) sum_{j != i} K'(|x_i - x_j|) u_ij g(u_ij . direction), for any
// |direction| <= 1. With a unit direction this is the right-hand side of the
// implicit velocity equation; with |direction| < 1 it is the generalized
// (set-valued sign) form.
template <std::size_t Dim>
Vec<Dim> interaction_sum(std::size_t i, std::span<const Vec<Dim>> x, const Vec<Dim>& direction,
                         const ModelParams& p) {
  check_shape(x, p);
  const double inv_n = 1.0 / static_cast<double>(p.n_particles);
  Vec<Dim> acc{};
  for (const auto& t : pair_terms(i, x, p.kernel))
    acc += t.unit * (t.force * vision_weight(dot(t.unit, direction), p.vision));
  return acc * (-inv_n);
}

// F_i(x, v) = -v + interaction_sum(i, x, v/|v|). Zero iff v is a fixed point.
template <std::size_t Dim>
Vec<Dim> residual(std::size_t i, std::span<const Vec<Dim>> x, const Vec<Dim>& v,
                  const ModelParams& p) {
  const double speed = norm(v);
  if (!(speed > 0.0)) throw DomainError("residual: zero velocity has no direction");
  return interaction_sum(i, x, v * (1.0 / speed), p) - v;
}

// Velocity of particle i in the isotropic model (g = 1).
template <std::size_t Dim>
Vec<Dim> isotropic_velocity(std::size_t i, std::span<const Vec<Dim>> x, const ModelParams& p) {
  check_shape(x, p);
  const double inv_n = 1.0 / static_cast<double>(p.n_particles);
  Vec<Dim> acc{};
  for (const auto& t : pair_terms(i, x, p.kernel)) acc += t.unit * t.force;
  return acc * (-inv_n);
}

// E(x) = (1/N) sum_i sum_{j != i} K(|x_i - x_j|).
template <std::size_t Dim>
double energy(std::span<const Vec<Dim>> x, const ModelParams& p) {
  check_shape(x, p);
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (i == j) continue;
      const double r = norm(x[i] - x[j]);
      if (!(r > 0.0)) throw DomainError("coincident particle positions");
      e += kernel_value(r, p.kernel);
    }
  return e / static_cast<double>(p.n_particles);
}

template <std::size_t Dim>
double min_pair_distance(std::span<const Vec<Dim>> x) {
  double m = INFINITY;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) m = std::min(m, norm(x[i] - x[j]));
  return m;
}

}  // namespace aniso
