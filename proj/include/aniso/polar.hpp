#pragma once

// Two-dimensional polar reduction of the implicit velocity equation.
//
// Writing v_i = r [cos t, sin t], the fixed-point equation splits into
//
//   H_i(t) = -(1/N) sum_j K'(d_ij) (u_ij . n(t)) g(u_ij . e(t)) = 0,
//   r      = R_i(t) = -(1/N) sum_j K'(d_ij) (u_ij . e(t)) g(u_ij . e(t)),
//
// with e(t) = [cos t, sin t] and n(t) = [-sin t, cos t]. A root of H_i with
// R_i > 0 is an admissible velocity; it is simple iff H_i' != 0 and it is an
// attracting equilibrium of the adjoint flow iff H_i' < 0.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aniso/errors.hpp"
#include "aniso/model.hpp"
#include "aniso/vec.hpp"

namespace aniso {

enum class RootClass { StableAdmissible, UnstableAdmissible, Inadmissible, Degenerate };

inline std::string to_string(RootClass c) {
  switch (c) {
    case RootClass::StableAdmissible: return "stable";
    case RootClass::UnstableAdmissible: return "unstable";
    case RootClass::Inadmissible: return "inadmissible";
    case RootClass::Degenerate: return "degenerate";
  }
  return "?";
}

struct RootRecord {
  double theta = 0.0;   // in [-pi, pi)
  double radius = 0.0;  // R_i(theta)
  double slope = 0.0;   // H_i'(theta)
  RootClass classification = RootClass::Degenerate;

  bool admissible() const {
    return classification == RootClass::StableAdmissible ||
           classification == RootClass::UnstableAdmissible;
  }
  Vec2 velocity() const { return unit_polar(theta) * radius; }
};

struct RootOptions {
  int grid_n = 1024;
  double root_tol = 1e-12;
  double slope_tol = 1e-8;
  double tangency_tol = 1e-10;
  double bracket_width = 1e-13;
  int max_newton = 50;
  double max_drift = kPi / 8.0;
  double rest_tol = 1e-12;
  int rest_grid = 32;

  void validate() const {
    if (grid_n < 8) throw ConfigError("grid_n must be >= 8");
    if (!(root_tol > 0 && slope_tol > 0 && tangency_tol > 0 && max_drift > 0 && rest_tol > 0))
      throw ConfigError("root tolerances must be positive");
    if (max_newton < 1 || rest_grid < 2) throw ConfigError("iteration counts must be positive");
  }
};

inline RootClass classify_root(double radius, double slope, const RootOptions& o) {
  if (std::abs(slope) <= o.slope_tol) return RootClass::Degenerate;
  if (radius <= 0.0) return RootClass::Inadmissible;
  return slope < 0.0 ? RootClass::StableAdmissible : RootClass::UnstableAdmissible;
}

struct PolarValues {
  double h, r, dh, dr;
};

// Pair data of one particle at a frozen configuration; evaluates H, R and
// their angular derivatives without re-deriving the geometry.
class PolarFrame {
 public:
  PolarFrame(std::size_t i, std::span<const Vec2> x, const ModelParams& p)
      : vision_(p.vision), inv_n_(1.0 / static_cast<double>(p.n_particles)) {
    if (p.dimension != 2) throw UnsupportedDimension("polar root machinery requires d = 2");
    check_shape(x, p);
    terms_ = pair_terms(i, x, p.kernel);
  }

  PolarValues eval(double theta) const {
    const Vec2 e = unit_polar(theta), n = unit_polar_normal(theta);
    PolarValues out{0.0, 0.0, 0.0, 0.0};
    for (const auto& t : terms_) {
      const double ue = dot(t.unit, e), un = dot(t.unit, n);
      const double g = vision_weight(ue, vision_), gp = vision_weight_deriv(ue, vision_);
      out.h += t.force * un * g;
      out.r += t.force * ue * g;
      out.dh += t.force * (-ue * g + un * un * gp);
      out.dr += t.force * (un * g + ue * un * gp);
    }
    out.h *= -inv_n_;
    out.r *= -inv_n_;
    out.dh *= -inv_n_;
    out.dr *= -inv_n_;
    return out;
  }

  double h(double theta) const {
    const Vec2 e = unit_polar(theta), n = unit_polar_normal(theta);
    double acc = 0.0;
    for (const auto& t : terms_) acc += t.force * dot(t.unit, n) * vision_weight(dot(t.unit, e), vision_);
    return -inv_n_ * acc;
  }

  // Generalized interaction sum for |s| <= 1 and its Jacobian in s.
  Vec2 sum(const Vec2& s) const {
    Vec2 acc{};
    for (const auto& t : terms_) acc += t.unit * (t.force * vision_weight(dot(t.unit, s), vision_));
    return acc * (-inv_n_);
  }
  std::array<double, 4> sum_jacobian(const Vec2& s) const {
    std::array<double, 4> j{};
    for (const auto& t : terms_) {
      const double w = -inv_n_ * t.force * vision_weight_deriv(dot(t.unit, s), vision_);
      j[0] += w * t.unit[0] * t.unit[0];
      j[1] += w * t.unit[0] * t.unit[1];
      j[2] += w * t.unit[1] * t.unit[0];
      j[3] += w * t.unit[1] * t.unit[1];
    }
    return j;
  }

  // Upper bound on |interaction sum| over all directions.
  double force_scale() const {
    double s = 0.0;
    for (const auto& t : terms_) s += std::abs(t.force);
    return s * inv_n_;
  }

  RootRecord record(double theta, const RootOptions& o) const {
    const auto v = eval(theta);
    const double w = wrap_angle(theta);
    return RootRecord{w, v.r, v.dh, classify_root(v.r, v.dh, o)};
  }

 private:
  VisionParams vision_;
  double inv_n_;
  std::vector<PairTerm<2>> terms_;
};

inline double h_of_theta(std::size_t i, std::span<const Vec2> x, double theta, const ModelParams& p) {
  return PolarFrame(i, x, p).eval(theta).h;
}

inline double r_of_theta(std::size_t i, std::span<const Vec2> x, double theta, const ModelParams& p) {
  return PolarFrame(i, x, p).eval(theta).r;
}

inline double h_prime(std::size_t i, std::span<const Vec2> x, double theta, const ModelParams& p) {
  return PolarFrame(i, x, p).eval(theta).dh;
}

inline double r_prime(std::size_t i, std::span<const Vec2> x, double theta, const ModelParams& p) {
  return PolarFrame(i, x, p).eval(theta).dr;
}

// ---------------------------------------------------------------------------
// Root enumeration

namespace detail {

// Bisection on a sign-changing bracket, then a guarded Newton polish that
// never leaves the bracket.
inline double refine_bracket(const PolarFrame& f, double lo, double hi, double h_lo,
                             const RootOptions& o) {
  while (hi - lo > o.bracket_width) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double h_mid = f.h(mid);
    if (h_mid == 0.0) return mid;
    if ((h_mid < 0.0) == (h_lo < 0.0)) {
      lo = mid;
      h_lo = h_mid;
    } else {
      hi = mid;
    }
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) {
    const auto v = f.eval(t);
    if (v.h == 0.0 || v.dh == 0.0) break;
    const double next = t - v.h / v.dh;
    if (next < lo - o.bracket_width || next > hi + o.bracket_width) break;
    if (std::abs(f.h(next)) >= std::abs(v.h)) break;
    t = next;
  }
  return t;
}

}  // namespace detail

// All roots of H_i on [-pi, pi), classified and sorted by angle. Near
// tangencies without a sign change are reported as Degenerate records.
inline std::vector<RootRecord> enumerate_roots(std::size_t i, std::span<const Vec2> x,
                                               const ModelParams& p, const RootOptions& o = {}) {
  o.validate();
  const PolarFrame f(i, x, p);
  const int n = o.grid_n;
  const double step = 2.0 * kPi / n;
  std::vector<double> th(n + 1), hv(n + 1);
  for (int k = 0; k <= n; ++k) {
    th[k] = -kPi + step * k;
    hv[k] = k < n ? f.h(th[k]) : hv[0];
  }

  std::vector<RootRecord> roots;
  for (int k = 0; k < n; ++k) {
    if (hv[k] == 0.0) {
      roots.push_back(f.record(th[k], o));
    } else if (hv[k + 1] != 0.0 && (hv[k] < 0.0) != (hv[k + 1] < 0.0)) {
      roots.push_back(f.record(detail::refine_bracket(f, th[k], th[k + 1], hv[k], o), o));
    }
  }

  // Sign-preserving local minima of |H|: possible double roots.
  for (int k = 0; k < n; ++k) {
    const int km = (k + n - 1) % n, kp = k + 1;
    const double a = std::abs(hv[km]), b = std::abs(hv[k]), c = std::abs(hv[kp]);
    if (!(b < a && b <= c)) continue;
    if ((hv[km] < 0.0) != (hv[k] < 0.0) || (hv[k] < 0.0) != (hv[kp] < 0.0)) continue;
    if (hv[k] == 0.0) continue;
    // Extremum of H is a root of H'; bisect H' across [th[k]-step, th[k]+step].
    double lo = th[k] - step, hi = th[k] + step;
    double d_lo = f.eval(lo).dh, d_hi = f.eval(hi).dh;
    double t = th[k];
    if ((d_lo < 0.0) != (d_hi < 0.0)) {
      for (int it = 0; it < 80 && hi - lo > o.bracket_width; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double d_mid = f.eval(mid).dh;
        if ((d_mid < 0.0) == (d_lo < 0.0)) {
          lo = mid;
          d_lo = d_mid;
        } else {
          hi = mid;
        }
      }
      t = 0.5 * (lo + hi);
    }
    const auto v = f.eval(t);
    if (std::abs(v.h) <= o.tangency_tol) {
      RootRecord rec{wrap_angle(t), v.r, v.dh, RootClass::Degenerate};
      roots.push_back(rec);
    }
  }

  std::sort(roots.begin(), roots.end(),
            [](const RootRecord& a, const RootRecord& b) { return a.theta < b.theta; });
  std::vector<RootRecord> out;
  for (const auto& r : roots) {
    if (!out.empty() && std::abs(angle_diff(r.theta, out.back().theta)) <= 1e-10) continue;
    out.push_back(r);
  }
  if (out.size() > 1 && std::abs(angle_diff(out.front().theta, out.back().theta)) <= 1e-10)
    out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Continuation

enum class LossReason { None, Degenerate, Drift, NoConvergence, SlopeFlip };

inline std::string to_string(LossReason r) {
  switch (r) {
    case LossReason::None: return "none";
    case LossReason::Degenerate: return "degenerate";
    case LossReason::Drift: return "drift";
    case LossReason::NoConvergence: return "no-convergence";
    case LossReason::SlopeFlip: return "slope-flip";
  }
  return "?";
}

struct TrackResult {
  std::optional<RootRecord> root;
  LossReason loss = LossReason::None;

  bool lost() const { return !root.has_value(); }
};

// Newton continuation of a root of H_i from the previous angle. A non-zero
// slope_sign additionally requires the tracked root to keep that slope sign,
// so that continuation cannot hop onto the partner root of a fold.
inline TrackResult track_root(const PolarFrame& f, double theta_prev, const RootOptions& o,
                              int slope_sign = 0) {
  double t = theta_prev;
  auto v = f.eval(t);
  bool converged = false;
  for (int it = 0; it <= o.max_newton; ++it) {
    if (std::abs(v.h) <= o.root_tol) {
      converged = true;
      break;
    }
    if (it == o.max_newton) break;
    if (std::abs(v.dh) <= o.slope_tol) return {std::nullopt, LossReason::Degenerate};
    double step = -v.h / v.dh;
    step = std::clamp(step, -0.5 * o.max_drift, 0.5 * o.max_drift);
    // Backtrack until |H| decreases.
    double next = t + step;
    auto nv = f.eval(next);
    for (int bt = 0; bt < 20 && std::abs(nv.h) >= std::abs(v.h); ++bt) {
      step *= 0.5;
      next = t + step;
      nv = f.eval(next);
    }
    t = next;
    v = nv;
    if (std::abs(t - theta_prev) > o.max_drift) return {std::nullopt, LossReason::Drift};
  }
  if (!converged) return {std::nullopt, LossReason::NoConvergence};
  if (std::abs(v.dh) <= o.slope_tol) return {std::nullopt, LossReason::Degenerate};
  if (slope_sign != 0 && (v.dh < 0.0 ? -1 : 1) != slope_sign)
    return {std::nullopt, LossReason::SlopeFlip};
  return {RootRecord{wrap_angle(t), v.r, v.dh, classify_root(v.r, v.dh, o)}, LossReason::None};
}

inline TrackResult track_root(std::size_t i, std::span<const Vec2> x, double theta_prev,
                              const ModelParams& p, const RootOptions& o = {}, int slope_sign = 0) {
  return track_root(PolarFrame(i, x, p), theta_prev, o, slope_sign);
}

// ---------------------------------------------------------------------------
// Generalized (rest) solutions: v = 0 with some |s| <= 1 solving
// 0 = -(1/N) sum_j K' u_ij g(u_ij . s).

struct RestSolution {
  Vec2 direction{};
  double residual_norm = 0.0;
  bool on_boundary = false;  // |s| = 1: simultaneous root of H and R
};

inline std::vector<RestSolution> rest_solutions(std::size_t i, std::span<const Vec2> x,
                                                const ModelParams& p, const RootOptions& o = {}) {
  o.validate();
  const PolarFrame f(i, x, p);
  std::vector<RestSolution> found;
  auto add = [&](const Vec2& s, bool boundary) {
    for (const auto& r : found)
      if (norm(r.direction - s) <= 1e-8) return;
    found.push_back({s, norm(f.sum(s)), boundary});
  };

  for (const auto& root : enumerate_roots(i, x, p, o))
    if (std::abs(root.radius) <= o.rest_tol) add(unit_polar(root.theta), true);

  const int m = o.rest_grid;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      Vec2 s{{-1.0 + (2.0 * a + 1.0) / m, -1.0 + (2.0 * b + 1.0) / m}};
      if (norm(s) >= 1.0) continue;
      for (int it = 0; it < 50; ++it) {
        const Vec2 phi = f.sum(s);
        if (norm(phi) <= o.rest_tol) break;
        const auto j = f.sum_jacobian(s);
        const double det = j[0] * j[3] - j[1] * j[2];
        if (!(std::abs(det) > 1e-300)) break;
        const Vec2 ds{{(j[3] * phi[0] - j[1] * phi[1]) / det, (-j[2] * phi[0] + j[0] * phi[1]) / det}};
        s -= ds;
        if (!(norm(s) <= 1.0 + 1e-12)) break;
      }
      if (norm(s) <= 1.0 + 1e-12 && norm(f.sum(s)) <= o.rest_tol) add(s, false);
    }
  return found;
}

// ---------------------------------------------------------------------------
// Alpha-regularized fixed point: v = -(1/N) sum_j K' u_ij g(u_ij . v/(alpha + |v|)).

struct AlphaOptions {
  double omega = 0.5;
  int max_iter = 200000;
};

enum class AlphaCertificate { Moving, Rest };

struct AlphaResult {
  Vec2 velocity{};
  AlphaCertificate certificate = AlphaCertificate::Moving;
  Vec2 direction{};       // v/(alpha + |v|) at the last alpha
  double residual_norm;   // |F_i(x, v)| if Moving, |generalized sum at s| if Rest
  double alpha;
};

inline AlphaResult alpha_fixed_point(std::size_t i, std::span<const Vec2> x, const ModelParams& p,
                                     std::span<const double> alpha_schedule, Vec2 v0 = {},
                                     const AlphaOptions& opt = {}) {
  if (alpha_schedule.empty()) throw ConfigError("alpha schedule is empty");
  if (!(alpha_schedule.front() <= 1.0)) throw ConfigError("first alpha must be <= 1");
  for (std::size_t k = 0; k < alpha_schedule.size(); ++k) {
    if (!(alpha_schedule[k] > 0.0)) throw ConfigError("alpha values must be positive");
    if (k > 0 && !(alpha_schedule[k] < alpha_schedule[k - 1]))
      throw ConfigError("alpha schedule must be strictly decreasing");
  }
  const PolarFrame f(i, x, p);
  Vec2 v = v0;
  double alpha = alpha_schedule.front();
  for (const double a : alpha_schedule) {
    alpha = a;
    bool ok = false;
    for (int it = 0; it < opt.max_iter; ++it) {
      const Vec2 fv = f.sum(v * (1.0 / (a + norm(v))));
      if (norm(v - fv) <= a * 1e-3) {
        ok = true;
        break;
      }
      v = v * (1.0 - opt.omega) + fv * opt.omega;
    }
    if (!ok) throw NonConvergence("alpha fixed-point iteration did not converge", v[0], v[1]);
  }
  AlphaResult out;
  out.alpha = alpha;
  out.direction = v * (1.0 / (alpha + norm(v)));
  // |s| < 1 - 1e-3 means |v| < ~1e3 alpha: the iterate is collapsing onto rest.
  if (norm(out.direction) < 1.0 - 1e-3) {
    out.certificate = AlphaCertificate::Rest;
    out.velocity = Vec2{};
    out.residual_norm = norm(f.sum(out.direction));
  } else {
    out.certificate = AlphaCertificate::Moving;
    out.velocity = v;
    out.residual_norm = norm(f.sum(v * (1.0 / norm(v))) - v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linearization at an admissible root

using Mat2 = std::array<double, 4>;  // row-major

// Closed-form eigenvalues of D_v F_i at an admissible root: {-1, H'/r}.
inline std::pair<double, double> jacobian_eigenvalues(const RootRecord& root) {
  if (!(root.radius > 0.0)) throw DomainError("jacobian_eigenvalues: root is not admissible");
  return {-1.0, root.slope / root.radius};
}

// Central-difference Jacobian of v -> F_i(x, v).
inline Mat2 residual_jacobian_fd(std::size_t i, std::span<const Vec2> x, const Vec2& v,
                                 const ModelParams& p, double rel_step = 1e-6) {
  const double h = rel_step * std::max(norm(v), 1e-300);
  Mat2 j{};
  for (int c = 0; c < 2; ++c) {
    Vec2 vp = v, vm = v;
    vp[c] += h;
    vm[c] -= h;
    const Vec2 d = (residual<2>(i, x, vp, p) - residual<2>(i, x, vm, p)) * (0.5 / h);
    j[0 * 2 + c] = d[0];
    j[1 * 2 + c] = d[1];
  }
  return j;
}

inline double det2(const Mat2& m) { return m[0] * m[3] - m[1] * m[2]; }

// Real eigenvalues of a 2x2 matrix in ascending order; throws if complex.
inline std::pair<double, double> eigenvalues2(const Mat2& m) {
  const double tr = m[0] + m[3];
  const double disc = 0.25 * tr * tr - det2(m);
  if (disc < -1e-12 * (tr * tr + 1e-300)) throw DomainError("complex eigenvalues");
  const double sq = std::sqrt(std::max(0.0, disc));
  return {0.5 * tr - sq, 0.5 * tr + sq};
}

// Closed-form eigenvalues together with the finite-difference cross-check.
struct EigenCheck {
  std::pair<double, double> closed_form;
  std::pair<double, double> finite_difference;
};

inline EigenCheck jacobian_eigenvalues_verified(std::size_t i, std::span<const Vec2> x,
                                                const RootRecord& root, const ModelParams& p) {
  auto cf = jacobian_eigenvalues(root);
  if (cf.first > cf.second) std::swap(cf.first, cf.second);
  return {cf, eigenvalues2(residual_jacobian_fd(i, x, root.velocity(), p))};
}

}  // namespace aniso
