#pragma once

// Scenario construction: seeded random swarms, the square non-uniqueness
// configuration and its verification, initial root policies, and long-run
// diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aniso/degenerate.hpp"
#include "aniso/errors.hpp"
#include "aniso/model.hpp"
#include "aniso/polar.hpp"
#include "aniso/trajectory.hpp"
#include "aniso/vec.hpp"

namespace aniso {

// SplitMix64 (Steele, Lea, Flood 2014). Doubles use the top 53 bits.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// `count` points uniform in [-box/2, box/2]^2, x then y per point.
inline std::vector<Vec2> seeded_positions(std::uint64_t seed, std::size_t count, double box) {
  if (!(box > 0.0)) throw ConfigError("box must be positive");
  if (count < 2) throw ConfigError("count must be >= 2");
  SplitMix64 g(seed);
  std::vector<Vec2> x(count);
  for (auto& p : x) {
    p[0] = box * (g.uniform() - 0.5);
    p[1] = box * (g.uniform() - 0.5);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Square configuration

// Radius where K' changes sign (repulsive below, attractive above); throws
// if the Morse kernel has no such change.
inline double kernel_sign_change_radius(const KernelParams& k) {
  k.validate();
  const double a = k.c_attract / k.l_attract, r = k.c_repulse / k.l_repulse;
  const double rate = 1.0 / k.l_repulse - 1.0 / k.l_attract;
  if (!(r > a) || !(rate > 0.0))
    throw ConfigError("kernel has no repulsive-to-attractive sign change of K'");
  return std::log(r / a) / rate;
}

inline double square_beta_residual(double beta, const KernelParams& k) {
  return kernel_deriv(beta, k) + 0.5 * std::sqrt(2.0) * kernel_deriv(std::sqrt(2.0) * beta, k);
}

// Side length beta of the square whose corners are an isotropic equilibrium:
// K'(beta) + (sqrt2/2) K'(sqrt2 beta) = 0 with K'(beta) < 0.
inline double find_square_beta(const KernelParams& k, double tol = 1e-14) {
  const double r0 = kernel_sign_change_radius(k);
  // Scan (0, r0] for the first sign change of the residual.
  constexpr int scan = 1000;
  double lo = 0.0, f_lo = square_beta_residual(0.0, k);
  double hi = -1.0;
  for (int m = 1; m <= scan; ++m) {
    const double b = r0 * m / scan;
    const double f = square_beta_residual(b, k);
    if ((f < 0.0) != (f_lo < 0.0) || f == 0.0) {
      hi = b;
      break;
    }
    lo = b;
    f_lo = f;
  }
  if (hi < 0.0) throw ConfigError("square construction: no sign change of the beta residual");
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double f = square_beta_residual(mid, k);
    if (std::abs(f) <= tol || !(mid > lo && mid < hi)) break;
    if ((f < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f;
    } else {
      hi = mid;
    }
  }
  // Pick the better endpoint if floating-point bisection stalled.
  for (const double c : {lo, hi})
    if (std::abs(square_beta_residual(c, k)) < std::abs(square_beta_residual(mid, k))) mid = c;
  if (!(std::abs(square_beta_residual(mid, k)) <= tol))
    throw ConfigError("square construction: beta residual above tolerance");
  if (!(kernel_deriv(mid, k) < 0.0)) throw ConfigError("square construction: K'(beta) is not repulsive");
  return mid;
}

struct SquareScenario {
  ModelParams model;
  double beta = 0.0;
  double rotation = 0.0;
  std::vector<Vec2> positions;  // corners (+,+), (-,+), (-,-), (+,-), rotated
};

// Four particles on the corners of a square of side beta, linear vision
// g(s) = (1 - s)/2.
inline SquareScenario build_square_scenario(const KernelParams& k, double rotation = 0.0,
                                            double beta = -1.0) {
  SquareScenario sq;
  sq.model.n_particles = 4;
  sq.model.dimension = 2;
  sq.model.kernel = k;
  sq.model.vision = VisionParams::linear(1.0, 1.0);
  sq.beta = beta > 0.0 ? beta : find_square_beta(k);
  sq.rotation = rotation;
  const double h = 0.5 * sq.beta;
  for (const Vec2 c : {Vec2{{h, h}}, Vec2{{-h, h}}, Vec2{{-h, -h}}, Vec2{{h, -h}}})
    sq.positions.push_back(rotate(c, rotation));
  return sq;
}

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double expected = 0.0;
};

struct NonuniquenessReport {
  std::vector<Check> checks;
  std::size_t generalized_per_particle[4] = {0, 0, 0, 0};

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
  std::size_t combinations() const {
    std::size_t c = 1;
    for (auto g : generalized_per_particle) c *= g;
    return c;
  }
};

inline double relative_error(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

// Checks the square against its closed-form structure: isotropic equilibrium,
// inward/outward admissible roots with the closed-form speed, and rest at s = 0.
inline NonuniquenessReport verify_nonuniqueness(const SquareScenario& sq, const RootOptions& o = {}) {
  NonuniquenessReport rep;
  const auto& p = sq.model;
  const auto& k = p.kernel;
  const std::span<const Vec2> x(sq.positions);
  const double scale = std::abs(kernel_deriv(sq.beta, k)) + std::abs(kernel_deriv(std::sqrt(2.0) * sq.beta, k));

  rep.checks.push_back({"beta residual", std::abs(square_beta_residual(sq.beta, k)) <= 1e-14,
                        square_beta_residual(sq.beta, k), 0.0});
  rep.checks.push_back({"K'(beta) repulsive", kernel_deriv(sq.beta, k) < 0.0, kernel_deriv(sq.beta, k), 0.0});
  rep.checks.push_back({"K'(sqrt2 beta) attractive", kernel_deriv(std::sqrt(2.0) * sq.beta, k) > 0.0,
                        kernel_deriv(std::sqrt(2.0) * sq.beta, k), 0.0});

  const double speed = std::sqrt(2.0) / 16.0 * (1.0 - std::sqrt(2.0) / 2.0) *
                       kernel_deriv(std::sqrt(2.0) * sq.beta, k) * std::sqrt(2.0);
  Vec2 center{};
  for (const auto& c : sq.positions) center += c * 0.25;

  for (std::size_t i = 0; i < 4; ++i) {
    const std::string tag = "particle " + std::to_string(i + 1) + ": ";
    const double iso = norm(isotropic_velocity<2>(i, x, p));
    rep.checks.push_back({tag + "isotropic equilibrium", iso <= 1e-12 * scale, iso, 0.0});

    const auto roots = enumerate_roots(i, x, p, o);
    std::vector<RootRecord> adm;
    for (const auto& r : roots)
      if (r.admissible()) adm.push_back(r);
    rep.checks.push_back({tag + "two admissible roots", adm.size() == 2, double(adm.size()), 2.0});

    const double out_angle = polar_angle(sq.positions[i] - center);
    const RootRecord* outward = nullptr;
    const RootRecord* inward = nullptr;
    for (const auto& r : adm) {
      if (std::abs(angle_diff(r.theta, out_angle)) <= 1e-9) outward = &r;
      if (std::abs(angle_diff(r.theta, out_angle + kPi)) <= 1e-9) inward = &r;
    }
    rep.checks.push_back({tag + "outward root", outward != nullptr, outward ? outward->theta : NAN, out_angle});
    rep.checks.push_back({tag + "inward root", inward != nullptr, inward ? inward->theta : NAN,
                          wrap_angle(out_angle + kPi)});
    if (outward)
      rep.checks.push_back({tag + "outward speed", relative_error(outward->radius, speed) <= 1e-10,
                            outward->radius, speed});
    if (outward && inward)
      rep.checks.push_back({tag + "inward/outward antisymmetry",
                            norm(outward->velocity() + inward->velocity()) <= 1e-10 * speed,
                            norm(outward->velocity() + inward->velocity()), 0.0});

    const auto rest = rest_solutions(i, x, p, o);
    bool zero_rest = false;
    for (const auto& r : rest) zero_rest = zero_rest || (!r.on_boundary && norm(r.direction) <= 1e-8);
    rep.checks.push_back({tag + "rest solution at s = 0", zero_rest && rest.size() == 1,
                          double(rest.size()), 1.0});
    rep.generalized_per_particle[i] = adm.size() + rest.size();
  }
  rep.checks.push_back({"81 generalized combinations", rep.combinations() == 81,
                        double(rep.combinations()), 81.0});
  return rep;
}

// ---------------------------------------------------------------------------
// Initial root policies

enum class RootPolicyKind { MaxRadiusStable, Index, Explicit };

struct RootPolicy {
  RootPolicyKind kind = RootPolicyKind::MaxRadiusStable;
  std::vector<std::size_t> indices;  // Index: into the admissible roots sorted by angle
  std::vector<double> angles;        // Explicit
};

inline std::vector<RootRecord> admissible_roots(std::size_t i, std::span<const Vec2> x,
                                                const ModelParams& p, const RootOptions& o = {}) {
  std::vector<RootRecord> adm;
  for (const auto& r : enumerate_roots(i, x, p, o))
    if (r.admissible()) adm.push_back(r);
  return adm;
}

inline std::vector<RootRecord> choose_initial_roots(std::span<const Vec2> x, const ModelParams& p,
                                                    const RootPolicy& policy, const RootOptions& o = {}) {
  const std::size_t n = x.size();
  if (policy.kind == RootPolicyKind::Index && policy.indices.size() != n)
    throw ConfigError("index root policy needs one index per particle");
  if (policy.kind == RootPolicyKind::Explicit && policy.angles.size() != n)
    throw ConfigError("explicit root policy needs one angle per particle");
  std::vector<RootRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string tag = "particle " + std::to_string(i + 1);
    switch (policy.kind) {
      case RootPolicyKind::MaxRadiusStable: {
        const RootRecord* best = nullptr;
        const auto adm = admissible_roots(i, x, p, o);
        for (const auto& r : adm)
          if (r.classification == RootClass::StableAdmissible && (!best || r.radius > best->radius)) best = &r;
        if (!best) throw ConfigError(tag + " has no stable admissible root");
        out.push_back(*best);
        break;
      }
      case RootPolicyKind::Index: {
        const auto adm = admissible_roots(i, x, p, o);
        if (policy.indices[i] >= adm.size())
          throw ConfigError(tag + ": root index out of range (" + std::to_string(adm.size()) + " admissible)");
        out.push_back(adm[policy.indices[i]]);
        break;
      }
      case RootPolicyKind::Explicit: {
        const auto tr = track_root(PolarFrame(i, x, p), policy.angles[i], o);
        if (tr.lost() || !tr.root->admissible() || std::abs(angle_diff(tr.root->theta, policy.angles[i])) > 1e-6)
          throw ConfigError(tag + ": explicit angle is not an admissible root");
        out.push_back(*tr.root);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct DiagnosticRow {
  double time;
  double max_speed;
  Vec2 center_of_mass;
  double energy;
};

inline std::vector<DiagnosticRow> long_run_diagnostics(const TrajectoryLog& log, const ModelParams& p) {
  if (log.samples.empty()) throw ConfigError("empty trajectory log");
  std::vector<DiagnosticRow> rows;
  rows.reserve(log.samples.size());
  for (const auto& s : log.samples) {
    DiagnosticRow r{s.time, 0.0, {}, energy<2>(s.positions, p)};
    for (const auto& v : s.velocities) r.max_speed = std::max(r.max_speed, norm(v));
    for (const auto& x : s.positions) r.center_of_mass += x * (1.0 / static_cast<double>(s.positions.size()));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace aniso
