#pragma once

// Relaxation (inertial) regularization of the implicit model,
//
//   dx_i/dt = v_i,   eps dv_i/dt = F_i(x, v_i),
//
// the fictitious-time adjoint flow dv/dtau = F_i(x*, v) at a frozen
// configuration, and eps-sweeps against a first-order reference run.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "aniso/errors.hpp"
#include "aniso/model.hpp"
#include "aniso/polar.hpp"
#include "aniso/trajectory.hpp"
#include "aniso/vec.hpp"

namespace aniso {

struct EpsParams {
  double epsilon = 1e-3;
  double dt_factor = 0.1;  // dt = dt_factor * epsilon
  double t_end = 1.0;
  double v_floor = 1e-12;  // direction v/max(|v|, v_floor)
  double lambda_collide = 1e-6;
  int sample_every = 10;
  double steep_threshold = 1.0;  // max |dv/dt| above which every step is sampled

  double dt() const { return dt_factor * epsilon; }

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(dt_factor > 0.0 && dt_factor <= 0.2))
      throw ConfigError("dt_factor must lie in (0, 0.2] so that dt <= eps/5");
    if (!(v_floor > 0.0)) throw ConfigError("v_floor must be positive");
    if (!(lambda_collide > 0.0)) throw ConfigError("lambda_collide must be positive");
    if (sample_every < 1) throw ConfigError("sample_every must be >= 1");
  }
};

struct EpsRates {
  std::vector<Vec2> dx;
  std::vector<Vec2> dv;
};

namespace detail {

// dv/dt of the relaxation system written into `dv`; dx/dt is v itself.
inline void eps_accel(std::span<const Vec2> x, std::span<const Vec2> v, const ModelParams& p,
                      const EpsParams& e, std::span<Vec2> dv) {
  const std::size_t n = x.size();
  const double inv_n = 1.0 / static_cast<double>(p.n_particles);
  std::array<Vec2, 64> dir_small;
  std::vector<Vec2> dir_big;
  Vec2* dir = dir_small.data();
  if (n > dir_small.size()) {
    dir_big.resize(n);
    dir = dir_big.data();
  }
  for (std::size_t i = 0; i < n; ++i) {
    dir[i] = v[i] * (1.0 / std::max(norm(v[i]), e.v_floor));
    dv[i] = Vec2{};
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec2 d = x[i] - x[j];
      const double r = norm(d);
      if (!(r > 0.0)) throw DomainError("coincident particle positions");
      const Vec2 u = d * (1.0 / r);
      const double f = kernel_deriv(r, p.kernel);
      dv[i] += u * (f * vision_weight(dot(u, dir[i]), p.vision));
      dv[j] -= u * (f * vision_weight(-dot(u, dir[j]), p.vision));
    }
  const double inv_eps = 1.0 / e.epsilon;
  for (std::size_t i = 0; i < n; ++i) dv[i] = (dv[i] * (-inv_n) - v[i]) * inv_eps;
}

// Bound on |D_v F_i| used to keep explicit RK4 inside its stability region
// when a particle's speed is small and its direction turns fast.
inline double eps_stiffness(std::span<const Vec2> x, std::span<const Vec2> v, const ModelParams& p,
                            const EpsParams& e) {
  const double gsup = vision_weight_deriv_sup(p.vision);
  const double inv_n = 1.0 / static_cast<double>(p.n_particles);
  double worst = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double fsum = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j)
      if (j != i) fsum += std::abs(kernel_deriv(norm(x[i] - x[j]), p.kernel));
    worst = std::max(worst, 1.0 + inv_n * fsum * gsup / std::max(norm(v[i]), e.v_floor));
  }
  return worst;
}

}  // namespace detail

inline EpsRates eps_rhs(std::span<const Vec2> x, std::span<const Vec2> v, const ModelParams& p,
                        const EpsParams& e) {
  check_shape(x, p);
  if (v.size() != x.size()) throw ConfigError("velocity count does not match positions");
  EpsRates out{std::vector<Vec2>(v.begin(), v.end()), std::vector<Vec2>(v.size())};
  detail::eps_accel(x, v, p, e, out.dv);
  return out;
}

inline EpsRates eps_rhs(const PhaseState<2>& s, const ModelParams& p, const EpsParams& e) {
  return eps_rhs(s.positions, s.velocities, p, e);
}

struct RelaxationOptions {
  // When non-empty, samples are taken exactly at these (increasing) times and
  // nowhere else; steps are shortened to land on them.
  std::vector<double> output_times;
  double stability_limit = 1.0;  // max dt * |D_v F| / eps per RK4 substep
  long max_substeps = 10'000'000;
};

namespace detail {

struct EpsWork {
  std::vector<Vec2> x, v, kx[4], kv[4];
  explicit EpsWork(std::size_t n) : x(n), v(n) {
    for (auto& k : kx) k.resize(n);
    for (auto& k : kv) k.resize(n);
  }
};

inline void eps_rk4(std::vector<Vec2>& x, std::vector<Vec2>& v, double h, const ModelParams& p,
                    const EpsParams& e, EpsWork& w) {
  const std::size_t n = x.size();
  const double c[4] = {0.0, 0.5 * h, 0.5 * h, h};
  for (int s = 0; s < 4; ++s) {
    if (s == 0) {
      w.x = x;
      w.v = v;
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        w.x[i] = x[i] + w.kx[s - 1][i] * c[s];
        w.v[i] = v[i] + w.kv[s - 1][i] * c[s];
      }
    }
    w.kx[s] = w.v;
    eps_accel(w.x, w.v, p, e, w.kv[s]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    x[i] += (w.kx[0][i] + 2.0 * w.kx[1][i] + 2.0 * w.kx[2][i] + w.kx[3][i]) * (h / 6.0);
    v[i] += (w.kv[0][i] + 2.0 * w.kv[1][i] + 2.0 * w.kv[2][i] + w.kv[3][i]) * (h / 6.0);
  }
}

}  // namespace detail

// Explicit RK4 on the full relaxation system with base step dt_factor * eps.
// A base step is split into substeps whenever the local velocity Jacobian
// bound would put RK4 outside its stability interval (speeds near zero).
inline TrajectoryLog run_relaxation(const PhaseState<2>& initial, const ModelParams& p,
                                    const EpsParams& e, const RelaxationOptions& opt = {}) {
  p.validate();
  e.validate();
  check_shape<2>(initial.positions, p);
  if (initial.velocities.size() != initial.positions.size())
    throw ConfigError("initial velocities missing");

  TrajectoryLog log;
  std::vector<Vec2> x = initial.positions, v = initial.velocities;
  const std::size_t n = x.size();
  detail::EpsWork work(n);
  std::vector<Vec2> acc(n);
  std::vector<double> slow_since(n, -1.0);
  std::vector<bool> warned(n, false);
  double t = initial.time;
  const double dt = e.dt();
  const bool fixed_outputs = !opt.output_times.empty();
  std::size_t next_out = 0;
  while (fixed_outputs && next_out < opt.output_times.size() &&
         opt.output_times[next_out] < t - 1e-12 * dt)
    ++next_out;

  auto record = [&](double time) {
    if (!log.samples.empty() && !(time > log.samples.back().time)) return;
    log.samples.push_back(PhaseState<2>{time, x, v});
  };
  if (!fixed_outputs || (next_out < opt.output_times.size() &&
                         std::abs(opt.output_times[next_out] - t) <= 1e-9 * dt)) {
    record(t);
    if (fixed_outputs) ++next_out;
  }

  long step = 0;
  const double t_end = fixed_outputs ? std::min(e.t_end, opt.output_times.back()) : e.t_end;
  while (t < t_end - 1e-12 * dt) {
    double target = std::min(t + dt, t_end);
    if (t_end - target < 1e-6 * dt) target = t_end;
    if (fixed_outputs && next_out < opt.output_times.size()) {
      const double o = opt.output_times[next_out];
      if (o < target || o - target < 1e-6 * dt) target = o;
    }
    // Substepping.
    long substeps = 0;
    while (t < target) {
      const double stiff = detail::eps_stiffness(x, v, p, e);
      double h = std::min(target - t, opt.stability_limit * e.epsilon / stiff);
      if (target - (t + h) < 1e-9 * dt) h = target - t;
      detail::eps_rk4(x, v, h, p, e, work);
      t = (h == target - t) ? target : t + h;
      if (++substeps > opt.max_substeps) {
        log.termination = Termination::Error;
        log.message = "substep limit exceeded near t=" + std::to_string(t);
        record(t);
        return log;
      }
    }
    ++step;

    if (min_pair_distance<2>(x) <= e.lambda_collide) {
      log.termination = Termination::CollisionGuard;
      log.message = "collision guard at t=" + std::to_string(t);
      record(t);
      return log;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (norm(v[i]) < e.v_floor) {
        if (slow_since[i] < 0.0) slow_since[i] = t;
        if (!warned[i] && t - slow_since[i] > 100.0 * e.epsilon) {
          warned[i] = true;
          log.warnings.push_back("particle " + std::to_string(i + 1) +
                                 " below v_floor for more than 100 eps near t=" + std::to_string(t));
        }
      } else {
        slow_since[i] = -1.0;
      }
    }

    if (fixed_outputs) {
      if (next_out < opt.output_times.size() &&
          std::abs(opt.output_times[next_out] - t) <= 1e-9 * std::max(1.0, std::abs(t))) {
        record(opt.output_times[next_out]);
        ++next_out;
      }
    } else {
      bool steep = false;
      if (step % e.sample_every != 0) {
        detail::eps_accel(x, v, p, e, acc);
        for (const auto& a : acc) steep = steep || norm(a) > e.steep_threshold;
      }
      if (steep || step % e.sample_every == 0 || t >= t_end) record(t);
    }
  }
  if (!fixed_outputs && log.samples.back().time < t) record(t);
  return log;
}

// ---------------------------------------------------------------------------
// Adjoint flow

struct AdjointOptions {
  double r_floor = 1e-7;
  double adjoint_tol = 1e-10;
  double tau_max = 1e3;
  double dtau_max = 1.0;
  double rtol = 1e-10;
  double atol = 1e-13;  // relative to the force scale of the frozen particle
  int settle_steps = 10;
  long max_steps = 2'000'000;
  bool record_trace = false;
  RootOptions roots{};
};

enum class AdjointStatus { Converged, TauLimit, RestTrap, NotStable };

inline std::string to_string(AdjointStatus s) {
  switch (s) {
    case AdjointStatus::Converged: return "converged";
    case AdjointStatus::TauLimit: return "tau-limit";
    case AdjointStatus::RestTrap: return "rest-trap";
    case AdjointStatus::NotStable: return "not-stable";
  }
  return "?";
}

struct AdjointSample {
  double tau, theta, r;
};

struct AdjointResult {
  AdjointStatus status = AdjointStatus::TauLimit;
  RootRecord root{};  // polished equilibrium when Converged
  double tau = 0.0;
  long steps = 0;
  std::vector<AdjointSample> trace;

  bool converged() const { return status == AdjointStatus::Converged; }
};

namespace detail {

// Dormand-Prince 5(4) coefficients.
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace detail

// Integrates dv/dtau = F_i(x*, v) (equivalently dtheta/dtau = H/r,
// dr/dtau = -r + R) from v0 until the polar rates stay below adjoint_tol for
// settle_steps consecutive steps. The equilibrium is then Newton-polished on H.
inline AdjointResult adjoint_flow(std::span<const Vec2> frozen, const Vec2& v0, std::size_t particle,
                                  const ModelParams& p, const AdjointOptions& o = {}) {
  const PolarFrame f(particle, frozen, p);
  if (!(norm(v0) >= o.r_floor * (1.0 - 1e-12))) throw DomainError("adjoint_flow: |v0| below r_floor");
  const double scale = std::max(f.force_scale(), 1e-300);
  const double atol = o.atol * scale;

  auto rhs = [&](const Vec2& v) {
    const double s = norm(v);
    return f.sum(v * (1.0 / std::max(s, 1e-300))) - v;
  };
  // Polar rates at v, and a bound on |D_v F| there for the step cap.
  double lipschitz = 1.0;
  auto rates = [&](const Vec2& v) {
    const double r = norm(v);
    const auto pv = f.eval(polar_angle(v));
    lipschitz = 1.0 + (std::abs(pv.dh) + std::abs(pv.h) + std::abs(pv.dr)) / r;
    return std::abs(pv.h) / r + std::abs(pv.r - r);
  };

  AdjointResult out;
  Vec2 v = v0;
  double tau = 0.0, h = std::min(o.dtau_max, 1e-3);
  int settled = 0;
  double below_floor_since = -1.0;
  long below_floor_steps = 0;
  using C = detail::Dopri5;
  Vec2 k1 = rhs(v);
  if (o.record_trace) out.trace.push_back({tau, polar_angle(v), norm(v)});
  while (tau < o.tau_max && out.steps < o.max_steps) {
    // Past the real stability interval of the method the controller chatters
    // at tolerance level and the rates never settle.
    h = std::min({h, o.dtau_max, 2.5 / lipschitz, o.tau_max - tau});
    const Vec2 k2 = rhs(v + k1 * (h * C::a21));
    const Vec2 k3 = rhs(v + (k1 * C::a31 + k2 * C::a32) * h);
    const Vec2 k4 = rhs(v + (k1 * C::a41 + k2 * C::a42 + k3 * C::a43) * h);
    const Vec2 k5 = rhs(v + (k1 * C::a51 + k2 * C::a52 + k3 * C::a53 + k4 * C::a54) * h);
    const Vec2 k6 = rhs(v + (k1 * C::a61 + k2 * C::a62 + k3 * C::a63 + k4 * C::a64 + k5 * C::a65) * h);
    const Vec2 vn = v + (k1 * C::b1 + k3 * C::b3 + k4 * C::b4 + k5 * C::b5 + k6 * C::b6) * h;
    const Vec2 k7 = rhs(vn);
    const Vec2 err = (k1 * C::e1 + k3 * C::e3 + k4 * C::e4 + k5 * C::e5 + k6 * C::e6 + k7 * C::e7) * h;
    double en = 0.0;
    for (int c = 0; c < 2; ++c)
      en = std::max(en, std::abs(err[c]) / (atol + o.rtol * std::max(std::abs(v[c]), std::abs(vn[c]))));
    if (!(en <= 1.0)) {
      h *= std::max(0.1, 0.9 * std::pow(std::max(en, 1e-300), -0.2));
      if (h < 1e-300) break;
      continue;
    }
    tau += h;
    v = vn;
    k1 = k7;
    ++out.steps;
    h *= std::min(5.0, 0.9 * std::pow(std::max(en, 1e-10), -0.2));
    if (o.record_trace) out.trace.push_back({tau, polar_angle(v), norm(v)});

    const double r = norm(v);
    if (r < o.r_floor) {
      if (below_floor_since < 0.0) below_floor_since = tau;
      // Chattering through v = 0 collapses the step size, so a long stay is
      // also measured in steps.
      if (tau - below_floor_since > 1.0 || ++below_floor_steps > 1000) {
        out.status = AdjointStatus::RestTrap;
        out.tau = tau;
        return out;
      }
      settled = 0;
      continue;
    }
    below_floor_since = -1.0;
    below_floor_steps = 0;
    if (rates(v) <= o.adjoint_tol) {
      if (++settled >= o.settle_steps) {
        out.status = AdjointStatus::Converged;
        break;
      }
    } else {
      settled = 0;
    }
  }
  out.tau = tau;
  if (out.status != AdjointStatus::Converged) return out;

  auto polished = track_root(f, polar_angle(v), o.roots);
  if (polished.lost() || !(polished.root->radius > 0.0) || !(polished.root->slope < 0.0)) {
    out.status = AdjointStatus::NotStable;
    out.root = f.record(polar_angle(v), o.roots);
    return out;
  }
  out.root = *polished.root;
  return out;
}

// ---------------------------------------------------------------------------
// Epsilon sweep

struct SweepRow {
  double epsilon;
  double err_x;
  double err_v;
  double order;  // empirical order of err_x against the previous row; NaN for the first
};

struct SweepTable {
  std::vector<SweepRow> rows;
  bool partial = false;  // reference run terminated before t_end
  std::vector<std::string> notes;
};

// Runs the relaxation system for each eps from the reference's initial state
// and measures sup-norm deviations at the reference sample times, skipping
// samples within `jump_exclusion * eps` of a reference event. Velocity errors
// additionally skip the initial layer [t0, t0 + jump_exclusion * eps].
inline SweepTable sweep_epsilon(const PhaseState<2>& initial, const ModelParams& p,
                                std::span<const double> eps_list, const TrajectoryLog& reference,
                                double jump_exclusion = 50.0, EpsParams base = {}) {
  if (reference.samples.empty()) throw ConfigError("reference log is empty");
  for (std::size_t k = 1; k < eps_list.size(); ++k)
    if (!(eps_list[k] < eps_list[k - 1])) throw ConfigError("eps list must be decreasing");
  SweepTable table;
  table.partial = reference.termination != Termination::ReachedTEnd;
  if (table.partial) table.notes.push_back("reference terminated: " + to_string(reference.termination));

  std::vector<double> times;
  for (const auto& s : reference.samples) times.push_back(s.time);

  for (const double eps : eps_list) {
    EpsParams e = base;
    e.epsilon = eps;
    e.t_end = times.back();
    RelaxationOptions ro;
    ro.output_times = times;
    const auto run = run_relaxation(initial, p, e, ro);
    const double excl = jump_exclusion * eps;
    double ex = 0.0, ev = 0.0;
    for (std::size_t k = 0, m = 0; k < reference.samples.size() && m < run.samples.size(); ++k) {
      const auto& ref = reference.samples[k];
      while (m < run.samples.size() && run.samples[m].time < ref.time - 1e-12) ++m;
      if (m >= run.samples.size()) break;
      const auto& got = run.samples[m];
      if (std::abs(got.time - ref.time) > 1e-9) continue;
      bool near_event = false;
      for (const auto& ev_ref : reference.events)
        near_event = near_event || std::abs(ref.time - ev_ref.time) <= excl;
      if (near_event) continue;
      for (std::size_t i = 0; i < ref.positions.size(); ++i) {
        ex = std::max(ex, norm(got.positions[i] - ref.positions[i]));
        if (ref.time > initial.time + excl) ev = std::max(ev, norm(got.velocities[i] - ref.velocities[i]));
      }
    }
    if (run.termination != Termination::ReachedTEnd) {
      table.partial = true;
      table.notes.push_back("eps=" + std::to_string(eps) + " run terminated: " + to_string(run.termination));
    }
    double order = std::numeric_limits<double>::quiet_NaN();
    if (!table.rows.empty()) {
      const auto& prev = table.rows.back();
      order = std::log(prev.err_x / ex) / std::log(prev.epsilon / eps);
    }
    table.rows.push_back({eps, ex, ev, order});
  }
  return table;
}

}  // namespace aniso
