#pragma once

// The first-order (degenerate) model integrated along chosen root branches,
// with detection of both breakdown modes and frozen-adjoint jump selection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "aniso/errors.hpp"
#include "aniso/model.hpp"
#include "aniso/polar.hpp"
#include "aniso/relaxation.hpp"
#include "aniso/trajectory.hpp"
#include "aniso/vec.hpp"

namespace aniso {

struct SimParams {
  double dt = 1e-2;
  double t_end = 1.0;
  double mu_stop = 1e-7;
  double lambda_collide = 1e-6;
  int sample_every = 1;
  RootOptions roots{};
  int k_stop = 5;
  int max_bisections = 40;
  double micro_step = 0.0;  // post-jump configuration offset; 0 means dt
  double tau_max = 1e3;
  double adjoint_tol = 1e-10;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(mu_stop > 0.0)) throw ConfigError("mu_stop must be positive");
    if (!(lambda_collide > 0.0)) throw ConfigError("lambda_collide must be positive");
    if (sample_every < 1) throw ConfigError("sample_every must be >= 1");
    if (k_stop < 1) throw ConfigError("k_stop must be >= 1");
    if (max_bisections < 1 || max_bisections > 60) throw ConfigError("max_bisections must be in [1, 60]");
    if (micro_step < 0.0) throw ConfigError("micro_step must be non-negative");
    if (!(tau_max > 0.0 && adjoint_tol > 0.0)) throw ConfigError("adjoint limits must be positive");
    roots.validate();
  }
};

// Positions plus the root currently followed by each particle.
struct BranchState {
  double time = 0.0;
  std::vector<Vec2> positions;
  std::vector<RootRecord> roots;

  std::vector<Vec2> velocities() const {
    std::vector<Vec2> v;
    v.reserve(roots.size());
    for (const auto& r : roots) v.push_back(r.velocity());
    return v;
  }
  PhaseState<2> phase() const { return {time, positions, velocities()}; }
};

// Continuation of every particle's root at a new configuration. slope_sign
// may be empty (no sign constraint) or hold one entry per particle.
inline std::vector<TrackResult> gamma(std::span<const Vec2> x, std::span<const double> theta_prev,
                                      const ModelParams& p, const RootOptions& o = {},
                                      std::span<const int> slope_sign = {}) {
  if (theta_prev.size() != x.size()) throw ConfigError("one previous angle per particle required");
  std::vector<TrackResult> out;
  out.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.push_back(track_root(PolarFrame(i, x, p), theta_prev[i], o,
                             slope_sign.empty() ? 0 : slope_sign[i]));
  return out;
}

enum class SignalKind { None, RootLost, Stop, Collision };

struct StepSignal {
  SignalKind kind = SignalKind::None;
  std::size_t particle = 0;
  LossReason reason = LossReason::None;
};

struct StepOutcome {
  StepSignal signal;
  // End-of-step state. Filled on success, and also for a Stop signal raised
  // only at the step end (the roots there are still valid).
  BranchState next;
  bool has_next = false;
};

namespace detail {

inline int slope_sign_of(const RootRecord& r) { return r.slope < 0.0 ? -1 : 1; }

// Velocities of every particle at configuration xs, continued from theta.
inline StepSignal branch_velocities(std::span<const Vec2> xs, std::span<const double> theta,
                                    std::span<const int> sign, const ModelParams& p,
                                    const SimParams& sim, std::vector<RootRecord>& out) {
  if (min_pair_distance<2>(xs) <= sim.lambda_collide) return {SignalKind::Collision, 0};
  out.resize(xs.size());
  StepSignal stop{};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto tr = track_root(PolarFrame(i, xs, p), theta[i], sim.roots, sign[i]);
    if (tr.lost()) return {SignalKind::RootLost, i, tr.loss};
    out[i] = *tr.root;
    if (out[i].radius <= sim.mu_stop && stop.kind == SignalKind::None) stop = {SignalKind::Stop, i};
  }
  return stop;
}

}  // namespace detail

// Classical RK4 step of dx/dt = Gamma(x). Every stage continues the roots from
// the step-entry angles; any loss, stopping or collision aborts the step.
inline StepOutcome rk4_step(const BranchState& s, double h, const ModelParams& p,
                            const SimParams& sim) {
  const std::size_t n = s.positions.size();
  std::vector<double> theta(n);
  std::vector<int> sign(n);
  for (std::size_t i = 0; i < n; ++i) {
    theta[i] = s.roots[i].theta;
    sign[i] = detail::slope_sign_of(s.roots[i]);
  }
  StepOutcome out;
  const std::vector<Vec2> k1 = s.velocities();
  std::vector<Vec2> xs(n), k2(n), k3(n), k4(n);
  std::vector<RootRecord> roots;
  const std::vector<Vec2>* prev = &k1;
  const double c[3] = {0.5 * h, 0.5 * h, h};
  std::vector<Vec2>* ks[3] = {&k2, &k3, &k4};
  for (int st = 0; st < 3; ++st) {
    for (std::size_t i = 0; i < n; ++i) xs[i] = s.positions[i] + (*prev)[i] * c[st];
    out.signal = detail::branch_velocities(xs, theta, sign, p, sim, roots);
    if (out.signal.kind != SignalKind::None) return out;
    for (std::size_t i = 0; i < n; ++i) (*ks[st])[i] = roots[i].velocity();
    prev = ks[st];
  }
  for (std::size_t i = 0; i < n; ++i)
    xs[i] = s.positions[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
  out.signal = detail::branch_velocities(xs, theta, sign, p, sim, roots);
  if (out.signal.kind == SignalKind::None || out.signal.kind == SignalKind::Stop) {
    out.next = BranchState{s.time + h, xs, roots};
    out.has_next = true;
  }
  return out;
}

// Event draft: the breakdown localized in time, before jump selection.
struct EventDraft {
  BranchState at;  // state at the localized event time
  BreakdownEvent event;
};

// Bisects [0, h] for the last successful step length. Returns the draft, or
// an empty-particle draft with `progress` set when the failure was an
// artifact of the long step (continuation from far away) and the short step
// completes cleanly.
struct Localization {
  bool genuine = false;
  bool collision = false;
  BranchState progress;  // valid when !genuine
  EventDraft draft;
};

inline Localization detect_breakdown(const BranchState& s, double h, const StepOutcome& failed,
                                     const ModelParams& p, const SimParams& sim,
                                     std::span<const std::deque<double>> radius_history,
                                     bool force_genuine = false) {
  double lo = 0.0, hi = h;
  BranchState lo_state = s;
  StepOutcome hi_out = failed;
  for (int k = 0; k < sim.max_bisections; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) break;
    auto o = rk4_step(s, mid, p, sim);
    if (o.signal.kind == SignalKind::None) {
      lo = mid;
      lo_state = std::move(o.next);
    } else {
      hi = mid;
      hi_out = std::move(o);
    }
  }
  Localization loc;
  // A stop at the step end is a threshold crossing and is taken as is. Any
  // other signal must persist over the tiny remaining interval from the last
  // good state; otherwise it was an artifact of continuing over a long step.
  StepOutcome sig = std::move(hi_out);
  if (!(sig.signal.kind == SignalKind::Stop && sig.has_next)) {
    auto confirm = rk4_step(lo_state, hi - lo, p, sim);
    if (confirm.signal.kind == SignalKind::None && !force_genuine) {
      loc.progress = std::move(confirm.next);
      return loc;
    }
    if (confirm.signal.kind != SignalKind::None) sig = std::move(confirm);
  }
  if (sig.signal.kind == SignalKind::Collision) {
    loc.collision = true;
    loc.progress = lo_state;
    return loc;
  }
  loc.genuine = true;
  const std::size_t i = sig.signal.particle;
  auto& ev = loc.draft.event;
  ev.particle = i;
  const RootRecord& pre = lo_state.roots[i];
  if (sig.signal.kind == SignalKind::Stop && sig.has_next) {
    loc.draft.at = sig.next;
    ev.kind = BreakdownKind::Stopping;
    ev.theta_pre = sig.next.roots[i].theta;
    ev.r_pre = std::max(0.0, sig.next.roots[i].radius);
    // Genuine braking: radii strictly decreasing over the last k_stop steps.
    const auto& hist = radius_history[i];
    bool persistent = static_cast<int>(hist.size()) >= sim.k_stop + 1;
    for (std::size_t k = 1; persistent && k < hist.size(); ++k) persistent = hist[k] < hist[k - 1];
    ev.ambiguous = !persistent || std::abs(sig.next.roots[i].slope) <= 10.0 * sim.roots.slope_tol;
  } else {
    loc.draft.at = lo_state;
    ev.theta_pre = pre.theta;
    ev.r_pre = pre.radius;
    if (sig.signal.kind == SignalKind::Stop) {
      // Stop raised inside a stage.
      ev.kind = ev.r_pre <= sim.mu_stop ? BreakdownKind::Stopping : BreakdownKind::RootLoss;
      ev.ambiguous = true;
    } else {
      ev.kind = BreakdownKind::RootLoss;
      ev.ambiguous = pre.radius <= 10.0 * sim.mu_stop;
    }
  }
  ev.time = loc.draft.at.time;
  return loc;
}

// Frozen-adjoint selection. The adjoint flow runs at the configuration
// advanced by the micro-step along the pre-jump velocities, and the selected
// equilibrium is continued back to the event configuration, where the run
// resumes (positions stay continuous).
inline BreakdownEvent select_jump_frozen_adjoint(const EventDraft& draft, std::span<const Vec2> post_positions,
                                                 const ModelParams& p, const SimParams& sim,
                                                 RootRecord* resumed = nullptr) {
  const auto& ev0 = draft.event;
  const std::size_t i = ev0.particle;
  AdjointOptions ao;
  ao.r_floor = sim.mu_stop;
  ao.tau_max = sim.tau_max;
  ao.adjoint_tol = sim.adjoint_tol;
  ao.roots = sim.roots;
  const double r0 = std::max(ev0.r_pre, sim.mu_stop);
  const auto res = adjoint_flow(post_positions, unit_polar(ev0.theta_pre) * r0, i, p, ao);
  if (!res.converged())
    throw UnresolvedJump("adjoint flow for particle " + std::to_string(i + 1) + " at t=" +
                         std::to_string(ev0.time) + " ended with status " + to_string(res.status));
  if (res.root.classification != RootClass::StableAdmissible)
    throw UnresolvedJump("adjoint equilibrium is not a stable admissible root");

  const auto back = track_root(PolarFrame(i, draft.at.positions, p), res.root.theta, sim.roots, -1);
  if (back.lost() || back.root->classification != RootClass::StableAdmissible ||
      !(back.root->radius > sim.mu_stop))
    throw UnresolvedJump("selected root does not continue to the event configuration");
  BreakdownEvent ev = ev0;
  ev.theta_post = back.root->theta;
  ev.r_post = back.root->radius;
  if (resumed) *resumed = *back.root;
  return ev;
}

namespace detail {

// Post-jump configuration: the event state advanced by the micro-step along
// the pre-jump velocities, lengthened (up to 64 micro-steps) until the
// breaking branch is gone or inadmissible there.
inline std::vector<Vec2> post_jump_positions(const EventDraft& d, const ModelParams& p,
                                             const SimParams& sim) {
  const std::size_t i = d.event.particle;
  const auto v = d.at.velocities();
  const double base = sim.micro_step > 0.0 ? sim.micro_step : sim.dt;
  std::vector<Vec2> x(d.at.positions.size());
  for (double hm = base; hm <= 64.0 * base; hm *= 2.0) {
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = d.at.positions[k] + v[k] * hm;
    if (min_pair_distance<2>(std::span<const Vec2>(x)) <= sim.lambda_collide) break;
    const auto tr = track_root(PolarFrame(i, x, p), d.event.theta_pre, sim.roots,
                               slope_sign_of(d.at.roots[i]));
    if (tr.lost() || tr.root->radius <= sim.mu_stop) return x;
  }
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = d.at.positions[k] + v[k] * base;
  return x;
}

}  // namespace detail

// Integrates from admissible initial roots to sim.t_end.
inline TrajectoryLog run_degenerate(std::span<const Vec2> initial_positions,
                                    std::span<const RootRecord> initial_roots, const ModelParams& p,
                                    const SimParams& sim, double t0 = 0.0) {
  p.validate();
  sim.validate();
  check_shape(initial_positions, p);
  if (p.dimension != 2) throw UnsupportedDimension("degenerate simulation requires d = 2");
  if (initial_roots.size() != initial_positions.size())
    throw ConfigError("one initial root per particle required");

  const std::size_t n = initial_positions.size();
  BranchState s{t0, std::vector<Vec2>(initial_positions.begin(), initial_positions.end()), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const auto tr = track_root(PolarFrame(i, s.positions, p), initial_roots[i].theta, sim.roots,
                               detail::slope_sign_of(initial_roots[i]));
    if (tr.lost() || !tr.root->admissible() || std::abs(angle_diff(tr.root->theta, initial_roots[i].theta)) > 1e-6)
      throw ConfigError("initial root of particle " + std::to_string(i + 1) + " is not an admissible root");
    if (!(tr.root->radius > sim.mu_stop))
      throw ConfigError("initial root of particle " + std::to_string(i + 1) + " is below mu_stop");
    s.roots.push_back(*tr.root);
  }

  TrajectoryLog log;
  log.samples.push_back(s.phase());
  std::vector<std::deque<double>> history(n);
  auto push_history = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      history[i].push_back(s.roots[i].radius);
      while (static_cast<int>(history[i].size()) > sim.k_stop + 1) history[i].pop_front();
    }
  };
  push_history();

  const double dt = sim.dt;
  long accepted = 0;
  int stalled_events = 0;
  int tiny_progress = 0;
  auto sample = [&](bool force) {
    if ((force || accepted % sim.sample_every == 0) && s.time > log.samples.back().time)
      log.samples.push_back(s.phase());
  };

  while (s.time < sim.t_end - 1e-12 * dt) {
    double h = std::min(dt, sim.t_end - s.time);
    if (sim.t_end - (s.time + h) < 1e-9 * dt) h = sim.t_end - s.time;
    auto out = rk4_step(s, h, p, sim);
    if (out.signal.kind == SignalKind::None) {
      s = std::move(out.next);
      if (std::abs(s.time - sim.t_end) <= 1e-12 * std::max(1.0, std::abs(sim.t_end))) s.time = sim.t_end;
      ++accepted;
      stalled_events = 0;
      push_history();
      sample(false);
      continue;
    }
    // Localize; a collision is localized too, so the log ends just before it.
    auto loc = detect_breakdown(s, h, out, p, sim, history, tiny_progress >= 3);
    if (loc.collision) {
      s = std::move(loc.progress);
      sample(true);
      log.termination = Termination::CollisionGuard;
      log.message = "collision guard triggered near t=" + std::to_string(s.time);
      return log;
    }
    if (!loc.genuine) {
      tiny_progress = loc.progress.time - s.time < 1e-6 * dt ? tiny_progress + 1 : 0;
      s = std::move(loc.progress);
      ++accepted;
      push_history();
      sample(false);
      continue;
    }
    tiny_progress = 0;

    if (++stalled_events > static_cast<int>(4 * n)) {
      s = loc.draft.at;
      sample(true);
      log.termination = Termination::Error;
      log.message = "repeated breakdowns without progress near t=" + std::to_string(s.time);
      return log;
    }
    try {
      const auto post = detail::post_jump_positions(loc.draft, p, sim);
      RootRecord resumed;
      auto ev = select_jump_frozen_adjoint(loc.draft, post, p, sim, &resumed);
      if (!log.events.empty() && !(ev.time > log.events.back().time))
        ev.time = std::nextafter(log.events.back().time, INFINITY);
      s = loc.draft.at;
      s.time = ev.time;
      s.roots[ev.particle] = resumed;
      history[ev.particle].clear();
      log.events.push_back(ev);
      // Post-jump state at the event time; positions are those of the
      // pre-jump branch at the same instant.
      if (s.time > log.samples.back().time)
        log.samples.push_back(s.phase());
      else if (s.time == log.samples.back().time)
        log.samples.back() = s.phase();
      if (ev.ambiguous)
        log.warnings.push_back("ambiguous breakdown of particle " + std::to_string(ev.particle + 1) +
                               " at t=" + std::to_string(ev.time) + " resolved as " + to_string(ev.kind));
    } catch (const NumericalFailure& e) {
      s = loc.draft.at;
      sample(true);
      log.termination = Termination::Error;
      log.message = e.what();
      return log;
    }
  }
  sample(true);
  return log;
}

inline TrajectoryLog run_degenerate(const BranchState& initial, const ModelParams& p, const SimParams& sim) {
  return run_degenerate(initial.positions, initial.roots, p, sim, initial.time);
}

}  // namespace aniso
