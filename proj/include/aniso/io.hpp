#pragma once

// Scenario files (JSON) and run outputs: trajectory CSV, event JSON Lines,
// summary JSON.

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "aniso/degenerate.hpp"
#include "aniso/errors.hpp"
#include "aniso/model.hpp"
#include "aniso/relaxation.hpp"
#include "aniso/scenarios.hpp"
#include "aniso/trajectory.hpp"

namespace aniso {

using json = nlohmann::json;

struct SeededPositions {
  std::uint64_t seed = 0;
  std::size_t count = 4;
  double box = 4.0;
};

struct ScenarioSpec {
  std::string name;
  ModelParams model{};
  std::variant<std::vector<Vec2>, SeededPositions> initial_positions;
  RootPolicy root_policy{};
  SimParams sim{};
  std::optional<EpsParams> eps;

  std::vector<Vec2> positions() const {
    if (const auto* e = std::get_if<std::vector<Vec2>>(&initial_positions)) return *e;
    const auto& s = std::get<SeededPositions>(initial_positions);
    return seeded_positions(s.seed, s.count, s.box);
  }
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + std::string(key) + "' in " + where);
  }
}

inline VisionForm parse_form(const std::string& s) {
  if (s == "tanh") return VisionForm::Tanh;
  if (s == "linear") return VisionForm::Linear;
  if (s == "uniform") return VisionForm::Uniform;
  throw ConfigError("unknown vision form '" + s + "'");
}

}  // namespace detail

inline ScenarioSpec parse_scenario(const json& j) {
  using detail::read;
  detail::reject_unknown(j, {"name", "model", "initial_positions", "initial_root_policy", "sim", "eps"}, "scenario");
  ScenarioSpec s;
  if (!j.contains("name") || !j["name"].is_string()) throw ConfigError("scenario needs a string 'name'");
  s.name = j["name"].get<std::string>();

  if (j.contains("model")) {
    const auto& m = j["model"];
    detail::reject_unknown(m, {"n_particles", "dimension", "kernel", "vision"}, "model");
    read(m, "n_particles", s.model.n_particles, "model");
    read(m, "dimension", s.model.dimension, "model");
    if (m.contains("kernel")) {
      const auto& k = m["kernel"];
      detail::reject_unknown(k, {"c_attract", "c_repulse", "l_attract", "l_repulse"}, "kernel");
      read(k, "c_attract", s.model.kernel.c_attract, "kernel");
      read(k, "c_repulse", s.model.kernel.c_repulse, "kernel");
      read(k, "l_attract", s.model.kernel.l_attract, "kernel");
      read(k, "l_repulse", s.model.kernel.l_repulse, "kernel");
    }
    if (m.contains("vision")) {
      const auto& v = m["vision"];
      detail::reject_unknown(v, {"form", "steepness", "width"}, "vision");
      std::string form = to_string(VisionForm::Tanh);
      double a = s.model.vision.steepness, b = s.model.vision.width;
      read(v, "form", form, "vision");
      read(v, "steepness", a, "vision");
      read(v, "width", b, "vision");
      switch (detail::parse_form(form)) {
        case VisionForm::Tanh: s.model.vision = VisionParams::tanh(a, b); break;
        case VisionForm::Linear: s.model.vision = VisionParams::linear(a, b); break;
        case VisionForm::Uniform: s.model.vision = VisionParams::uniform(); break;
      }
    }
  }
  s.model.validate();

  if (!j.contains("initial_positions")) throw ConfigError("scenario needs 'initial_positions'");
  {
    const auto& ip = j["initial_positions"];
    detail::reject_unknown(ip, {"explicit", "seed", "count", "box"}, "initial_positions");
    const bool has_explicit = ip.contains("explicit");
    const bool has_seed = ip.contains("seed") || ip.contains("count") || ip.contains("box");
    if (has_explicit == has_seed)
      throw ConfigError("initial_positions needs exactly one of 'explicit' or {seed, count, box}");
    if (has_explicit) {
      std::vector<Vec2> pts;
      for (const auto& q : ip["explicit"]) {
        if (!q.is_array() || q.size() != 2 || !q[0].is_number() || !q[1].is_number())
          throw ConfigError("explicit positions must be [x, y] pairs");
        pts.push_back(Vec2{{q[0].get<double>(), q[1].get<double>()}});
      }
      if (pts.size() != s.model.n_particles) throw ConfigError("explicit position count does not match n_particles");
      s.initial_positions = pts;
    } else {
      if (!ip.contains("seed") || !ip.contains("count") || !ip.contains("box"))
        throw ConfigError("seeded initial_positions needs seed, count and box");
      SeededPositions sp;
      read(ip, "seed", sp.seed, "initial_positions");
      read(ip, "count", sp.count, "initial_positions");
      read(ip, "box", sp.box, "initial_positions");
      if (sp.count != s.model.n_particles) throw ConfigError("seeded count does not match n_particles");
      if (!(sp.box > 0.0)) throw ConfigError("box must be positive");
      s.initial_positions = sp;
    }
  }

  if (j.contains("initial_root_policy")) {
    const auto& rp = j["initial_root_policy"];
    detail::reject_unknown(rp, {"kind", "indices", "angles"}, "initial_root_policy");
    std::string kind = "max_radius_stable";
    read(rp, "kind", kind, "initial_root_policy");
    if (kind == "max_radius_stable") {
      s.root_policy.kind = RootPolicyKind::MaxRadiusStable;
    } else if (kind == "index") {
      s.root_policy.kind = RootPolicyKind::Index;
      read(rp, "indices", s.root_policy.indices, "initial_root_policy");
    } else if (kind == "explicit") {
      s.root_policy.kind = RootPolicyKind::Explicit;
      read(rp, "angles", s.root_policy.angles, "initial_root_policy");
    } else {
      throw ConfigError("unknown root policy kind '" + kind + "'");
    }
  }

  if (j.contains("sim")) {
    const auto& m = j["sim"];
    detail::reject_unknown(m, {"dt", "t_end", "mu_stop", "lambda_collide", "sample_every", "k_stop",
                               "max_bisections", "micro_step", "tau_max", "adjoint_tol", "roots"},
                           "sim");
    auto& q = s.sim;
    read(m, "dt", q.dt, "sim");
    read(m, "t_end", q.t_end, "sim");
    read(m, "mu_stop", q.mu_stop, "sim");
    read(m, "lambda_collide", q.lambda_collide, "sim");
    read(m, "sample_every", q.sample_every, "sim");
    read(m, "k_stop", q.k_stop, "sim");
    read(m, "max_bisections", q.max_bisections, "sim");
    read(m, "micro_step", q.micro_step, "sim");
    read(m, "tau_max", q.tau_max, "sim");
    read(m, "adjoint_tol", q.adjoint_tol, "sim");
    if (m.contains("roots")) {
      const auto& r = m["roots"];
      detail::reject_unknown(r, {"grid_n", "root_tol", "slope_tol", "tangency_tol", "bracket_width",
                                 "max_newton", "max_drift", "rest_tol", "rest_grid"},
                             "roots");
      auto& o = q.roots;
      read(r, "grid_n", o.grid_n, "roots");
      read(r, "root_tol", o.root_tol, "roots");
      read(r, "slope_tol", o.slope_tol, "roots");
      read(r, "tangency_tol", o.tangency_tol, "roots");
      read(r, "bracket_width", o.bracket_width, "roots");
      read(r, "max_newton", o.max_newton, "roots");
      read(r, "max_drift", o.max_drift, "roots");
      read(r, "rest_tol", o.rest_tol, "roots");
      read(r, "rest_grid", o.rest_grid, "roots");
    }
  }
  s.sim.validate();

  if (j.contains("eps")) {
    const auto& m = j["eps"];
    detail::reject_unknown(m, {"epsilon", "dt_factor", "t_end", "v_floor", "lambda_collide", "sample_every",
                               "steep_threshold"},
                           "eps");
    EpsParams e;
    e.t_end = s.sim.t_end;
    read(m, "epsilon", e.epsilon, "eps");
    read(m, "dt_factor", e.dt_factor, "eps");
    read(m, "t_end", e.t_end, "eps");
    read(m, "v_floor", e.v_floor, "eps");
    read(m, "lambda_collide", e.lambda_collide, "eps");
    read(m, "sample_every", e.sample_every, "eps");
    read(m, "steep_threshold", e.steep_threshold, "eps");
    e.validate();
    s.eps = e;
  }
  if (s.root_policy.kind == RootPolicyKind::Explicit)
    (void)choose_initial_roots(s.positions(), s.model, s.root_policy, s.sim.roots);
  return s;
}

inline ScenarioSpec parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return parse_scenario(j);
}

inline ScenarioSpec parse_scenario(const char* text) { return parse_scenario(std::string(text)); }

inline ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

// Canonical form: every field written, keys sorted.
inline json to_json(const ScenarioSpec& s) {
  json j;
  j["name"] = s.name;
  const auto& k = s.model.kernel;
  json vision = {{"form", to_string(s.model.vision.form)}};
  if (s.model.vision.form != VisionForm::Uniform) {
    vision["steepness"] = s.model.vision.steepness;
    vision["width"] = s.model.vision.width;
  }
  j["model"] = {{"n_particles", s.model.n_particles},
                {"dimension", s.model.dimension},
                {"kernel", {{"c_attract", k.c_attract}, {"c_repulse", k.c_repulse},
                            {"l_attract", k.l_attract}, {"l_repulse", k.l_repulse}}},
                {"vision", vision}};
  if (const auto* e = std::get_if<std::vector<Vec2>>(&s.initial_positions)) {
    json pts = json::array();
    for (const auto& p : *e) pts.push_back({p[0], p[1]});
    j["initial_positions"] = {{"explicit", pts}};
  } else {
    const auto& sp = std::get<SeededPositions>(s.initial_positions);
    j["initial_positions"] = {{"seed", sp.seed}, {"count", sp.count}, {"box", sp.box}};
  }
  switch (s.root_policy.kind) {
    case RootPolicyKind::MaxRadiusStable: j["initial_root_policy"] = {{"kind", "max_radius_stable"}}; break;
    case RootPolicyKind::Index:
      j["initial_root_policy"] = {{"kind", "index"}, {"indices", s.root_policy.indices}};
      break;
    case RootPolicyKind::Explicit:
      j["initial_root_policy"] = {{"kind", "explicit"}, {"angles", s.root_policy.angles}};
      break;
  }
  const auto& q = s.sim;
  const auto& o = q.roots;
  j["sim"] = {{"dt", q.dt}, {"t_end", q.t_end}, {"mu_stop", q.mu_stop}, {"lambda_collide", q.lambda_collide},
              {"sample_every", q.sample_every}, {"k_stop", q.k_stop}, {"max_bisections", q.max_bisections},
              {"micro_step", q.micro_step}, {"tau_max", q.tau_max}, {"adjoint_tol", q.adjoint_tol},
              {"roots", {{"grid_n", o.grid_n}, {"root_tol", o.root_tol}, {"slope_tol", o.slope_tol},
                         {"tangency_tol", o.tangency_tol}, {"bracket_width", o.bracket_width},
                         {"max_newton", o.max_newton}, {"max_drift", o.max_drift},
                         {"rest_tol", o.rest_tol}, {"rest_grid", o.rest_grid}}}};
  if (s.eps) {
    const auto& e = *s.eps;
    j["eps"] = {{"epsilon", e.epsilon}, {"dt_factor", e.dt_factor}, {"t_end", e.t_end},
                {"v_floor", e.v_floor}, {"lambda_collide", e.lambda_collide},
                {"sample_every", e.sample_every}, {"steep_threshold", e.steep_threshold}};
  }
  return j;
}

inline std::string serialize_scenario(const ScenarioSpec& s) { return to_json(s).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Outputs

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectory_csv(std::ostream& out, const TrajectoryLog& log) {
  const std::size_t n = log.samples.empty() ? 0 : log.samples.front().positions.size();
  out << "t";
  for (std::size_t i = 1; i <= n; ++i) {
    const auto k = std::to_string(i);
    out << ",x" << k << ",y" << k << ",vx" << k << ",vy" << k << ",theta" << k << ",r" << k;
  }
  out << "\n";
  for (const auto& s : log.samples) {
    out << format_double(s.time);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& x = s.positions[i];
      const Vec2& v = s.velocities[i];
      out << ',' << format_double(x[0]) << ',' << format_double(x[1]) << ',' << format_double(v[0]) << ','
          << format_double(v[1]) << ',' << format_double(polar_angle(v)) << ',' << format_double(norm(v));
    }
    out << "\n";
  }
}

inline json event_json(const BreakdownEvent& e) {
  return {{"t", e.time},           {"particle", e.particle + 1}, {"kind", to_string(e.kind)},
          {"theta_pre", e.theta_pre}, {"r_pre", e.r_pre},      {"theta_post", e.theta_post},
          {"r_post", e.r_post}};
}

inline void write_events_jsonl(std::ostream& out, const TrajectoryLog& log) {
  for (const auto& e : log.events) out << event_json(e).dump() << "\n";
}

inline json summary_json(const ScenarioSpec& spec, const TrajectoryLog& log, const std::string& mode) {
  json j;
  j["scenario"] = spec.name;
  j["mode"] = mode;
  j["termination"] = to_string(log.termination);
  j["message"] = log.message;
  j["samples"] = log.samples.size();
  j["events"] = log.events.size();
  std::size_t loss = 0, stop = 0, amb = 0;
  for (const auto& e : log.events) {
    (e.kind == BreakdownKind::RootLoss ? loss : stop)++;
    amb += e.ambiguous;
  }
  j["root_loss_events"] = loss;
  j["stopping_events"] = stop;
  j["ambiguous_events"] = amb;
  j["warnings"] = log.warnings;
  if (!log.samples.empty()) {
    j["t_start"] = log.samples.front().time;
    j["t_final"] = log.samples.back().time;
    const auto diag = long_run_diagnostics(log, spec.model);
    j["max_speed_initial"] = diag.front().max_speed;
    j["max_speed_final"] = diag.back().max_speed;
    j["energy_initial"] = diag.front().energy;
    j["energy_final"] = diag.back().energy;
    j["center_of_mass_drift"] = norm(diag.back().center_of_mass - diag.front().center_of_mass);
  }
  return j;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

// Writes <prefix>.csv, <prefix>.events.jsonl and <prefix>.summary.json.
inline void write_run_outputs(const std::string& prefix, const ScenarioSpec& spec, const TrajectoryLog& log,
                              const std::string& mode) {
  std::ostringstream csv, ev;
  write_trajectory_csv(csv, log);
  write_events_jsonl(ev, log);
  write_file(prefix + ".csv", csv.str());
  write_file(prefix + ".events.jsonl", ev.str());
  write_file(prefix + ".summary.json", summary_json(spec, log, mode).dump(2) + "\n");
}

inline TrajectoryLog run_degenerate(const ScenarioSpec& spec) {
  const auto x = spec.positions();
  const auto roots = choose_initial_roots(x, spec.model, spec.root_policy, spec.sim.roots);
  return run_degenerate(x, roots, spec.model, spec.sim);
}

// Relaxation run started on the chosen initial roots (compatible start).
inline TrajectoryLog run_relaxation(const ScenarioSpec& spec) {
  if (!spec.eps) throw ConfigError("scenario has no 'eps' section");
  const auto x = spec.positions();
  const auto roots = choose_initial_roots(x, spec.model, spec.root_policy, spec.sim.roots);
  PhaseState<2> init{0.0, x, {}};
  for (const auto& r : roots) init.velocities.push_back(r.velocity());
  return run_relaxation(init, spec.model, *spec.eps);
}

}  // namespace aniso
