// Command-line driver: root inspection, degenerate and relaxation runs,
// epsilon sweeps, the square configuration and adjoint-flow traces.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aniso/aniso.hpp"

namespace {

using namespace aniso;

enum Exit { kOk = 0, kIo = 1, kConfig = 2, kNumerical = 3, kCollision = 4 };

int exit_for(const TrajectoryLog& log) {
  switch (log.termination) {
    case Termination::ReachedTEnd: return kOk;
    case Termination::CollisionGuard: return kCollision;
    case Termination::Error: return kNumerical;
  }
  return kNumerical;
}

void report(const TrajectoryLog& log) {
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";
  if (log.termination != Termination::ReachedTEnd)
    std::cerr << to_string(log.termination) << ": " << log.message << "\n";
}

std::size_t particle_index(int one_based, const ScenarioSpec& spec) {
  if (one_based < 1 || static_cast<std::size_t>(one_based) > spec.model.n_particles)
    throw ConfigError("--particle must be in 1.." + std::to_string(spec.model.n_particles));
  return static_cast<std::size_t>(one_based - 1);
}

json root_json(const RootRecord& r) {
  return {{"theta", r.theta}, {"radius", r.radius}, {"slope", r.slope},
          {"classification", to_string(r.classification)}};
}

int cmd_roots(const std::string& config, int particle) {
  const auto spec = load_scenario(config);
  const auto x = spec.positions();
  const std::size_t i = particle_index(particle, spec);
  json out;
  out["particle"] = particle;
  out["roots"] = json::array();
  for (const auto& r : enumerate_roots(i, x, spec.model, spec.sim.roots)) out["roots"].push_back(root_json(r));
  out["rest_solutions"] = json::array();
  for (const auto& r : rest_solutions(i, x, spec.model, spec.sim.roots))
    out["rest_solutions"].push_back({{"direction", {r.direction[0], r.direction[1]}},
                                     {"residual_norm", r.residual_norm},
                                     {"on_boundary", r.on_boundary}});
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int cmd_simulate(const std::string& config, const std::string& prefix, double t_end) {
  auto spec = load_scenario(config);
  if (t_end > 0.0) spec.sim.t_end = t_end;
  const auto log = run_degenerate(spec);
  write_run_outputs(prefix.empty() ? spec.name : prefix, spec, log, "degenerate");
  report(log);
  return exit_for(log);
}

int cmd_relax(const std::string& config, double epsilon, const std::string& prefix, double t_end) {
  auto spec = load_scenario(config);
  if (!spec.eps) {
    spec.eps = EpsParams{};
    spec.eps->t_end = spec.sim.t_end;
  }
  spec.eps->epsilon = epsilon;
  if (t_end > 0.0) spec.eps->t_end = t_end;
  spec.eps->validate();
  const auto log = run_relaxation(spec);
  write_run_outputs(prefix.empty() ? spec.name + ".eps" : prefix, spec, log, "relaxation");
  report(log);
  return exit_for(log);
}

int cmd_sweep(const std::string& config, const std::vector<double>& eps_list, const std::string& out_path,
              double jump_exclusion) {
  const auto spec = load_scenario(config);
  const auto x = spec.positions();
  const auto roots = choose_initial_roots(x, spec.model, spec.root_policy, spec.sim.roots);
  const auto ref = run_degenerate(x, roots, spec.model, spec.sim);
  report(ref);
  PhaseState<2> init{0.0, x, {}};
  for (const auto& r : roots) init.velocities.push_back(r.velocity());
  EpsParams base = spec.eps.value_or(EpsParams{});
  const auto table = sweep_epsilon(init, spec.model, eps_list, ref, jump_exclusion, base);
  std::ostringstream csv;
  csv << "epsilon,err_x,err_v,order,partial\n";
  for (const auto& r : table.rows)
    csv << format_double(r.epsilon) << ',' << format_double(r.err_x) << ',' << format_double(r.err_v) << ','
        << format_double(r.order) << ',' << (table.partial ? 1 : 0) << "\n";
  for (const auto& n : table.notes) std::cerr << "note: " << n << "\n";
  if (out_path.empty())
    std::cout << csv.str();
  else
    write_file(out_path, csv.str());
  return kOk;
}

int cmd_square(bool check, double rotation_deg) {
  const auto sq = build_square_scenario(KernelParams{}, rotation_deg * kPi / 180.0);
  json out;
  out["beta"] = sq.beta;
  out["beta_residual"] = square_beta_residual(sq.beta, sq.model.kernel);
  out["positions"] = json::array();
  for (const auto& p : sq.positions) out["positions"].push_back({p[0], p[1]});
  out["roots"] = json::array();
  for (std::size_t i = 0; i < 4; ++i) {
    json rs = json::array();
    for (const auto& r : enumerate_roots(i, std::span<const Vec2>(sq.positions), sq.model)) rs.push_back(root_json(r));
    out["roots"].push_back(rs);
  }
  int code = kOk;
  if (check) {
    const auto rep = verify_nonuniqueness(sq);
    json checks = json::array();
    for (const auto& c : rep.checks)
      checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"expected", c.expected}});
    out["checks"] = checks;
    out["combinations"] = rep.combinations();
    out["passed"] = rep.passed();
    if (!rep.passed()) {
      for (const auto& c : rep.checks)
        if (!c.passed)
          std::cerr << "FAIL " << c.name << ": got " << format_double(c.value) << ", expected "
                    << format_double(c.expected) << "\n";
      code = kNumerical;
    }
  }
  std::cout << out.dump(2) << "\n";
  return code;
}

int cmd_adjoint(const std::string& config, int particle, double theta0, double r0, const std::string& out_path) {
  const auto spec = load_scenario(config);
  const auto x = spec.positions();
  const std::size_t i = particle_index(particle, spec);
  AdjointOptions o;
  o.r_floor = spec.sim.mu_stop;
  o.tau_max = spec.sim.tau_max;
  o.adjoint_tol = spec.sim.adjoint_tol;
  o.roots = spec.sim.roots;
  o.record_trace = true;
  const auto res = adjoint_flow(x, unit_polar(theta0) * r0, i, spec.model, o);
  std::ostringstream csv;
  csv << "tau,theta,r\n";
  for (const auto& s : res.trace)
    csv << format_double(s.tau) << ',' << format_double(s.theta) << ',' << format_double(s.r) << "\n";
  if (out_path.empty())
    std::cout << csv.str();
  else
    write_file(out_path, csv.str());
  std::cerr << "status " << to_string(res.status) << " tau " << format_double(res.tau);
  if (res.converged())
    std::cerr << " theta " << format_double(res.root.theta) << " r " << format_double(res.root.radius) << " slope "
              << format_double(res.root.slope);
  std::cerr << "\n";
  return res.converged() ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anisotropic aggregation model: roots, jumps and relaxation runs"};
  app.require_subcommand(1);

  std::string config, prefix, out_path;
  int particle = 1;
  double t_end = -1.0, epsilon = 1e-3, theta0 = 0.0, r0 = 1e-3, jump_exclusion = 50.0, rotation = 0.0;
  std::vector<double> eps_list;
  bool check = false;

  auto* roots = app.add_subcommand("roots", "list roots and rest solutions of one particle at t = 0");
  roots->add_option("config", config, "scenario JSON")->required();
  roots->add_option("--particle", particle, "particle index (1-based)")->required();

  auto* simulate = app.add_subcommand("simulate", "degenerate run with jump selection");
  simulate->add_option("config", config, "scenario JSON")->required();
  simulate->add_option("--out", prefix, "output prefix (default: scenario name)");
  simulate->add_option("--t-end", t_end, "override sim.t_end");

  auto* relax = app.add_subcommand("relax", "relaxation (epsilon) run");
  relax->add_option("config", config, "scenario JSON")->required();
  relax->add_option("--epsilon", epsilon, "relaxation parameter")->required();
  relax->add_option("--out", prefix, "output prefix (default: <name>.eps)");
  relax->add_option("--t-end", t_end, "override eps.t_end");

  auto* sweep = app.add_subcommand("sweep", "epsilon convergence table against the degenerate run");
  sweep->add_option("config", config, "scenario JSON")->required();
  sweep->add_option("--epsilons", eps_list, "decreasing epsilon values")->required()->delimiter(',');
  sweep->add_option("--jump-exclusion", jump_exclusion, "excluded half-width around events, in units of epsilon");
  sweep->add_option("--out", out_path, "CSV file (default: stdout)");

  auto* square = app.add_subcommand("square", "square non-uniqueness configuration");
  square->add_flag("--check", check, "verify against the closed form");
  square->add_option("--rotation", rotation, "rotation of the square in degrees");

  auto* adjoint = app.add_subcommand("adjoint", "frozen adjoint flow trace at t = 0");
  adjoint->add_option("config", config, "scenario JSON")->required();
  adjoint->add_option("--particle", particle, "particle index (1-based)")->required();
  adjoint->add_option("--theta0", theta0, "initial angle")->required();
  adjoint->add_option("--r0", r0, "initial speed")->required();
  adjoint->add_option("--out", out_path, "CSV file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*roots) return cmd_roots(config, particle);
    if (*simulate) return cmd_simulate(config, prefix, t_end);
    if (*relax) return cmd_relax(config, epsilon, prefix, t_end);
    if (*sweep) return cmd_sweep(config, eps_list, out_path, jump_exclusion);
    if (*square) return cmd_square(check, rotation);
    if (*adjoint) return cmd_adjoint(config, particle, theta0, r0, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
