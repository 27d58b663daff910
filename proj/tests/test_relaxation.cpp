#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "aniso/relaxation.hpp"
#include "aniso/scenarios.hpp"
#include "oracles.hpp"

using namespace aniso;

namespace {

PhaseState<2> on_roots(const std::vector<Vec2>& x, const ModelParams& p) {
  PhaseState<2> s{0.0, x, {}};
  for (const auto& r : choose_initial_roots(x, p, RootPolicy{})) s.velocities.push_back(r.velocity());
  return s;
}

double force_scale(std::size_t i, const std::vector<Vec2>& x, const ModelParams& p) {
  return PolarFrame(i, x, p).force_scale();
}

}  // namespace

TEST(EpsRhs, VanishesOnRootVelocities) {
  ModelParams p;
  const EpsParams e;
  for (int seed = 0; seed < 10; ++seed) {
    const auto x = seeded_positions(seed, 4, 2.5);
    const auto s = on_roots(x, p);
    const auto r = eps_rhs(s, p, e);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(r.dx[i][0], s.velocities[i][0]);
      EXPECT_EQ(r.dx[i][1], s.velocities[i][1]);
      EXPECT_LE(norm(r.dv[i]), 1e-10 * force_scale(i, x, p) / e.epsilon);
    }
  }
}

TEST(EpsRhs, AccelerationScalesWithInverseEpsilon) {
  ModelParams p;
  const auto x = seeded_positions(4, 4, 2.0);
  const std::vector<Vec2> v{Vec2{{0.1, 0}}, Vec2{{0, 0.2}}, Vec2{{-0.05, 0.05}}, Vec2{{0.01, -0.3}}};
  EpsParams e;
  const auto a = eps_rhs(x, v, p, e);
  e.epsilon *= 2.0;
  const auto b = eps_rhs(x, v, p, e);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_LE(norm(a.dv[i] - b.dv[i] * 2.0), 1e-12 * norm(a.dv[i]));
}

TEST(EpsRhs, MatchesResidual) {
  ModelParams p;
  const auto x = seeded_positions(8, 4, 2.0);
  const std::vector<Vec2> v{Vec2{{0.1, 0}}, Vec2{{0, 0.2}}, Vec2{{-0.05, 0.05}}, Vec2{{0.01, -0.3}}};
  const EpsParams e;
  const auto r = eps_rhs(x, v, p, e);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_LE(norm(r.dv[i] * e.epsilon - residual<2>(i, x, v[i], p)), 1e-14);
}

TEST(EpsRhs, InvalidInputs) {
  ModelParams p;
  p.n_particles = 3;
  std::vector<Vec2> x{Vec2{{0, 0}}, Vec2{{0, 0}}, Vec2{{1, 0}}};
  std::vector<Vec2> v(3, Vec2{{1, 0}});
  EXPECT_THROW(eps_rhs(x, v, p, EpsParams{}), DomainError);
  EpsParams e;
  e.dt_factor = 0.25;
  EXPECT_THROW(e.validate(), ConfigError);
  e.dt_factor = 0.2;
  EXPECT_NO_THROW(e.validate());
  x[1] = Vec2{{0.5, 0.5}};
  v.pop_back();
  EXPECT_THROW(eps_rhs(x, v, p, EpsParams{}), ConfigError);
}

TEST(Relaxation, UniformVisionTracksIsotropicFlow) {
  // With direction-blind vision the limit is the isotropic flow; the lag is O(eps).
  ModelParams p;
  p.vision = VisionParams::uniform();
  const auto x = seeded_positions(5, 4, 2.0);
  PhaseState<2> s{0.0, x, oracle::isotropic_field(x, p.kernel)};
  const auto ref = oracle::isotropic_rk4(x, p.kernel, 1e-3, 1000);
  double prev = INFINITY;
  for (const double eps : {1e-2, 1e-3}) {
    EpsParams e;
    e.epsilon = eps;
    e.t_end = 1.0;
    const auto log = run_relaxation(s, p, e);
    ASSERT_EQ(log.termination, Termination::ReachedTEnd);
    ASSERT_NEAR(log.samples.back().time, 1.0, 1e-12);
    double err = 0.0;
    for (std::size_t i = 0; i < 4; ++i) err = std::max(err, norm(log.samples.back().positions[i] - ref[i]));
    EXPECT_LT(err, eps);
    EXPECT_LT(err, prev);
    prev = err;
  }
}

TEST(Relaxation, OutputTimesAreExact) {
  ModelParams p;
  const auto x = seeded_positions(6, 4, 2.5);
  EpsParams e;
  e.t_end = 0.5;
  RelaxationOptions o;
  o.output_times = {0.0, 0.0123, 0.1, 0.25, 0.33333, 0.5};
  const auto log = run_relaxation(on_roots(x, p), p, e, o);
  ASSERT_EQ(log.samples.size(), o.output_times.size());
  for (std::size_t k = 0; k < o.output_times.size(); ++k) EXPECT_EQ(log.samples[k].time, o.output_times[k]);
}

TEST(Relaxation, RestingParticlesWarn) {
  // A pair at the zero of K' feels no force in any direction and stays at rest.
  ModelParams p;
  p.n_particles = 2;
  const double r0 = kernel_sign_change_radius(p.kernel);
  PhaseState<2> s{0.0, {Vec2{{0, 0}}, Vec2{{r0, 0}}}, std::vector<Vec2>(2)};
  EpsParams e;
  e.t_end = 0.2;
  const auto log = run_relaxation(s, p, e);
  EXPECT_EQ(log.termination, Termination::ReachedTEnd);
  EXPECT_EQ(log.warnings.size(), 2u);
  for (const auto& v : log.samples.back().velocities) EXPECT_LT(norm(v), e.v_floor);
}

TEST(Relaxation, SquareRestIsUnstable) {
  // The square's rest state is a fixed point, but rounding is enough to leave it.
  const auto sq = build_square_scenario(KernelParams{});
  PhaseState<2> s{0.0, sq.positions, std::vector<Vec2>(4)};
  EpsParams e;
  e.t_end = 0.2;
  const auto log = run_relaxation(s, sq.model, e);
  EXPECT_EQ(log.termination, Termination::ReachedTEnd);
  for (const auto& v : log.samples.back().velocities) EXPECT_GT(norm(v), 1e-4);
}

TEST(Relaxation, CollisionGuard) {
  ModelParams p;
  const auto x = seeded_positions(6, 4, 2.5);
  EpsParams e;
  e.lambda_collide = 10.0;
  const auto log = run_relaxation(on_roots(x, p), p, e);
  EXPECT_EQ(log.termination, Termination::CollisionGuard);
}

TEST(Adjoint, StableRootIsFixed) {
  ModelParams p;
  for (int seed = 0; seed < 20; ++seed) {
    const auto x = seeded_positions(100 + seed, 4, 2.5);
    for (std::size_t i = 0; i < 4; ++i)
      for (const auto& r : admissible_roots(i, x, p)) {
        if (r.classification != RootClass::StableAdmissible) continue;
        const auto res = adjoint_flow(x, unit_polar(r.theta + 1e-3) * r.radius, i, p);
        ASSERT_TRUE(res.converged()) << to_string(res.status);
        EXPECT_LE(std::abs(angle_diff(res.root.theta, r.theta)), 1e-10);
        EXPECT_NEAR(res.root.radius, r.radius, 1e-10 * force_scale(i, x, p));
        const auto ev = jacobian_eigenvalues(res.root);
        EXPECT_LT(ev.first, 0.0);
        EXPECT_LT(ev.second, 0.0);
      }
  }
}

TEST(Adjoint, UnstableRootIsNotSelected) {
  ModelParams p;
  int checked = 0;
  for (int seed = 0; seed < 40 && checked < 5; ++seed) {
    const auto x = seeded_positions(200 + seed, 4, 2.5);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto all = enumerate_roots(i, x, p);
      for (std::size_t m = 0; m < all.size(); ++m) {
        const auto& r = all[m];
        if (r.classification != RootClass::UnstableAdmissible) continue;
        // Exactly on the root: either rejected, or rounding carries it off.
        const auto at = adjoint_flow(x, r.velocity(), i, p);
        EXPECT_TRUE(at.status == AdjointStatus::NotStable ||
                    (at.converged() && std::abs(angle_diff(at.root.theta, r.theta)) > 1e-6));
        // A nudge goes toward the neighbour on the side where H pushes it.
        for (const double d : {1e-6, -1e-6}) {
          const double th = r.theta + d;
          const bool up = h_of_theta(i, x, th, p) > 0.0;
          const auto& nb = all[up ? (m + 1) % all.size() : (m + all.size() - 1) % all.size()];
          if (nb.classification != RootClass::StableAdmissible) continue;
          const auto res = adjoint_flow(x, unit_polar(th) * r.radius, i, p);
          ASSERT_TRUE(res.converged());
          EXPECT_LE(std::abs(angle_diff(res.root.theta, nb.theta)), 1e-10);
          ++checked;
        }
      }
    }
  }
  EXPECT_GE(checked, 5);
}

TEST(Adjoint, StepCapDoesNotChangeSelection) {
  ModelParams p;
  for (int seed = 0; seed < 10; ++seed) {
    const auto x = seeded_positions(300 + seed, 4, 2.5);
    const Vec2 v0{{0.05, -0.02}};
    AdjointOptions a, b;
    b.dtau_max = 0.5;
    const auto ra = adjoint_flow(x, v0, 0, p, a);
    const auto rb = adjoint_flow(x, v0, 0, p, b);
    ASSERT_EQ(ra.status, rb.status);
    if (ra.converged()) EXPECT_LE(std::abs(angle_diff(ra.root.theta, rb.root.theta)), 1e-8);
  }
}

TEST(Adjoint, ConvergedStatesAreAdmissibleRoots) {
  ModelParams p;
  int converged = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto x = seeded_positions(400 + seed, 4, 2.5);
    for (int k = 0; k < 4; ++k) {
      const auto res = adjoint_flow(x, unit_polar(-2.5 + 1.6 * k) * 0.05, seed % 4, p);
      if (!res.converged()) continue;
      ++converged;
      bool found = false;
      for (const auto& r : admissible_roots(seed % 4, x, p))
        found = found || std::abs(angle_diff(r.theta, res.root.theta)) < 1e-10;
      EXPECT_TRUE(found);
      EXPECT_EQ(res.root.classification, RootClass::StableAdmissible);
    }
  }
  EXPECT_GT(converged, 40);
}

TEST(Adjoint, SquareRestIsATrap) {
  const auto sq = build_square_scenario(KernelParams{});
  // Every direction on the square has an admissible root, so a small start is
  // carried away from the origin; a start below the floor is rejected.
  EXPECT_THROW(adjoint_flow(sq.positions, Vec2{{1e-9, 0}}, 0, sq.model), DomainError);
  const auto res = adjoint_flow(sq.positions, unit_polar(kPi / 4) * 1e-4, 0, sq.model);
  ASSERT_TRUE(res.converged());
  EXPECT_NEAR(res.root.theta, kPi / 4, 1e-10);
}

TEST(Sweep, RejectsIncreasingList) {
  ModelParams p;
  const auto x = seeded_positions(5, 4, 2.0);
  TrajectoryLog ref;
  ref.samples.push_back(on_roots(x, p));
  const double eps[] = {1e-3, 1e-2};
  EXPECT_THROW(sweep_epsilon(ref.samples[0], p, eps, ref), ConfigError);
  EXPECT_THROW(sweep_epsilon(ref.samples[0], p, eps, TrajectoryLog{}), ConfigError);
}

TEST(Sweep, FirstOrderOnIsotropicFlow) {
  ModelParams p;
  p.vision = VisionParams::uniform();
  const auto x = seeded_positions(5, 4, 2.0);
  TrajectoryLog ref;
  for (int k = 0; k <= 10; ++k) {
    const auto xk = oracle::isotropic_rk4(x, p.kernel, 1e-3, 100 * k);
    ref.samples.push_back({0.1 * k, xk, oracle::isotropic_field(xk, p.kernel)});
  }
  const double eps[] = {1e-2, 1e-3};
  const auto t = sweep_epsilon(ref.samples[0], p, eps, ref, 50.0);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_FALSE(t.partial);
  EXPECT_TRUE(std::isnan(t.rows[0].order));
  EXPECT_NEAR(t.rows[1].order, 1.0, 0.1);
  EXPECT_LT(t.rows[1].err_v, t.rows[0].err_v);

  ref.termination = Termination::Error;
  EXPECT_TRUE(sweep_epsilon(ref.samples[0], p, std::span<const double>(eps, 1), ref).partial);
}
