#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "aniso/model.hpp"
#include "aniso/scenarios.hpp"
#include "oracles.hpp"

using namespace aniso;

namespace {

double rel(double got, double want, double floor) { return std::abs(got - want) / std::max(std::abs(want), floor); }

}  // namespace

TEST(Kernel, ValueAtOriginIsRepulsionMinusAttraction) {
  KernelParams k;
  EXPECT_DOUBLE_EQ(kernel_value(0.0, k), -1.0);
}

TEST(Kernel, DerivativeVanishesAtSignChangeRadius) {
  KernelParams k;
  const double r0 = 2.0 * std::log(4.0 / 3.0);
  EXPECT_NEAR(kernel_deriv(r0, k), 0.0, 1e-15);
  EXPECT_LT(kernel_deriv(0.5 * r0, k), 0.0);
  EXPECT_GT(kernel_deriv(2.0 * r0, k), 0.0);
}

TEST(Kernel, DerivativesMatchFiniteDifferences) {
  KernelParams k;
  for (int m = 0; m < 100; ++m) {
    const double r = 0.05 + 0.08 * m;
    const double fd = oracle::diff5([&](double s) { return kernel_value(s, k); }, r, 1e-3);
    EXPECT_LE(rel(kernel_deriv(r, k), fd, 1e-3), 1e-6) << "r=" << r;
    const double fd2 = oracle::diff5([&](double s) { return kernel_deriv(s, k); }, r, 1e-3);
    EXPECT_LE(rel(kernel_second_deriv(r, k), fd2, 1e-3), 1e-6) << "r=" << r;
  }
}

TEST(Kernel, NegativeDistanceIsDomainError) {
  KernelParams k;
  EXPECT_THROW(kernel_value(-1e-3, k), DomainError);
  EXPECT_THROW(kernel_deriv(-1.0, k), DomainError);
}

TEST(Kernel, SupremumOfDerivativeBoundsGrid) {
  KernelParams k;
  const double sup = kernel_deriv_sup(k);
  double grid = 0.0;
  for (int m = 0; m <= 100000; ++m) grid = std::max(grid, std::abs(kernel_deriv(m * 1e-3, k)));
  EXPECT_GE(sup, grid);
  EXPECT_NEAR(sup, 0.5, 1e-12);  // |K'(0)| = |1.5 - 2|
}

TEST(Vision, FullWeightStraightAhead) {
  EXPECT_NEAR(vision_weight(-1.0, VisionParams{}), 1.0, 1e-15);
  EXPECT_NEAR(vision_weight(-1.0, VisionParams::linear(1.0, 1.0)), 1.0, 1e-15);
  EXPECT_NEAR(vision_weight(1.0, VisionParams::linear(1.0, 1.0)), 0.0, 1e-15);
  EXPECT_EQ(vision_weight(0.3, VisionParams::uniform()), 1.0);
}

TEST(Vision, WeightDecreasesTowardBlindZone) {
  const VisionParams v;
  double prev = vision_weight(-1.0, v);
  for (int m = 1; m <= 40; ++m) {
    const double g = vision_weight(-1.0 + m * 0.05, v);
    EXPECT_LT(g, prev);
    prev = g;
  }
  EXPECT_LT(vision_weight(1.0, v), 1e-4);
}

TEST(Vision, DerivativeMatchesFiniteDifferences) {
  for (const auto& v : {VisionParams{}, VisionParams::tanh(2.0, 1.25 * kPi), VisionParams::linear(1.0, 1.0),
                        VisionParams::linear(0.5, 2.0)}) {
    for (int m = 0; m < 100; ++m) {
      const double s = -0.98 + m * (1.96 / 99);
      const double fd = oracle::diff5([&](double t) { return vision_weight(t, v); }, s, 1e-4);
      EXPECT_LE(rel(vision_weight_deriv(s, v), fd, 1e-6), 1e-6) << to_string(v.form) << " s=" << s;
    }
  }
}

TEST(Vision, DerivativeSupremumIsAttained) {
  const VisionParams v;
  double grid = 0.0;
  for (int m = 0; m <= 20000; ++m) grid = std::max(grid, std::abs(vision_weight_deriv(-1.0 + m * 1e-4, v)));
  EXPECT_GE(vision_weight_deriv_sup(v), grid - 1e-12);
  EXPECT_NEAR(vision_weight_deriv_sup(v), grid, 1e-6);
}

TEST(Vision, ArgumentOutsideUnitIntervalIsDomainError) {
  EXPECT_THROW(vision_weight(1.01, VisionParams{}), DomainError);
  EXPECT_NO_THROW(vision_weight(1.0 + 1e-14, VisionParams{}));
}

TEST(Params, InvalidValuesRejected) {
  KernelParams k;
  k.l_attract = 0.0;
  EXPECT_THROW(k.validate(), ConfigError);
  EXPECT_THROW(VisionParams::linear(2.0, 1.0), ConfigError);
  EXPECT_THROW(VisionParams::tanh(-1.0, kPi), ConfigError);
  ModelParams p;
  p.n_particles = 1;
  EXPECT_THROW(p.validate(), ConfigError);
  VisionParams bad;
  bad.normalization = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Residual, IsotropicVelocityMatchesDirectSum) {
  ModelParams p;
  const auto x = seeded_positions(7, 4, 2.0);
  const auto ref = oracle::isotropic_field(x, p.kernel);
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec2 v = isotropic_velocity<2>(i, x, p);
    EXPECT_LE(norm(v - ref[i]), 1e-15);
  }
}

TEST(Residual, UniformVisionReducesToIsotropic) {
  ModelParams p;
  p.vision = VisionParams::uniform();
  const auto x = seeded_positions(3, 5, 2.0);
  p.n_particles = 5;
  for (std::size_t i = 0; i < 5; ++i) {
    const Vec2 v = isotropic_velocity<2>(i, x, p);
    EXPECT_LE(norm(residual<2>(i, x, v, p)), 1e-15);
  }
}

TEST(Residual, ZeroVelocityIsDomainError) {
  ModelParams p;
  const auto x = seeded_positions(1, 4, 2.0);
  EXPECT_THROW(residual<2>(0, x, Vec2{}, p), DomainError);
}

TEST(Residual, CoincidentParticlesRejected) {
  ModelParams p;
  p.n_particles = 3;
  std::vector<Vec2> x{Vec2{{0, 0}}, Vec2{{0, 0}}, Vec2{{1, 0}}};
  EXPECT_THROW(interaction_sum<2>(0, x, Vec2{{1, 0}}, p), DomainError);
}

TEST(Residual, ShapeChecks) {
  ModelParams p;
  const auto x = seeded_positions(1, 3, 2.0);
  EXPECT_THROW(interaction_sum<2>(0, x, Vec2{{1, 0}}, p), ConfigError);
  std::vector<Vec<3>> x3(4);
  for (std::size_t i = 0; i < 4; ++i) x3[i] = Vec<3>{{double(i), 0.5 * i * i, 0.1}};
  EXPECT_THROW(interaction_sum<3>(0, x3, Vec<3>{{1, 0, 0}}, p), UnsupportedDimension);
  p.dimension = 3;
  EXPECT_NO_THROW(interaction_sum<3>(0, x3, Vec<3>{{1, 0, 0}}, p));
}

TEST(Residual, TranslationInvariant) {
  ModelParams p;
  auto x = seeded_positions(11, 4, 2.0);
  const Vec2 v{{0.3, -0.2}};
  const Vec2 a = residual<2>(2, x, v, p);
  for (auto& q : x) q += Vec2{{3.5, -1.25}};
  EXPECT_LE(norm(residual<2>(2, x, v, p) - a), 1e-14);
}

TEST(Energy, PairEnergyMatchesKernel) {
  ModelParams p;
  p.n_particles = 2;
  std::vector<Vec2> x{Vec2{{0, 0}}, Vec2{{0.7, 0}}};
  EXPECT_NEAR(energy<2>(x, p), kernel_value(0.7, p.kernel), 1e-15);
  EXPECT_NEAR(min_pair_distance<2>(x), 0.7, 1e-15);
}
