#include <gtest/gtest.h>

#include <random>

#include "dckit/subsolver.hpp"
#include "test_util.hpp"

using namespace dckit;
using dckit::testing::v1;
using dckit::testing::v2;

namespace {

SubproblemSpec one_d(const SmoothConvexFunction& smooth, double linear, double center, Polyhedron X) {
  SubproblemSpec s;
  s.smooth = smooth;
  s.linear = v1(linear);
  s.prox_center = v1(center);
  s.X = std::move(X);
  return s;
}

SmoothConstraint quad_constraint(double rhs) {
  // x^2 <= rhs
  return SmoothConstraint{SmoothConvexFunction::quadratic(2.0 * Matrix::Identity(1, 1), v1(0.0), 0.0), v1(0.0), rhs};
}

}  // namespace

TEST(Subsolver, LinearizedAbsSquareStep) {
  // 1 + x^2 - 2x + x^2/2 has its minimizer at 2/3
  const auto spec = one_d(SmoothConvexFunction::quadratic(2.0 * Matrix::Identity(1, 1), v1(0.0), 1.0), -2.0, 0.0,
                          Polyhedron::whole_space(1));
  const auto r = solve(spec, 1e-10);
  ASSERT_EQ(r.status, SubproblemStatus::Solved);
  EXPECT_NEAR(r.x_opt[0], 2.0 / 3.0, 1e-9);
  EXPECT_LE(r.kkt_residual, 1e-10);
}

TEST(Subsolver, HalvingStep) {
  const auto spec =
      one_d(SmoothConvexFunction::quadratic(Matrix::Identity(1, 1), v1(0.0), 0.0), 0.0, 1.0, Polyhedron::whole_space(1));
  const auto r = solve(spec, 1e-10);
  ASSERT_EQ(r.status, SubproblemStatus::Solved);
  EXPECT_NEAR(r.x_opt[0], 0.5, 1e-10);
}

TEST(Subsolver, FixedPointCenter) {
  const auto spec =
      one_d(SmoothConvexFunction::quadratic(Matrix::Identity(1, 1), v1(-0.3), 0.0), 0.0, 0.3, Polyhedron::box(1, -1, 1));
  const auto r = solve(spec, 1e-12);
  ASSERT_EQ(r.status, SubproblemStatus::Solved);
  EXPECT_NEAR(r.x_opt[0], 0.3, 1e-12);
}

TEST(Subsolver, MaxPartKink) {
  // min 1/2 x^2 + max(-x, 0) + 1/2 (x - 1)^2: minimizer 1/2, and from center -1 the kink at 0
  SubproblemSpec s = one_d(SmoothConvexFunction::quadratic(Matrix::Identity(1, 1), v1(0.0), 0.0), 0.0, 1.0,
                           Polyhedron::box(1, -10, 10));
  s.max_part = PiecewiseMaxConvex({SmoothConvexFunction::affine(v1(-1.0), 0.0), SmoothConvexFunction::zero(1)});
  auto r = solve(s, 1e-10);
  ASSERT_EQ(r.status, SubproblemStatus::Solved);
  EXPECT_NEAR(r.x_opt[0], 0.5, 1e-9);
  s.prox_center = v1(0.5);
  s.linear = v1(0.0);
  // 1/2 x^2 + max(-x,0) + 1/2 (x - 0.5)^2 -> x = 0.25
  r = solve(s, 1e-10);
  EXPECT_NEAR(r.x_opt[0], 0.25, 1e-9);
  // center -0.5, linear +1: derivative on x<0 is x - 1 + (x + 0.5) + 1 = 2x + 0.5 -> x = -0.25 < 0
  s.prox_center = v1(-0.5);
  s.linear = v1(1.0);
  r = solve(s, 1e-10);
  EXPECT_NEAR(r.x_opt[0], -0.25, 1e-9);
  // center 0.2, linear 0.5: x>0 gives 2x - 0.2 + 0.5 > 0, x<0 gives 2x - 1 - 0.2 + 0.5 < 0, so kink x = 0
  s.prox_center = v1(0.2);
  s.linear = v1(0.5);
  r = solve(s, 1e-10);
  ASSERT_EQ(r.status, SubproblemStatus::Solved);
  EXPECT_NEAR(r.x_opt[0], 0.0, 1e-9);
}

TEST(Subsolver, LargeScaleMaxPart) {
  // 1/2 (x - 3)^2 + 1e6 max(0, x - 1): exact penalty puts x at 1
  SubproblemSpec s = one_d(SmoothConvexFunction::zero(1), 0.0, 3.0, Polyhedron::whole_space(1));
  s.max_part = PiecewiseMaxConvex({SmoothConvexFunction::zero(1), SmoothConvexFunction::affine(v1(1.0), -1.0)});
  s.max_scale = 1e6;
  const auto r = solve(s, 1e-10);
  ASSERT_EQ(r.status, SubproblemStatus::Solved);
  EXPECT_NEAR(r.x_opt[0], 1.0, 1e-9);
}

TEST(Subsolver, SingleConstraintBisection) {
  // min 1/2 (x - 3)^2 s.t. x^2 <= 1 -> x = 1 with multiplier 1
  SubproblemSpec s = one_d(SmoothConvexFunction::zero(1), 0.0, 3.0, Polyhedron::box(1, -5, 5));
  s.constraints.push_back(quad_constraint(1.0));
  const auto r = solve(s, 1e-10);
  ASSERT_EQ(r.status, SubproblemStatus::Solved);
  EXPECT_NEAR(r.x_opt[0], 1.0, 1e-9);
  EXPECT_LE(r.x_opt[0] * r.x_opt[0], 1.0);
  ASSERT_EQ(r.multipliers.size(), 1u);
  EXPECT_NEAR(r.multipliers[0], 1.0, 1e-6);
}

TEST(Subsolver, InactiveConstraintMatchesUnconstrained) {
  SubproblemSpec s = one_d(SmoothConvexFunction::quadratic(Matrix::Identity(1, 1), v1(0.0), 0.0), 0.0, 1.0,
                           Polyhedron::box(1, -5, 5));
  const auto free_r = solve(s, 1e-10);
  s.constraints.push_back(quad_constraint(4.0));
  const auto con_r = solve(s, 1e-10);
  ASSERT_EQ(con_r.status, SubproblemStatus::Solved);
  EXPECT_EQ(free_r.x_opt[0], con_r.x_opt[0]);
}

TEST(Subsolver, TwoConstraintsAugmentedLagrangian) {
  // min 1/2 ||x - (2,2)||^2 s.t. x1^2 <= 1, x2^2 <= 0.25 -> (1, 0.5)
  SubproblemSpec s;
  s.smooth = SmoothConvexFunction::zero(2);
  s.prox_center = v2(2.0, 2.0);
  s.X = Polyhedron::box(2, -5, 5);
  Matrix e1 = Matrix::Zero(2, 2);
  e1(0, 0) = 2.0;
  Matrix e2 = Matrix::Zero(2, 2);
  e2(1, 1) = 2.0;
  s.constraints.push_back({SmoothConvexFunction::quadratic(e1, Vector::Zero(2), 0.0), Vector::Zero(2), 1.0});
  s.constraints.push_back({SmoothConvexFunction::quadratic(e2, Vector::Zero(2), 0.0), Vector::Zero(2), 0.25});
  const auto r = solve(s, 1e-10);
  ASSERT_EQ(r.status, SubproblemStatus::Solved);
  EXPECT_NEAR(r.x_opt[0], 1.0, 1e-8);
  EXPECT_NEAR(r.x_opt[1], 0.5, 1e-8);
}

TEST(Subsolver, InfeasibleConstraint) {
  SubproblemSpec s = one_d(SmoothConvexFunction::zero(1), 0.0, 0.5, Polyhedron::box(1, -1, 1));
  s.constraints.push_back(quad_constraint(-1.0));
  EXPECT_EQ(solve(s, 1e-10).status, SubproblemStatus::Infeasible);
}

TEST(Subsolver, DomainViolationOnBadCenter) {
  SubproblemSpec s = one_d(SmoothConvexFunction::neg_log(v1(1.0), 0.0), 0.0, -1.0, Polyhedron::whole_space(1));
  EXPECT_THROW(solve(s, 1e-10), DomainViolation);
}

TEST(SubsolverProbe, NoConstraints) {
  const auto r = feasibility_probe(Polyhedron::box(1, -1, 1), {}, 1e-10);
  EXPECT_TRUE(r.feasible);
  EXPECT_DOUBLE_EQ(r.residual, 0.0);
}

TEST(SubsolverProbe, InfeasibleQuadratic) {
  const auto r = feasibility_probe(Polyhedron::box(1, -1, 1), {quad_constraint(-1.0)}, 1e-10);
  EXPECT_FALSE(r.feasible);
  EXPECT_NEAR(r.residual, 1.0, 1e-8);
  EXPECT_NEAR(r.witness[0], 0.0, 1e-6);
}

TEST(SubsolverProbe, FeasibleQuadratic) {
  EXPECT_TRUE(feasibility_probe(Polyhedron::box(1, -1, 1), {quad_constraint(1.0)}, 1e-10).feasible);
}

TEST(SubsolverProbe, FeasibleAwayFromCenter) {
  // (x - 1.5)^2 <= 0.01 over [-2, 2] from center 0
  SmoothConstraint c{SmoothConvexFunction::quadratic(2.0 * Matrix::Identity(1, 1), v1(-3.0), 2.25), v1(0.0), 0.01};
  const Vector center = v1(0.0);
  const auto r = feasibility_probe(Polyhedron::box(1, -2, 2), {c}, 1e-10, &center);
  EXPECT_TRUE(r.feasible);
  EXPECT_NEAR(r.witness[0], 1.4, 1e-6);
}

TEST(SubsolverProperties, OptimalityAndStrongConvexityGap) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 12; ++trial) {
    const Index n = 1 + trial % 2;
    const auto s = dckit::testing::random_spec(rng, n, trial % 3 == 1, trial % 3 == 2);
    const auto r = solve(s, 1e-10);
    ASSERT_EQ(r.status, SubproblemStatus::Solved) << "trial " << trial;
    EXPECT_LE(r.kkt_residual, 1e-10 + 1e-13);
    for (std::size_t j = 0; j < s.constraints.size(); ++j) {
      const double mult = r.multipliers[r.multipliers.size() - s.constraints.size() + j];
      EXPECT_LE(std::abs(mult * s.constraints[j].excess(r.x_opt)), 1e-9);
    }
    for (int k = 0; k < 20; ++k) {
      const Vector y = s.X.project(dckit::testing::random_vector(rng, n, -2.0, 2.0));
      bool feasible = true;
      for (const auto& c : s.constraints) feasible = feasible && c.excess(y) <= 0.0;
      if (!feasible) continue;
      EXPECT_GE(dckit::testing::spec_objective(s, y),
                r.value + 0.5 * (y - r.x_opt).squaredNorm() - 1e-9 * (1.0 + std::abs(r.value)));
    }
  }
}

TEST(SubsolverProperties, GridOracleAgreement) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 1 + trial % 2;
    const double h = n == 1 ? 1e-3 : 5e-3;
    const auto s = dckit::testing::random_spec(rng, n, trial % 3 == 1, trial % 3 == 2);
    const auto r = solve(s, 1e-10);
    ASSERT_EQ(r.status, SubproblemStatus::Solved);
    const Vector g = dckit::testing::grid_argmin(s, h);
    EXPECT_LE((r.x_opt - g).norm(), 2.0 * h) << "trial " << trial;
  }
}

TEST(SubsolverProperties, Deterministic) {
  std::mt19937_64 rng(5);
  const auto s = dckit::testing::random_spec(rng, 2, true, true);
  const auto a = solve(s, 1e-10);
  const auto b = solve(s, 1e-10);
  EXPECT_EQ(a.x_opt, b.x_opt);
}
