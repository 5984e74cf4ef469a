#include <gtest/gtest.h>

#include <random>

#include "dckit/dcc.hpp"
#include "dckit/models.hpp"
#include "test_util.hpp"

using namespace dckit;
using dckit::testing::v1;
using dckit::testing::v2;

namespace {

SmoothConvexFunction quad1(double q, double c, double d) {
  return SmoothConvexFunction::quadratic(Matrix::Constant(1, 1, q), v1(c), d);
}

// minimize 1/2 (x - target)^2 subject to x^4 - x^2 <= 0
ConstrainedDcProgram quartic(double target) {
  ConstrainedDcProgram C;
  C.base = DcProgram{ConvexFunction(quad1(1.0, -target, 0.5 * target * target)), {{SmoothConvexFunction::zero(1)}},
                     Polyhedron::whole_space(1)};
  C.constraint.phi_c = ConvexFunction(SmoothConvexFunction::even_power(v1(1.0), 0.0, 4));
  C.constraint.pieces = {quad1(2.0, 0.0, 0.0)};
  return C;
}

SmoothConvexFunction random_quadratic(std::mt19937_64& rng, Index n) {
  return SmoothConvexFunction::quadratic(dckit::testing::random_psd(rng, n, 1), dckit::testing::random_vector(rng, n),
                                         dckit::testing::random_vector(rng, 1)[0]);
}

}  // namespace

TEST(Merge, SingleConstraintUnchanged) {
  const ConstraintPart p{ConvexFunction(quad1(2.0, 0.0, 0.0)), PiecewiseMaxConvex({quad1(0.0, 1.0, 0.0)})};
  const DcConstraint c = merge_constraints({p});
  EXPECT_FALSE(c.phi_c.has_max_part());
  ASSERT_EQ(c.pieces.size(), 1u);
  for (double x : {-2.0, 0.0, 1.5}) EXPECT_DOUBLE_EQ(c.value(v1(x)), x * x - x);
}

TEST(Merge, TwoAffineBoundsGiveAbsoluteValue) {
  // x - 1 <= 0 and -x - 1 <= 0 merge to |x| - 1 <= 0
  const ConstraintPart a{ConvexFunction(SmoothConvexFunction::affine(v1(1.0), -1.0)),
                         PiecewiseMaxConvex({SmoothConvexFunction::zero(1)})};
  const ConstraintPart b{ConvexFunction(SmoothConvexFunction::affine(v1(-1.0), -1.0)),
                         PiecewiseMaxConvex({SmoothConvexFunction::zero(1)})};
  const DcConstraint c = merge_constraints({a, b});
  for (double x : {-3.0, -1.0, -0.2, 0.0, 0.7, 2.5}) EXPECT_NEAR(c.value(v1(x)), std::abs(x) - 1.0, 1e-14);
}

TEST(Merge, RandomThreeConstraintsMatchPointwiseMax) {
  std::mt19937_64 rng(31);
  const Index n = 3;
  std::vector<ConstraintPart> parts;
  for (int j = 0; j < 3; ++j) {
    std::vector<SmoothConvexFunction> vp;
    for (int k = 0; k < 2; ++k) vp.push_back(random_quadratic(rng, n));
    ConvexFunction phi = j == 1 ? ConvexFunction(random_quadratic(rng, n),
                                                 PiecewiseMaxConvex({random_quadratic(rng, n), random_quadratic(rng, n)}))
                                : ConvexFunction(random_quadratic(rng, n));
    parts.push_back(ConstraintPart{std::move(phi), PiecewiseMaxConvex(vp)});
  }
  const DcConstraint c = merge_constraints(parts);
  for (int t = 0; t < 100; ++t) {
    const Vector x = dckit::testing::random_vector(rng, n, -2.0, 2.0);
    double expect = -kInf;
    for (const auto& p : parts) expect = std::max(expect, p.phi.value(x) - p.varphi.value(x));
    EXPECT_NEAR(c.value(x), expect, 1e-12 * (1.0 + std::abs(expect)));
  }
}

TEST(Slater, QuarticOriginFailsUnitPointsHold) {
  const ConstrainedDcProgram C = quartic(2.0);
  EXPECT_FALSE(slater_check(C, v1(0.0), 0).holds);
  for (double x : {1.0, -1.0}) {
    const SlaterResult r = slater_check(C, v1(x), 0);
    EXPECT_TRUE(r.holds) << x;
    EXPECT_LT(r.value, -1e-8);
    // witness strictly satisfies the linearized constraint
    EXPECT_LT(std::pow(r.witness[0], 4), x * x + 2.0 * x * (r.witness[0] - x));
  }
}

TEST(Slater, ThrowsOffBoundary) {
  const ConstrainedDcProgram C = quartic(2.0);
  EXPECT_THROW(slater_check(C, v1(0.5), 0), NotOnBoundary);
  EXPECT_THROW(slater_check(C, v1(2.0), 0), NotFeasible);
}

TEST(BStationary, QpccToyOptimumPasses) {
  const ConstrainedDcProgram C = qpcc_program(qpcc_toy_data());
  const Certificate c = check_B_stationary(C, v2(1.0, 1.0), 1e-6);
  EXPECT_EQ(c.kind, CertKind::B);
  EXPECT_TRUE(c.passed()) << c.residual;
}

TEST(BStationary, QpccToyBoundaryPointFails) {
  const ConstrainedDcProgram C = qpcc_program(qpcc_toy_data());
  const Certificate c = check_B_stationary(C, v2(0.5, 0.5), 1e-6);
  EXPECT_FALSE(c.passed());
  ASSERT_EQ(c.witness.size(), 2);
  EXPECT_NEAR(c.witness[0], c.witness[1], 1e-6);
}

TEST(BStationary, QuarticBoundaryOptimumPasses) {
  const Certificate c = check_B_stationary(quartic(2.0), v1(1.0), 1e-6);
  EXPECT_TRUE(c.passed());
  EXPECT_TRUE(c.cq_verified);
}

TEST(BStationary, InactiveConstraintReducesToD) {
  const ConstrainedDcProgram C = quartic(2.0);
  const Certificate b = check_B_stationary(C, v1(0.5), 1e-6);
  const Certificate d = check_d_stationary(C.base, v1(0.5), 1e-6);
  EXPECT_EQ(b.verdict, d.verdict);
  EXPECT_DOUBLE_EQ(b.residual, d.residual);
  EXPECT_EQ(b.verdict, Verdict::Fail);
}

TEST(AlgorithmTwo, QpccToyReachesOptimum) {
  const ConstrainedDcProgram C = qpcc_program(qpcc_toy_data());
  const SolveReport rep = algorithm_two(C, v2(0.0, 0.0));
  EXPECT_EQ(rep.termination, Termination::StepBelowTol);
  EXPECT_NEAR(rep.x[0], 1.0, 1e-6);
  EXPECT_NEAR(rep.x[1], 1.0, 1e-6);
  EXPECT_TRUE(rep.note.empty()) << rep.note;
  for (const auto& row : rep.trace) {
    EXPECT_LE(C.constraint.value(row.x), C.constraint.feas_tol(row.x)) << "iter " << row.iter;
    EXPECT_TRUE(C.base.X.contains(row.x, 1e-8).inside);
  }
  EXPECT_TRUE(check_B_stationary(C, rep.x, 1e-5).passed());
}

TEST(AlgorithmTwo, StartAtBStationaryPointStops) {
  const ConstrainedDcProgram C = qpcc_program(qpcc_toy_data());
  const SolveReport rep = algorithm_two(C, v2(1.0, 1.0));
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_EQ(rep.termination, Termination::StepBelowTol);
}

TEST(AlgorithmTwo, RejectsInfeasibleStart) {
  const ConstrainedDcProgram C = quartic(2.0);
  EXPECT_THROW(algorithm_two(C, v1(1.5)), InfeasibleStart);
}

TEST(AlgorithmTwo, QuarticOriginIsTrappedWhereSlaterFails) {
  // the inner set at 0 is {x^4 <= 0} = {0}
  const ConstrainedDcProgram C = quartic(2.0);
  const SolveReport rep = algorithm_two(C, v1(0.0));
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_DOUBLE_EQ(rep.x[0], 0.0);
  EXPECT_FALSE(check_B_stationary(C, v1(0.0), 1e-6).cq_verified);
}

TEST(AlgorithmTwo, QuarticFromInteriorReachesBoundary) {
  const SolveReport rep = algorithm_two(quartic(2.0), v1(0.5));
  EXPECT_NEAR(rep.x[0], 1.0, 1e-6);
}

TEST(Penalized, ObjectiveIdentity) {
  std::mt19937_64 rng(41);
  const ConstrainedDcProgram C = random_constrained_program(5, 3, 3, 2);
  for (double rho : {1.0, 10.0, 1000.0}) {
    const DcProgram P = penalized_program(C, rho);
    for (int t = 0; t < 100; ++t) {
      const Vector x = dckit::testing::random_vector(rng, 3, -3.0, 3.0);
      const double expect = C.base.zeta(x) + rho * std::max(0.0, C.constraint.value(x));
      EXPECT_NEAR(P.zeta(x), expect, 1e-10 * (1.0 + std::abs(expect)));
    }
  }
}

TEST(Penalty, QpccToyFromFeasibleCorner) {
  const ConstrainedDcProgram C = qpcc_program(qpcc_toy_data());
  const PenaltyReport r = penalty_solve(C, v2(2.0, 2.0));
  EXPECT_LE(r.report.constraint_residual, 1e-6);
  EXPECT_TRUE(r.classification == PenaltyClass::InteriorDStationary ||
              r.classification == PenaltyClass::BoundaryBStationary)
      << to_string(r.classification);
  EXPECT_NEAR(r.report.x[0], 1.0, 1e-5);
  EXPECT_NEAR(r.report.x[1], 1.0, 1e-5);
  for (const auto& row : r.report.trace) {
    if (std::isnan(row.rho)) continue;
    EXPECT_NEAR(row.theta, penalized_program(C, row.rho).zeta(row.x), 1e-9 * (1.0 + std::abs(row.theta)));
  }
}

TEST(Penalty, StrictlyFeasibleLimitIsInterior) {
  const PenaltyReport r = penalty_solve(quartic(0.5), v1(0.2));
  EXPECT_EQ(r.classification, PenaltyClass::InteriorDStationary);
  EXPECT_NEAR(r.report.x[0], 0.5, 1e-6);
}

TEST(Penalty, EmptyFeasibleSetIsClassA) {
  // x^2 + 1 <= 0 has no solution
  ConstrainedDcProgram C = quartic(2.0);
  C.constraint.phi_c = ConvexFunction(quad1(2.0, 0.0, 1.0));
  C.constraint.pieces = {SmoothConvexFunction::zero(1)};
  PenaltyOptions po;
  po.rho_max = 1e4;
  const PenaltyReport r = penalty_solve(C, v1(1.0), po);
  EXPECT_EQ(r.classification, PenaltyClass::InfeasibleStationary);
  EXPECT_NEAR(r.report.constraint_residual, 1.0, 1e-3);
}

TEST(Penalty, QuarticBoundaryIsClassC) {
  const PenaltyReport r = penalty_solve(quartic(2.0), v1(0.0));
  EXPECT_EQ(r.classification, PenaltyClass::BoundaryBStationary);
  EXPECT_NEAR(r.report.x[0], 1.0, 1e-5);
}
