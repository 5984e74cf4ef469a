#include <gtest/gtest.h>

#include <random>

#include "dckit/certify.hpp"
#include "test_util.hpp"

using namespace dckit;
using dckit::testing::v1;

namespace {

SmoothConvexFunction quad1(double q, double c, double d) {
  return SmoothConvexFunction::quadratic(Matrix::Constant(1, 1, q), v1(c), d);
}

DcProgram abs_square(double box = 2.0) {
  return DcProgram{ConvexFunction(quad1(2.0, 0.0, 1.0)),
                   {{SmoothConvexFunction::affine(v1(2.0), 0.0), SmoothConvexFunction::affine(v1(-2.0), 0.0)}},
                   Polyhedron::box(1, -box, box)};
}

DcProgram example3() {
  return DcProgram{ConvexFunction(quad1(1.0, 0.0, 0.0)),
                   {{SmoothConvexFunction::affine(v1(-1.0), 0.0), SmoothConvexFunction::zero(1)}},
                   Polyhedron::box(1, -10.0, 10.0)};
}

}  // namespace

TEST(CertifyD, AbsSquareOriginFails) {
  const auto c = check_d_stationary(abs_square(), v1(0.0), 1e-6);
  EXPECT_FALSE(c.passed());
  ASSERT_EQ(c.witness.size(), 1);
  EXPECT_NEAR(std::abs(c.witness[0]), 2.0 / 3.0, 1e-8);
  EXPECT_GT(c.witness_decrease, 1e-6);
}

TEST(CertifyD, AbsSquareOnePasses) {
  EXPECT_TRUE(check_d_stationary(abs_square(), v1(1.0), 1e-6).passed());
  EXPECT_TRUE(check_d_stationary(abs_square(), v1(-1.0), 1e-6).passed());
}

TEST(CertifyD, StronglyConvexMinimizerPasses) {
  DcProgram P{ConvexFunction(quad1(2.0, -1.0, 0.0)), {{SmoothConvexFunction::zero(1)}}, Polyhedron::box(1, -1, 1)};
  EXPECT_TRUE(check_d_stationary(P, v1(0.5), 1e-8).passed());
  // constrained minimizer at the bound
  DcProgram Q{ConvexFunction(quad1(2.0, -4.0, 0.0)), {{SmoothConvexFunction::zero(1)}}, Polyhedron::box(1, -1, 1)};
  EXPECT_TRUE(check_d_stationary(Q, v1(1.0), 1e-8).passed());
}

TEST(CertifyD, InfeasiblePointThrows) {
  EXPECT_THROW(check_d_stationary(abs_square(), v1(3.0), 1e-6), NotFeasible);
}

TEST(CertifyD, ConstantShiftInvariance) {
  DcProgram P = abs_square();
  DcProgram Q = P;
  Q.phi = ConvexFunction(P.phi.smooth().plus_affine(Vector::Zero(1), 5.0));
  for (double x : {-1.0, -0.3, 0.0, 0.7, 1.0}) {
    EXPECT_EQ(check_d_stationary(P, v1(x), 1e-6).verdict, check_d_stationary(Q, v1(x), 1e-6).verdict);
  }
}

TEST(CertifyCritical, Example3OriginIsCriticalNotD) {
  EXPECT_TRUE(check_critical(example3(), v1(0.0), 1e-8).passed());
  EXPECT_FALSE(check_d_stationary(example3(), v1(0.0), 1e-6).passed());
}

TEST(CertifyCritical, DStationaryPointIsCritical) {
  EXPECT_TRUE(check_critical(example3(), v1(-1.0), 1e-8).passed());
}

TEST(CertifyCritical, AffineInteriorFails) {
  DcProgram P{ConvexFunction(SmoothConvexFunction::affine(v1(1.0), 0.0)), {{SmoothConvexFunction::zero(1)}},
              Polyhedron::box(1, -2, 2)};
  const auto c = check_critical(P, v1(0.0), 1e-8);
  EXPECT_FALSE(c.passed());
  EXPECT_NEAR(c.residual, 0.5, 1e-8);
}

TEST(CertifyClarke, AbsSquare) {
  EXPECT_TRUE(check_clarke(abs_square(), v1(0.0), 1e-8).passed());
  const auto c = check_clarke(abs_square(), v1(0.5), 1e-8);
  EXPECT_FALSE(c.passed());
  EXPECT_NEAR(c.residual, 1.0, 1e-6);
}

TEST(CertifyClarke, BoundaryNormalCone) {
  // x^2 - 4x on [-1, 1]: gradient -2 at x = 1 is cancelled by the normal cone [0, inf)
  DcProgram P{ConvexFunction(quad1(2.0, -4.0, 0.0)), {{SmoothConvexFunction::zero(1)}}, Polyhedron::box(1, -1, 1)};
  EXPECT_TRUE(check_clarke(P, v1(1.0), 1e-8).passed());
  EXPECT_FALSE(check_clarke(P, v1(-1.0), 1e-8).passed());
}

TEST(CertifyClarke, RejectsMaxPartPhi) {
  DcProgram P = abs_square();
  P.phi = ConvexFunction(P.phi.smooth(), PiecewiseMaxConvex({SmoothConvexFunction::zero(1),
                                                               SmoothConvexFunction::affine(v1(1.0), 0.0)}));
  EXPECT_THROW(check_clarke(P, v1(0.0), 1e-8), UnsupportedStructure);
}

TEST(CertifyTaxonomy, ImplicationsOnCorpusPoints) {
  std::vector<DcProgram> corpus = {abs_square(), example3()};
  for (const auto& P : corpus) {
    std::vector<double> pts = {-1.0, 0.0, 1.0, 0.5, -0.25};
    for (double x : pts) {
      const auto d = check_d_stationary(P, v1(x), 1e-6);
      const auto cr = check_critical(P, v1(x), 1e-6);
      const auto cl = check_clarke(P, v1(x), 1e-6);
      if (d.passed()) {
        EXPECT_TRUE(cr.passed()) << x;
        EXPECT_TRUE(cl.passed()) << x;
      }
      if (!d.passed()) {
        EXPECT_GT(d.witness_decrease, 0.0);
      }
    }
  }
}
