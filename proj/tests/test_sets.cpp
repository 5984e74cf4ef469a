#include <gtest/gtest.h>

#include <random>

#include "dckit/sets.hpp"
#include "test_util.hpp"

using namespace dckit;
using dckit::testing::v1;
using dckit::testing::v2;

namespace {

// {x1 + x2 <= 1, x >= 0}
Polyhedron simplex_like() {
  Matrix A(1, 2);
  A << 1, 1;
  return Polyhedron(Vector::Zero(2), Vector::Constant(2, kInf), A, v1(1.0));
}

Polyhedron random_polyhedron(std::mt19937_64& rng, Index n, Index m) {
  Matrix A(m, n);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) A(i, j) = g(rng);
  }
  // the origin is strictly inside
  const Vector b = Vector::Constant(m, 0.5) + dckit::testing::random_vector(rng, m, 0.0, 1.0);
  return Polyhedron(Vector::Constant(n, -2.0), Vector::Constant(n, 2.0), A, b);
}

}  // namespace

TEST(SetsProject, InteriorPointUnchanged) {
  EXPECT_DOUBLE_EQ(Polyhedron::box(1, -1, 1).project(v1(0.3))[0], 0.3);
}

TEST(SetsProject, Clamp) { EXPECT_DOUBLE_EQ(Polyhedron::box(1, -1, 1).project(v1(5.0))[0], 1.0); }

TEST(SetsProject, HalfspaceAndOrthant) {
  const Vector p = simplex_like().project(v2(1.0, 1.0));
  EXPECT_NEAR(p[0], 0.5, 1e-10);
  EXPECT_NEAR(p[1], 0.5, 1e-10);
}

TEST(SetsProject, CornerOfHalfspaceAndOrthant) {
  // closed form: project (3, -1) onto {x1 + x2 <= 1, x >= 0} is (1, 0)
  const Vector p = simplex_like().project(v2(3.0, -1.0));
  EXPECT_NEAR(p[0], 1.0, 1e-10);
  EXPECT_NEAR(p[1], 0.0, 1e-12);
}

TEST(SetsProject, IdempotentAndObtuse) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Polyhedron X = random_polyhedron(rng, 3, 4);
    const Vector z = dckit::testing::random_vector(rng, 3, -4.0, 4.0);
    const Vector p = X.project(z, 1e-12);
    EXPECT_TRUE(X.contains(p, 1e-11).inside);
    EXPECT_LE((X.project(p, 1e-12) - p).norm(), 1e-10);
    for (int k = 0; k < 50; ++k) {
      const Vector y = X.project(dckit::testing::random_vector(rng, 3, -3.0, 3.0), 1e-12);
      EXPECT_LE((z - p).dot(y - p), 1e-9);
    }
  }
}

TEST(SetsContains, BoxMembership) {
  const Polyhedron X = Polyhedron::box(2, 0.0, 2.0);
  const Membership in = X.contains(v2(1.0, 1.0));
  EXPECT_TRUE(in.inside);
  EXPECT_DOUBLE_EQ(in.violation, 0.0);
  const Membership out = X.contains(v2(-0.5, 1.0));
  EXPECT_FALSE(out.inside);
  EXPECT_DOUBLE_EQ(out.violation, 0.5);
}

TEST(SetsContains, ToleranceBand) {
  Matrix A(1, 1);
  A << 1.0;
  const Polyhedron X(v1(-kInf), v1(kInf), A, v1(1.0));
  EXPECT_TRUE(X.contains(v1(1.0 + 1e-12), 1e-9).inside);
  EXPECT_FALSE(X.contains(v1(1.0 + 1e-6), 1e-9).inside);
}

TEST(SetsActive, UpperBound) {
  const ActiveSet s = Polyhedron::box(1, -1, 1).active_rows(v1(1.0));
  EXPECT_EQ(s.upper, std::vector<int>({0}));
  EXPECT_TRUE(s.lower.empty());
}

TEST(SetsActive, InteriorHasNone) {
  const Polyhedron X = Polyhedron::box(1, -1, 1);
  EXPECT_TRUE(X.active_rows(v1(0.0)).empty());
  EXPECT_TRUE(X.in_tangent_cone(v1(0.0), v1(-7.0)));
}

TEST(SetsActive, RowAndLowerBound) {
  const ActiveSet s = simplex_like().active_rows(v2(1.0, 0.0));
  EXPECT_EQ(s.rows, std::vector<int>({0}));
  EXPECT_EQ(s.lower, std::vector<int>({1}));
}

TEST(SetsActive, OutsideThrows) {
  EXPECT_THROW(simplex_like().active_rows(v2(2.0, 2.0)), NotFeasible);
}

TEST(SetsTangent, PolyhedralCone) {
  const Polyhedron X = simplex_like();
  EXPECT_TRUE(X.in_tangent_cone(v2(1.0, 0.0), v2(-1.0, 1.0)));
  EXPECT_FALSE(X.in_tangent_cone(v2(1.0, 0.0), v2(0.0, 1.0)));
  EXPECT_FALSE(X.in_tangent_cone(v2(1.0, 0.0), v2(-1.0, -0.1)));
}

TEST(SetsConstruction, EmptySetRejected) {
  Matrix A(1, 1);
  A << 1.0;
  EXPECT_THROW(Polyhedron(v1(0.0), v1(1.0), A, v1(-1.0)), InvalidParams);
  EXPECT_THROW(Polyhedron::box(v1(1.0), v1(0.0)), InvalidParams);
}
