#include <gtest/gtest.h>

#include <random>

#include "dckit/decomp.hpp"
#include "decomp_oracle.hpp"
#include "test_util.hpp"

using namespace dckit;
using dckit::testing::random_vector;
using dckit::testing::v1;
using dckit::testing::v2;

namespace {

SmoothConvexFunction sq() { return SmoothConvexFunction::quadratic(Matrix::Constant(1, 1, 2.0), v1(0.0), 0.0); }

BivariateModel worked_example() {
  BivariateAgent a;
  a.Lambda = {v2(1.0, 0.0), v2(0.0, 1.0)};
  a.terms = {BivariateTerm{Curvature::Convex, sq(), false, {1.0, 0.0}},
             BivariateTerm{Curvature::Concave, sq(), true, {0.0, 1.0}}};
  return BivariateModel{{a}, Polyhedron::box(1, -5.0, 5.0)};
}

}  // namespace

TEST(ExtremalWeights, SimplexVertices) {
  const ExtremalWeights w = extremal_weights(worked_example());
  EXPECT_EQ(w.rho_max[0], (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(w.rho_min[0], (std::vector<double>{0.0, 0.0}));
}

TEST(ExtremalWeights, ConstantH) {
  BivariateModel m = worked_example();
  m.agents[0].terms[0].h = {0.7, 0.7};
  const ExtremalWeights w = extremal_weights(m);
  EXPECT_EQ(w.rho_max[0][0], 0.7);
  EXPECT_EQ(w.rho_min[0][0], 0.7);
}

TEST(ExtremalWeights, RandomTableMatchesScan) {
  std::mt19937_64 rng(5);
  BivariateModel m = worked_example();
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  m.agents[0].Lambda.resize(5, v2(0.0, 0.0));
  for (auto& t : m.agents[0].terms) {
    t.h.clear();
    for (int l = 0; l < 5; ++l) t.h.push_back(u(rng));
  }
  const ExtremalWeights w = extremal_weights(m);
  for (std::size_t j = 0; j < 2; ++j) {
    double hi = -kInf;
    double lo = kInf;
    for (double v : m.agents[0].terms[j].h) {
      hi = v > hi ? v : hi;
      lo = v < lo ? v : lo;
    }
    EXPECT_EQ(w.rho_max[0][j], hi);
    EXPECT_EQ(w.rho_min[0][j], lo);
  }
}

TEST(Decomp, WorkedExample) {
  const BivariateModel m = worked_example();
  EXPECT_DOUBLE_EQ(theta_bruteforce(m, v1(2.0)), 4.0);
  EXPECT_DOUBLE_EQ(theta_bruteforce(m, v1(0.0)), 0.0);
  const DecompositionResult r = build_dc(m);
  const DcDecomposition& d = r.decomposition;
  EXPECT_EQ(d.index_sets[0].minus_cvx, std::vector<int>{0});
  EXPECT_EQ(d.index_sets[0].plus_cve, std::vector<int>{1});
  EXPECT_TRUE(d.index_sets[0].plus_cvx.empty());
  EXPECT_TRUE(d.index_sets[0].minus_cve.empty());
  ASSERT_EQ(d.piece_count(), 2u);
  for (double x : {-1.5, 0.0, 0.5, 2.0}) {
    EXPECT_DOUBLE_EQ(d.u(v1(x)), -x * x);
    EXPECT_DOUBLE_EQ(d.v_max[0].piece(0).value(v1(x)), 2.0 * x * x);
    EXPECT_DOUBLE_EQ(d.v_max[0].piece(1).value(v1(x)), 0.0);
    EXPECT_DOUBLE_EQ(d.theta(v1(x)), x * x);
  }
}

TEST(Decomp, SingleLambdaIsWeightedSum) {
  BivariateModel m = worked_example();
  m.agents[0].Lambda = {v2(0.3, 0.6)};
  m.agents[0].terms[0].h = {0.3};
  m.agents[0].terms[1].h = {0.6};
  for (double x : {-1.0, 2.0}) {
    EXPECT_NEAR(theta_bruteforce(m, v1(x)), 0.3 * x * x - 0.6 * x * x, 1e-15);
    EXPECT_NEAR(build_dc(m).decomposition.theta(v1(x)), -0.3 * x * x, 1e-15);
  }
}

TEST(Decomp, ConstantHGivesIdenticalPieces) {
  BivariateModel m = worked_example();
  m.agents[0].terms[0].h = {0.5, 0.5};
  m.agents[0].terms[1].h = {-0.25, -0.25};
  const DcDecomposition d = build_dc(m).decomposition;
  for (double x : {-2.0, 1.0}) {
    EXPECT_EQ(d.v_max[0].piece(0).value(v1(x)), d.v_max[0].piece(1).value(v1(x)));
    EXPECT_NEAR(d.theta(v1(x)), 0.75 * x * x, 1e-14);
  }
}

TEST(Decomp, RandomModelsMatchOracle) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 20; ++t) {
    const Index n = 1 + t % 3;
    const dckit::testing::RandomModel r = dckit::testing::random_model(rng, n);
    const DecompositionResult res = build_dc(r.model);
    std::size_t expected_pieces = 0;
    for (const auto& a : r.model.agents) expected_pieces += a.Lambda.size();
    EXPECT_EQ(res.decomposition.piece_count(), expected_pieces);
    for (int k = 0; k < 100; ++k) {
      const Vector x = random_vector(rng, n, -3.0, 3.0);
      const double theta = dckit::testing::oracle_theta(r, x);
      EXPECT_NEAR(theta_bruteforce(r.model, x), theta, 1e-10 * (1.0 + std::abs(theta))) << "model " << t;
      EXPECT_NEAR(res.decomposition.theta(x), theta, 1e-10) << "model " << t;
      EXPECT_NEAR(res.program.zeta(x), -theta, 1e-10) << "model " << t;
    }
  }
}

TEST(Decomp, MidpointConcavityAndConvexity) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 20; ++t) {
    const Index n = 1 + t % 3;
    const DcDecomposition d = build_dc(dckit::testing::random_model(rng, n).model).decomposition;
    for (int k = 0; k < 10; ++k) {
      const Vector a = random_vector(rng, n, -3.0, 3.0);
      const Vector b = random_vector(rng, n, -3.0, 3.0);
      const Vector m = 0.5 * (a + b);
      EXPECT_GE(d.u(m), 0.5 * (d.u(a) + d.u(b)) - 1e-10);
      EXPECT_LE(d.v(m), 0.5 * (d.v(a) + d.v(b)) + 1e-10);
    }
  }
}

TEST(Decomp, TieAtZeroGoesToConcavePart) {
  BivariateModel m = worked_example();
  m.agents[0].terms[1].h = {0.0, -1.0};  // rho_max = 0 on the cve term
  const DcDecomposition d = build_dc(m).decomposition;
  EXPECT_EQ(d.index_sets[0].minus_cvx, std::vector<int>{0});
  EXPECT_EQ(d.index_sets[0].plus_cve, std::vector<int>{1});
}

TEST(Decomp, NegativeWeightsRouteToConvexPart) {
  BivariateModel m = worked_example();
  m.agents[0].terms[0].h = {1.0, 2.0};    // rho_min > 0
  m.agents[0].terms[1].h = {-1.0, -3.0};  // rho_max < 0
  const DcDecomposition d = build_dc(m).decomposition;
  EXPECT_EQ(d.index_sets[0].plus_cvx, std::vector<int>{0});
  EXPECT_EQ(d.index_sets[0].minus_cve, std::vector<int>{1});
  EXPECT_TRUE(d.neg_u.empty());
  for (double x : {-1.0, 0.5}) EXPECT_NEAR(d.theta(v1(x)), theta_bruteforce(m, v1(x)), 1e-14);
}

TEST(Decomp, CurvatureMismatchThrows) {
  BivariateModel m = worked_example();
  m.agents[0].terms[1].negated = false;
  EXPECT_THROW(build_dc(m), CurvatureMismatch);
  m.agents[0].terms[1].F = SmoothConvexFunction::affine(v1(1.0), 0.5);
  EXPECT_NO_THROW(build_dc(m));
}

TEST(Decomp, RejectsEmptyLambdaAndBadTables) {
  BivariateModel m = worked_example();
  m.agents[0].Lambda.clear();
  EXPECT_THROW(build_dc(m), InvalidParams);
  m = worked_example();
  m.agents[0].terms[0].h.pop_back();
  EXPECT_THROW(build_dc(m), InvalidParams);
}
