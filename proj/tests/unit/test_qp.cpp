#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "setrec/qp.hpp"

using namespace setrec;

namespace {

Eigen::MatrixXd rows(std::initializer_list<std::vector<double>> r) {
  Eigen::MatrixXd E(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& v : r) {
    for (std::size_t j = 0; j < v.size(); ++j) E(i, static_cast<Eigen::Index>(j)) = v[j];
    ++i;
  }
  return E;
}

}  // namespace

TEST(ActiveSetQp, UnconstrainedMinimumInsideTheBox) {
  // min (x-0.3)^2 + (y-0.7)^2 s.t. x + y = 1, x,y >= 0
  Eigen::MatrixXd H = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g(2);
  g << -0.6, -1.4;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2, 2);
  ActiveSetQp qp(H, g, Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Ones(1), A, Eigen::VectorXd::Zero(2));
  auto r = qp.solve(Eigen::Vector2d(0.5, 0.5));
  EXPECT_NEAR(r.x[0], 0.3, 1e-10);
  EXPECT_NEAR(r.x[1], 0.7, 1e-10);
  EXPECT_LT(r.kkt_residual, 1e-8);
}

TEST(ActiveSetQp, BoundBecomesActive) {
  // min (x+1)^2 + (y-2)^2 s.t. x + y = 1, x,y >= 0 -> (0, 1)
  Eigen::MatrixXd H = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g(2);
  g << 2.0, -4.0;
  ActiveSetQp qp(H, g, Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Identity(2, 2),
                 Eigen::VectorXd::Zero(2));
  auto r = qp.solve(Eigen::Vector2d(0.5, 0.5));
  EXPECT_NEAR(r.x[0], 0.0, 1e-12);
  EXPECT_NEAR(r.x[1], 1.0, 1e-12);
}

TEST(SolveUserWeights, HighPeakFloorExactFit) {
  auto sol = solve_user_weights(rows({{1, 2, 3}}), Eigen::VectorXd::Constant(1, 3.0), 0.0, 0.9);
  EXPECT_NEAR(sol.w.dot(Eigen::Vector3d(1, 2, 3)), 3.0, 1e-6);
  EXPECT_EQ(check_weight_invariants(sol.w, 0.9), "");
  EXPECT_EQ(sol.peak, 2u);
  EXPECT_NEAR(sol.w[2], 1.0, 1e-6);
}

TEST(SolveUserWeights, RegularizerPicksUniformAmongExactFits) {
  auto sol = solve_user_weights(rows({{1, 2, 3}}), Eigen::VectorXd::Constant(1, 2.0), 0.001, 0.0);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(sol.w[j], 1.0 / 3.0, 1e-6);
  EXPECT_EQ(sol.peak, 0u);  // every peak fits exactly; smallest index wins
}

TEST(SolveUserWeights, NoSetsIsAnError) {
  EXPECT_THROW(solve_user_weights(Eigen::MatrixXd(0, 3), Eigen::VectorXd(0), 0.1, 0.0), std::invalid_argument);
}

TEST(SolveUserWeights, SingleSubsetIsTrivial) {
  auto sol = solve_user_weights(rows({{4.0}}), Eigen::VectorXd::Constant(1, 1.0), 0.5, 0.3);
  EXPECT_EQ(sol.w.size(), 1);
  EXPECT_EQ(sol.w[0], 1.0);
}

TEST(SolveUserWeights, MatchesPerPeakSimplexGrid) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  const double floors[] = {0.0, 0.25, 0.5, 0.75, 0.9};
  const double lambdas[] = {0.0, 0.001, 0.01, 0.1};
  for (int trial = 0; trial < 12; ++trial) {
    const int nobs = 1 + trial % 4;
    Eigen::MatrixXd E(nobs, 3);
    Eigen::VectorXd r(nobs);
    for (int i = 0; i < nobs; ++i) {
      auto e = oracle::extremal_means({u(rng), u(rng)});
      for (int j = 0; j < 3; ++j) E(i, j) = e[j];
      r[i] = u(rng);
    }
    const double c = floors[trial % 5], lambda = lambdas[trial % 4];
    auto st = WeightFitStats::from(E, r);
    auto sol = solve_user_weights(st, lambda, c);
    EXPECT_EQ(check_weight_invariants(sol.w, c), "") << "trial " << trial;
    for (int k = 0; k < 3; ++k) {
      auto grid = oracle::simplex_grid(st.gram, st.cross, st.rr, lambda, k, static_cast<int>(std::lround(1000 * c)));
      ASSERT_TRUE(grid.found);
      const double qp = sol.per_peak[static_cast<std::size_t>(k)].objective;
      EXPECT_LE(qp, grid.objective + 1e-9) << "trial " << trial << " peak " << k;
      EXPECT_LT(qp - grid.objective, 1e-3);
      EXPECT_LE(grid.objective - qp, oracle::grid_resolution_bound(st.gram, st.cross, lambda))
          << "trial " << trial << " peak " << k;
    }
  }
}

TEST(CheckWeightInvariants, DetectsViolations) {
  EXPECT_EQ(check_weight_invariants(Eigen::Vector3d(0.2, 0.5, 0.3), 0.5), "");
  EXPECT_NE(check_weight_invariants(Eigen::Vector3d(0.2, 0.5, 0.2), 0.0), "");         // sum
  EXPECT_NE(check_weight_invariants(Eigen::Vector3d(0.4, 0.2, 0.4), 0.0), "");         // valley
  EXPECT_NE(check_weight_invariants(Eigen::Vector3d(0.3, 0.4, 0.3), 0.5), "");         // floor
  EXPECT_NE(check_weight_invariants(Eigen::Vector3d(-0.1, 0.6, 0.5), 0.0), "");        // sign
  EXPECT_EQ(check_weight_invariants(Eigen::Vector3d(0.4, 0.4, 0.2), 0.0), "");         // plateau
}
