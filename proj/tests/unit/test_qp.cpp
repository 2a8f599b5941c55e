#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "optex/qp.hpp"

using namespace optex;

TEST(DenseQp, UnconstrainedMinimum) {
  Eigen::MatrixXd Q(2, 2);
  Q << 4, 1, 1, 3;
  Eigen::VectorXd c(2);
  c << -1, -2;
  // A loose box keeps the problem bounded without activating.
  Eigen::MatrixXd A(4, 2);
  A << 1, 0, -1, 0, 0, 1, 0, -1;
  Eigen::VectorXd b = Eigen::VectorXd::Constant(4, 100.0);
  const auto r = solve_dense_qp(Q, c, A, b);
  ASSERT_TRUE(r.converged);
  const Eigen::VectorXd x_star = Q.ldlt().solve(-c);
  EXPECT_LT((r.x - x_star).norm(), 1e-7);
}

TEST(DenseQp, ActiveBoundAndMultiplier) {
  // min 1/2 x^2 - 3x  s.t. x <= 1  ->  x = 1, lambda = 2
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd c = Eigen::VectorXd::Constant(1, -3.0);
  Eigen::MatrixXd A = Eigen::MatrixXd::Ones(1, 1);
  Eigen::VectorXd b = Eigen::VectorXd::Ones(1);
  const auto r = solve_dense_qp(Q, c, A, b);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), 1.0, 1e-7);
  EXPECT_NEAR(r.lambda(0), 2.0, 1e-6);
}

TEST(DenseQp, LinearProgramOnSimplexCorner) {
  // Nearly linear objective over a triangle; the optimum sits at a vertex.
  Eigen::MatrixXd Q = 1e-9 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd c(2);
  c << -1.0, -2.0;
  Eigen::MatrixXd A(3, 2);
  A << -1, 0, 0, -1, 1, 1;
  Eigen::VectorXd b(3);
  b << 0, 0, 1;
  const auto r = solve_dense_qp(Q, c, A, b);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), 0.0, 1e-6);
  EXPECT_NEAR(r.x(1), 1.0, 1e-6);
}

TEST(DenseQp, KktResidualsOnRandomProblem) {
  std::srand(4);
  const int n = 8, m = 12;
  Eigen::MatrixXd L = Eigen::MatrixXd::Random(n, n);
  Eigen::MatrixXd Q = L * L.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd c = Eigen::VectorXd::Random(n) * 5.0;
  Eigen::MatrixXd A = Eigen::MatrixXd::Random(m, n);
  Eigen::VectorXd b = Eigen::VectorXd::Random(m).cwiseAbs() + Eigen::VectorXd::Constant(m, 0.1);
  const auto r = solve_dense_qp(Q, c, A, b);
  ASSERT_TRUE(r.converged);
  const Eigen::VectorXd slack = b - A * r.x;
  EXPECT_GT(slack.minCoeff(), -1e-8);
  EXPECT_GT(r.lambda.minCoeff(), -1e-10);
  EXPECT_LT((Q * r.x + c + A.transpose() * r.lambda).norm(), 1e-7);
  EXPECT_LT(std::abs(slack.dot(r.lambda)), 1e-7);
}
