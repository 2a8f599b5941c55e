#pragma once

#include <Eigen/Dense>

namespace optex {

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;  // multipliers of A x <= b
  int iterations = 0;
  bool converged = false;
};

/// Dense convex QP  min 1/2 x'Qx + c'x  s.t.  A x <= b  by a Mehrotra
/// predictor-corrector interior-point method. Q must be positive semidefinite
/// and Q + A'DA positive definite for positive diagonal D.
QpResult solve_dense_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                        const Eigen::VectorXd& b, int max_iterations = 60, double tol = 1e-10);

}  // namespace optex
