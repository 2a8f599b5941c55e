#include "optex/qp.hpp"

#include <algorithm>
#include <cmath>

namespace optex {

namespace {

// Largest step in (0, 1] keeping v + alpha dv > 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  return alpha;
}

}  // namespace

QpResult solve_dense_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                        const Eigen::VectorXd& b, int max_iterations, double tol) {
  const Eigen::Index n = Q.rows();
  const Eigen::Index m = A.rows();
  QpResult res;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd s = (b - A * x).cwiseMax(1.0);
  Eigen::VectorXd lam = Eigen::VectorXd::Ones(m);

  const double scale = 1.0 + std::max(c.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>());

  for (int it = 0; it < max_iterations; ++it) {
    res.iterations = it + 1;
    const Eigen::VectorXd r_d = Q * x + c + A.transpose() * lam;
    const Eigen::VectorXd r_p = A * x + s - b;
    const double mu = s.dot(lam) / static_cast<double>(m);
    if (r_d.lpNorm<Eigen::Infinity>() < tol * scale && r_p.lpNorm<Eigen::Infinity>() < tol * scale &&
        mu < tol) {
      res.converged = true;
      break;
    }

    const Eigen::VectorXd d = lam.cwiseQuotient(s);
    Eigen::MatrixXd K = Q + A.transpose() * d.asDiagonal() * A;
    K.diagonal().array() += 1e-12;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(K);

    auto direction = [&](const Eigen::VectorXd& r_c, Eigen::VectorXd& dx, Eigen::VectorXd& ds,
                         Eigen::VectorXd& dl) {
      const Eigen::VectorXd t = (-r_c + lam.cwiseProduct(r_p)).cwiseQuotient(s);
      dx = ldlt.solve(-r_d - A.transpose() * t);
      ds = -r_p - A * dx;
      dl = t + d.cwiseProduct(A * dx);
    };

    Eigen::VectorXd dx, ds, dl;
    direction(lam.cwiseProduct(s), dx, ds, dl);
    const double a_aff = std::min(max_step(s, ds), max_step(lam, dl));
    const double mu_aff = (s + a_aff * ds).dot(lam + a_aff * dl) / static_cast<double>(m);
    const double sigma = std::pow(mu_aff / mu, 3);

    const Eigen::VectorXd r_c =
        lam.cwiseProduct(s) + ds.cwiseProduct(dl) - Eigen::VectorXd::Constant(m, sigma * mu);
    direction(r_c, dx, ds, dl);
    const double alpha = 0.99 * std::min(max_step(s, ds), max_step(lam, dl));
    x += alpha * dx;
    s += alpha * ds;
    lam += alpha * dl;
  }
  res.x = x;
  res.lambda = lam;
  return res;
}

}  // namespace optex
