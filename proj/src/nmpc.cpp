#include "optex/nmpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "optex/errors.hpp"
#include "optex/qp.hpp"

namespace optex {

void NmpcConfig::validate() const {
  if (horizon < 1) throw ConfigError("nmpc: horizon must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("nmpc: tolerance must be > 0");
  if (!(dt > 0.0)) throw ConfigError("nmpc: dt must be > 0");
  if (!(i_min < i_max)) throw ConfigError("nmpc: i_min must be < i_max");
  if (!(v_min < v_max)) throw ConfigError("nmpc: v_min must be < v_max");
  if (!(voltage_margin >= 0.0) || 2.0 * voltage_margin >= v_max - v_min)
    throw ConfigError("nmpc: invalid voltage margin");
  if (max_iterations < 1) throw ConfigError("nmpc: max_iterations must be >= 1");
  if (multistart < 1) throw ConfigError("nmpc: multistart must be >= 1");
}

HorizonEvaluation horizon_objective(const CellModel& model, const CellState& x0,
                                    const std::vector<double>& u, double dt, double T, Param target) {
  HorizonEvaluation ev;
  ev.voltages.reserve(u.size());
  CellState s = x0;
  try {
    for (double i : u) {
      s = model.step(s, i, dt, T);
      const double sens = voltage_sensitivity(model, s, i, T, target);
      ev.objective -= sens * sens;
      ev.voltages.push_back(s.v);
    }
  } catch (const SingularityError&) {
    ev.singular = true;
    ev.objective = 1e30;
  }
  return ev;
}

double NmpcRun::mean_step_time() const {
  if (stats.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : stats) sum += s.wall_time_s;
  return sum / static_cast<double>(stats.size());
}

namespace detail {

HorizonModel::HorizonModel(const CellModel& model, const CellState& x0, std::size_t horizon_, double dt,
                           double T, Param target)
    : horizon(horizon_), model_(model), T_(T), target_(target) {
  const auto& d = model.discretization(dt);
  Eigen::Matrix<double, 3, 9> C = Eigen::Matrix<double, 3, 9>::Zero();
  C(0, 0) = 1.0;
  C(1, 4) = 1.0;
  C(2, 8) = 1.0;
  free_.resize(horizon);
  impulse_.resize(horizon);
  Eigen::Matrix<double, 9, 1> x = x0.linear();
  Eigen::Matrix<double, 9, 1> b = d.Bd;
  for (std::size_t k = 0; k < horizon; ++k) {
    x = d.Ad * x;
    free_[k] = C * x;
    impulse_[k] = C * b;
    b = d.Ad * b;
  }
}

bool HorizonModel::evaluate(const std::vector<double>& u, double& objective, std::vector<double>& grad,
                            std::vector<double>& voltages, std::vector<std::vector<double>>& vjac) const {
  const auto& p = model_.params();
  const auto& ep = p.positive;
  const auto& en = p.negative;
  const std::size_t H = horizon;
  const double arr_p = std::exp((1.0 / p.T_ref - 1.0 / T_) * ep.E_io / p.gas_constant);
  const double arr_n = std::exp((1.0 / p.T_ref - 1.0 / T_) * en.E_io / p.gas_constant);
  // eta = gamma * I / g(c) with g(c) = sqrt(c (c_max - c) c_e)
  const double gamma_p = p.gas_constant * p.T0 * (-ep.J) / (p.faraday * arr_p * p.faraday * ep.k);
  const double gamma_n = p.gas_constant * p.T0 * (-en.J) / (p.faraday * arr_n * p.faraday * en.k);
  const double r_tot = p.R_ion + p.R_c;
  const bool cathode = target_ == Param::kp;

  objective = 0.0;
  grad.assign(H, 0.0);
  voltages.assign(H, 0.0);
  vjac.assign(H, std::vector<double>(H, 0.0));

  for (std::size_t k = 0; k < H; ++k) {
    Eigen::Vector3d c = free_[k];
    for (std::size_t j = 0; j <= k; ++j) c += impulse_[k - j] * u[j];
    const double cp = c(0), cn = c(1), phi = c(2);
    if (!(cp > 0.0 && cp < ep.c_max && cn > 0.0 && cn < en.c_max)) return false;

    const double gp = std::sqrt(cp * (ep.c_max - cp) * ep.c_e);
    const double gn = std::sqrt(cn * (en.c_max - cn) * en.c_e);
    const double rp = (ep.c_max - 2.0 * cp) / (2.0 * cp * (ep.c_max - cp));  // g'/g
    const double rn = (en.c_max - 2.0 * cn) / (2.0 * cn * (en.c_max - cn));
    const double eta_p = gamma_p * u[k] / gp;
    const double eta_n = gamma_n * u[k] / gn;

    const double xp = cp / ep.c_max, xn = cn / en.c_max;
    voltages[k] = ep.ocp(xp) - en.ocp(xn) - eta_p + eta_n + phi - r_tot * u[k];
    const double dv_dcp = ep.ocp.derivative(xp) / ep.c_max + eta_p * rp;
    const double dv_dcn = -en.ocp.derivative(xn) / en.c_max - eta_n * rn;
    const double dv_du = -gamma_p / gp + gamma_n / gn - r_tot;

    double s, ds_dc, ds_du;
    if (cathode) {
      s = eta_p / ep.k;
      ds_dc = -s * rp;
      ds_du = gamma_p / (gp * ep.k);
    } else {
      s = -eta_n / en.k;
      ds_dc = -s * rn;
      ds_du = -gamma_n / (gn * en.k);
    }
    objective -= s * s;
    const int row = cathode ? 0 : 1;
    for (std::size_t j = 0; j <= k; ++j) {
      const Eigen::Vector3d& h = impulse_[k - j];
      vjac[k][j] = dv_dcp * h(0) + dv_dcn * h(1) + h(2);
      grad[j] -= 2.0 * s * ds_dc * h(row);
    }
    vjac[k][k] += dv_du;
    grad[k] -= 2.0 * s * ds_du;
  }
  return true;
}

}  // namespace detail

namespace {

struct Evaluation {
  bool ok = false;
  double f = 0.0;  // physical objective
  std::vector<double> grad;
  std::vector<double> v;
  std::vector<std::vector<double>> vjac;
};

class HorizonSolver {
 public:
  HorizonSolver(const detail::HorizonModel& hm, const NmpcConfig& cfg, double f_scale)
      : hm_(hm), cfg_(cfg), H_(hm.horizon), f_scale_(f_scale),
        u_scale_(std::max(std::abs(cfg.i_min), std::abs(cfg.i_max))) {}

  Evaluation evaluate(const std::vector<double>& u) const {
    Evaluation e;
    e.ok = hm_.evaluate(u, e.f, e.grad, e.v, e.vjac);
    if (e.ok && cfg_.finite_difference_gradients) finite_difference(u, e);
    return e;
  }

  bool feasible(const Evaluation& e) const {
    if (!e.ok) return false;
    const double lo = cfg_.v_min + cfg_.voltage_margin - 1e-7;
    const double hi = cfg_.v_max - cfg_.voltage_margin + 1e-7;
    return std::all_of(e.v.begin(), e.v.end(), [&](double v) { return v >= lo && v <= hi; });
  }

  // Scaled constraint values c(z) <= 0: lower bounds then upper bounds.
  Eigen::VectorXd constraints(const Evaluation& e) const {
    Eigen::VectorXd c(2 * H_);
    for (std::size_t k = 0; k < H_; ++k) {
      c(k) = (cfg_.v_min + cfg_.voltage_margin - e.v[k]) / kVoltScale;
      c(H_ + k) = (e.v[k] - (cfg_.v_max - cfg_.voltage_margin)) / kVoltScale;
    }
    return c;
  }

  Eigen::MatrixXd constraint_jacobian(const Evaluation& e) const {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * H_, H_);
    for (std::size_t k = 0; k < H_; ++k) {
      for (std::size_t j = 0; j <= k; ++j) {
        const double dv = e.vjac[k][j] * u_scale_ / kVoltScale;
        J(k, j) = -dv;
        J(H_ + k, j) = dv;
      }
    }
    return J;
  }

  Eigen::VectorXd scaled_grad(const Evaluation& e) const {
    Eigen::VectorXd g(H_);
    for (std::size_t j = 0; j < H_; ++j) g(j) = e.grad[j] * u_scale_ / f_scale_;
    return g;
  }

  double merit(const Evaluation& e, double mu) const {
    if (!e.ok) return std::numeric_limits<double>::infinity();
    return e.f / f_scale_ + mu * std::max(0.0, constraints(e).maxCoeff());
  }

  // One SQP run from u0; returns the final iterate and its evaluation.
  std::pair<std::vector<double>, Evaluation> run(std::vector<double> u, int& iterations) const {
    for (auto& x : u) x = std::clamp(x, cfg_.i_min, cfg_.i_max);
    Evaluation e = evaluate(u);
    if (!e.ok) return {u, e};

    const Eigen::Index n = static_cast<Eigen::Index>(H_);
    const Eigen::Index nv = n + 1;  // steps + elastic slack
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
    double mu = 10.0;
    Eigen::VectorXd z(n);
    for (Eigen::Index j = 0; j < n; ++j) z(j) = u[j] / u_scale_;
    const double lb = cfg_.i_min / u_scale_, ub = cfg_.i_max / u_scale_;

    for (int it = 0; it < cfg_.max_iterations; ++it) {
      ++iterations;
      const Eigen::VectorXd g = scaled_grad(e);
      const Eigen::VectorXd c = constraints(e);
      const Eigen::MatrixXd Jc = constraint_jacobian(e);
      const double viol = std::max(0.0, c.maxCoeff());
      const double rho = std::max(100.0, 10.0 * mu);

      // QP in (d, t): 1/2 d'Bd + g'd + rho t  s.t.  box, c + Jc d <= t, t >= 0.
      Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(nv, nv);
      Q.topLeftCorner(n, n) = B;
      Q(n, n) = 1e-8;
      Eigen::VectorXd q(nv);
      q.head(n) = g;
      q(n) = rho;
      const Eigen::Index m = 2 * n + 2 * n + 1;
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, nv);
      Eigen::VectorXd b(m);
      A.topLeftCorner(n, n).setIdentity();
      b.head(n) = Eigen::VectorXd::Constant(n, ub) - z;
      A.block(n, 0, n, n) = -Eigen::MatrixXd::Identity(n, n);
      b.segment(n, n) = z - Eigen::VectorXd::Constant(n, lb);
      A.block(2 * n, 0, 2 * n, n) = Jc;
      A.block(2 * n, n, 2 * n, 1).setConstant(-1.0);
      b.segment(2 * n, 2 * n) = -c;
      A(m - 1, n) = -1.0;
      b(m - 1) = 0.0;

      const QpResult qp = solve_dense_qp(Q, q, A, b);
      const Eigen::VectorXd d = qp.x.head(n);
      const double t = std::max(0.0, qp.x(n));
      const Eigen::VectorXd lam_c = qp.lambda.segment(2 * n, 2 * n);
      mu = std::max(mu, 1.5 * lam_c.sum() + 1.0);

      if (d.lpNorm<Eigen::Infinity>() < cfg_.tolerance && viol <= 1e-9) break;

      const double dphi = g.dot(d) - mu * (viol - t);
      if (dphi >= -1e-14 && viol <= 1e-9) break;

      const double phi0 = merit(e, mu);
      double alpha = 1.0;
      Evaluation e_new;
      Eigen::VectorXd z_new;
      bool accepted = false;
      for (int ls = 0; ls < 30; ++ls) {
        z_new = (z + alpha * d).cwiseMax(lb).cwiseMin(ub);
        std::vector<double> u_new(H_);
        for (Eigen::Index j = 0; j < n; ++j) u_new[j] = z_new(j) * u_scale_;
        e_new = evaluate(u_new);
        if (merit(e_new, mu) <= phi0 + 1e-4 * alpha * std::min(dphi, 0.0)) {
          accepted = true;
          u = u_new;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;

      // Damped BFGS on the Lagrangian gradient.
      const Eigen::VectorXd s = z_new - z;
      const Eigen::VectorXd gl_old = g + Jc.transpose() * lam_c;
      const Eigen::VectorXd gl_new = scaled_grad(e_new) + constraint_jacobian(e_new).transpose() * lam_c;
      Eigen::VectorXd y = gl_new - gl_old;
      const Eigen::VectorXd Bs = B * s;
      const double sBs = s.dot(Bs);
      if (sBs > 1e-16) {
        double sy = s.dot(y);
        if (sy < 0.2 * sBs) {
          const double theta = 0.8 * sBs / (sBs - sy);
          y = theta * y + (1.0 - theta) * Bs;
          sy = s.dot(y);
        }
        B += y * y.transpose() / sy - Bs * Bs.transpose() / sBs;
      }
      z = z_new;
      e = std::move(e_new);
      if (s.lpNorm<Eigen::Infinity>() < cfg_.tolerance && viol <= 1e-9) break;
    }
    return {u, e};
  }

 private:
  void finite_difference(const std::vector<double>& u, Evaluation& e) const {
    const double h = 1e-4;
    std::vector<double> g, v;
    std::vector<std::vector<double>> vj;
    for (std::size_t j = 0; j < H_; ++j) {
      auto up = u, dn = u;
      up[j] += h;
      dn[j] -= h;
      double fu = 0.0, fd = 0.0;
      std::vector<double> vu, vd;
      if (!hm_.evaluate(up, fu, g, vu, vj) || !hm_.evaluate(dn, fd, g, vd, vj)) continue;
      e.grad[j] = (fu - fd) / (2 * h);
      for (std::size_t k = 0; k < H_; ++k) e.vjac[k][j] = (vu[k] - vd[k]) / (2 * h);
    }
  }

  static constexpr double kVoltScale = 0.1;
  const detail::HorizonModel& hm_;
  const NmpcConfig& cfg_;
  std::size_t H_;
  double f_scale_;
  double u_scale_;
};

std::vector<std::vector<double>> starting_points(const std::vector<double>& prev, const NmpcConfig& cfg) {
  const std::size_t H = cfg.horizon;
  std::vector<double> warm(H, 0.0);
  if (cfg.warm_start && prev.size() == H) {
    std::copy(prev.begin() + 1, prev.end(), warm.begin());
    warm[H - 1] = prev.back();
  }
  std::vector<double> alt_pos(H), alt_neg(H);
  for (std::size_t k = 0; k < H; ++k) {
    alt_pos[k] = k % 2 == 0 ? cfg.i_max : cfg.i_min;
    alt_neg[k] = k % 2 == 0 ? cfg.i_min : cfg.i_max;
  }
  std::vector<std::vector<double>> all = {warm,
                                          alt_pos,
                                          alt_neg,
                                          std::vector<double>(H, 0.0),
                                          std::vector<double>(H, cfg.i_max),
                                          std::vector<double>(H, cfg.i_min)};
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(cfg.multistart)));
  return all;
}

}  // namespace

StepSolution solve_step(const CellModel& model, const CellState& x0,
                        const std::vector<double>& prev_solution, const NmpcConfig& config, double T,
                        Param target) {
  config.validate();
  const detail::HorizonModel hm(model, x0, config.horizon, config.dt, T, target);

  // Objective scale: squared sensitivity of a full-scale move at x0, per step.
  double f_scale = 1.0;
  try {
    const double i_ref = std::max(std::abs(config.i_min), std::abs(config.i_max));
    const double s = voltage_sensitivity(model, x0, i_ref, T, target);
    f_scale = std::max(1.0, s * s);
  } catch (const SingularityError&) {
  }
  const HorizonSolver solver(hm, config, f_scale);

  StepSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  auto consider = [&](const std::vector<double>& u, const Evaluation& e) {
    if (solver.feasible(e) && e.f < best.objective) {
      best.objective = e.f;
      best.sequence = u;
    }
  };

  const auto starts = starting_points(prev_solution, config);
  consider(starts.front(), solver.evaluate(starts.front()));  // warm start as-is
  for (const auto& u0 : starts) {
    int iters = 0;
    auto [u, e] = solver.run(u0, iters);
    best.iterations += iters;
    consider(u, e);
  }

  if (best.sequence.empty()) {
    best.sequence.assign(config.horizon, 0.0);
    best.fallback = true;
    best.diagnostic = "no feasible start; applying zero current";
    const auto e = solver.evaluate(best.sequence);
    best.objective = e.ok ? e.f : 0.0;
  }
  best.applied_current = best.sequence.front();
  return best;
}

NmpcRun run_nmpc(const CellParameters& params, const EnvConfig& env_config, const NmpcConfig& nmpc_config,
                 Param target) {
  env_config.validate();
  nmpc_config.validate();
  const CellModel model(params);
  NmpcRun run;
  run.profile.dt = nmpc_config.dt;
  run.profile.temperature = env_config.temperature;
  run.profile.label = std::string("nmpc_") + to_string(target);

  CellState state = model.init_state(env_config.soc0);
  std::vector<double> prev;
  int consecutive_failures = 0;
  for (std::size_t k = 0; k < env_config.episode_len; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const StepSolution sol = solve_step(model, state, prev, nmpc_config, env_config.temperature, target);
    const auto t1 = std::chrono::steady_clock::now();
    run.stats.push_back({sol.iterations, sol.objective, std::chrono::duration<double>(t1 - t0).count(),
                         sol.fallback});

    consecutive_failures = sol.fallback ? consecutive_failures + 1 : 0;
    if (consecutive_failures > nmpc_config.max_consecutive_failures) {
      run.aborted = true;
      run.diagnostic = "solver failed " + std::to_string(consecutive_failures) +
                       " consecutive steps at step " + std::to_string(k) + ": " + sol.diagnostic;
      break;
    }

    CellState next;
    try {
      next = model.step(state, sol.applied_current, nmpc_config.dt, env_config.temperature);
    } catch (const SingularityError& e) {
      ++run.violations;
      run.aborted = true;
      run.diagnostic = std::string("singular state at step ") + std::to_string(k) + ": " + e.what();
      break;
    }
    if (next.v < nmpc_config.v_min || next.v > nmpc_config.v_max) {
      ++run.violations;
      run.aborted = true;
      run.diagnostic = "voltage bound violated at step " + std::to_string(k);
      break;
    }
    run.profile.currents.push_back(sol.applied_current);
    run.voltages.push_back(next.v);
    state = next;
    prev = sol.sequence;
  }
  run.fisher = fisher_information(analytic_sensitivity(model, run.profile, env_config.soc0, target),
                                  params.sigma_y);
  return run;
}

}  // namespace optex
