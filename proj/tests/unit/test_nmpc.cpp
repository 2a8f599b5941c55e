#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "optex/errors.hpp"
#include "optex/nmpc.hpp"

using namespace optex;

namespace {

const CellModel& model() {
  static const CellModel m(default_cell_parameters());
  return m;
}

constexpr double kT = 298.15;

CellState perturbed_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> soc(0.08, 0.92), cur(-150.0, 150.0);
  CellState s = model().init_state(soc(rng));
  for (int k = 0; k < 5; ++k) s = model().step(s, cur(rng), 1.0, kT);
  return s;
}

}  // namespace

TEST(HorizonObjective, ZeroInputIsZero) {
  const auto ev = horizon_objective(model(), model().init_state(0.5), std::vector<double>(20, 0.0), 1.0, kT,
                                    Param::kp);
  EXPECT_EQ(ev.objective, 0.0);
  EXPECT_FALSE(ev.singular);
  EXPECT_EQ(ev.voltages.size(), 20u);
}

TEST(HorizonObjective, EqualsNegativeFisherOfSegment) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-150.0, 150.0);
  std::vector<double> u(20);
  for (auto& x : u) x = d(rng);
  const double soc0 = 0.5;
  for (Param p : {Param::kp, Param::kn}) {
    const auto ev = horizon_objective(model(), model().init_state(soc0), u, 1.0, kT, p);
    ExcitationProfile prof;
    prof.currents = u;
    const auto fi = fisher_information(analytic_sensitivity(model(), prof, soc0, p), 0.01);
    EXPECT_NEAR(-ev.objective, fi.fi_raw, 1e-9 * fi.fi_raw);
  }
}

TEST(HorizonObjective, SensitivityEvenInCurrentAtFixedState) {
  const auto x0 = model().step(model().init_state(0.4), 40.0, 1.0, kT);
  for (Param p : {Param::kp, Param::kn}) {
    for (double i : {10.0, 75.0, 150.0}) {
      const double a = voltage_sensitivity(model(), x0, i, kT, p);
      const double b = voltage_sensitivity(model(), x0, -i, kT, p);
      EXPECT_NEAR(a * a, b * b, 1e-12 * a * a);
    }
  }
}

TEST(HorizonObjective, SingleMoveNearlyEvenFromRest) {
  // The step shifts the surface concentration by +/-dc for +/-I. With the
  // sensitivity proportional to 1/g(c), the relative gap between the two
  // objectives is 4 |g'/g| dc to first order.
  const auto x0 = model().init_state(0.4);
  const auto& prm = model().params();
  for (Param p : {Param::kp, Param::kn}) {
    const auto& e = p == Param::kp ? prm.positive : prm.negative;
    for (double i : {10.0, 75.0, 150.0}) {
      const auto a = horizon_objective(model(), x0, {i}, 1.0, kT, p);
      const auto b = horizon_objective(model(), x0, {-i}, 1.0, kT, p);
      const double gap = std::abs(a.objective - b.objective) / std::abs(a.objective);
      const auto s1 = model().step(x0, i, 1.0, kT);
      const double c0 = p == Param::kp ? x0.p.c_se : x0.n.c_se;
      const double c1 = p == Param::kp ? s1.p.c_se : s1.n.c_se;
      const double ratio = (e.c_max - 2 * c0) / (2 * c0 * (e.c_max - c0));
      const double predicted = 4.0 * std::abs(ratio * (c1 - c0));
      EXPECT_NEAR(gap / predicted, 1.0, 0.05) << to_string(p) << " I=" << i;
    }
  }
}

TEST(HorizonObjective, SingularityIsFlagged) {
  const auto ev = horizon_objective(model(), model().init_state(1.0), std::vector<double>(5000, -150.0), 1.0, kT,
                                    Param::kp);
  EXPECT_TRUE(ev.singular);
  EXPECT_GT(ev.objective, 0.0);
}

TEST(HorizonModel, MatchesFullSimulationAndFiniteDifferences) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> d(-150.0, 150.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x0 = perturbed_state(rng);
    std::vector<double> u(12);
    for (auto& x : u) x = d(rng);
    for (Param p : {Param::kp, Param::kn}) {
      const detail::HorizonModel hm(model(), x0, u.size(), 1.0, kT, p);
      double f;
      std::vector<double> g, v;
      std::vector<std::vector<double>> J;
      ASSERT_TRUE(hm.evaluate(u, f, g, v, J));
      const auto ref = horizon_objective(model(), x0, u, 1.0, kT, p);
      EXPECT_NEAR(f, ref.objective, 1e-10 * std::abs(ref.objective));
      for (std::size_t k = 0; k < u.size(); ++k) EXPECT_NEAR(v[k], ref.voltages[k], 1e-12);
      const double h = 1e-3;
      for (std::size_t j = 0; j < u.size(); ++j) {
        auto up = u, dn = u;
        up[j] += h;
        dn[j] -= h;
        const auto a = horizon_objective(model(), x0, up, 1.0, kT, p);
        const auto b = horizon_objective(model(), x0, dn, 1.0, kT, p);
        const double fd = (a.objective - b.objective) / (2 * h);
        EXPECT_NEAR(g[j], fd, 1e-6 * std::abs(fd) + 1e-6 * std::abs(f));
        for (std::size_t k = 0; k < u.size(); ++k)
          EXPECT_NEAR(J[k][j], (a.voltages[k] - b.voltages[k]) / (2 * h), 1e-8);
      }
    }
  }
}

TEST(SolveStep, SingleStepMatchesGridSearch) {
  std::mt19937_64 rng(21);
  NmpcConfig cfg;
  cfg.horizon = 1;
  const double lo = cfg.v_min + cfg.voltage_margin, hi = cfg.v_max - cfg.voltage_margin;
  int checked = 0;
  while (checked < 50) {
    const auto x0 = perturbed_state(rng);
    if (x0.v < lo || x0.v > hi) continue;
    const Param p = checked % 2 == 0 ? Param::kp : Param::kn;
    double best_u = 0.0, best_f = 0.0;
    bool any = false;
    for (int i = 0; i <= 300; ++i) {
      const double u = -150.0 + i;
      const auto ev = horizon_objective(model(), x0, {u}, 1.0, kT, p);
      if (ev.singular || ev.voltages[0] < lo || ev.voltages[0] > hi) continue;
      if (!any || ev.objective < best_f) {
        best_f = ev.objective;
        best_u = u;
        any = true;
      }
    }
    if (!any) continue;
    const auto sol = solve_step(model(), x0, {}, cfg, kT, p);
    EXPECT_FALSE(sol.fallback);
    // Within one grid cell, or at least as good as the best grid point.
    const bool close = std::abs(sol.applied_current - best_u) <= 1.0 + 1e-9;
    EXPECT_TRUE(close || sol.objective <= best_f) << "grid " << best_u << " solver " << sol.applied_current;
    ++checked;
  }
}

TEST(SolveStep, NeverWorseThanWarmStartAndFeasible) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> d(-20.0, 20.0);
  NmpcConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const auto x0 = perturbed_state(rng);
    std::vector<double> prev(cfg.horizon);
    for (auto& x : prev) x = d(rng);
    const auto sol = solve_step(model(), x0, prev, cfg, kT, Param::kp);
    std::vector<double> warm(prev.begin() + 1, prev.end());
    warm.push_back(prev.back());
    const auto w = horizon_objective(model(), x0, warm, 1.0, kT, Param::kp);
    const bool warm_ok = !w.singular && std::all_of(w.voltages.begin(), w.voltages.end(), [&](double v) {
      return v >= cfg.v_min + cfg.voltage_margin && v <= cfg.v_max - cfg.voltage_margin;
    });
    if (warm_ok) EXPECT_LE(sol.objective, w.objective * (1 - 1e-12));
    const auto ev = horizon_objective(model(), x0, sol.sequence, 1.0, kT, Param::kp);
    if (!sol.fallback) {
      for (double v : ev.voltages) {
        EXPECT_GE(v, cfg.v_min);
        EXPECT_LE(v, cfg.v_max);
      }
    }
    for (double u : sol.sequence) EXPECT_LE(std::abs(u), 150.0);
  }
}

TEST(SolveStep, ZeroIsNotOptimalFromMidSoc) {
  NmpcConfig cfg;
  const auto sol = solve_step(model(), model().init_state(0.5), {}, cfg, kT, Param::kn);
  EXPECT_LT(sol.objective, 0.0);
  EXPECT_NE(sol.applied_current, 0.0);
}

TEST(SolveStep, OptimalWarmStartIsStationary) {
  // With one move, shift-and-hold hands the previous solution back unchanged.
  NmpcConfig cfg;
  cfg.horizon = 1;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x0 = perturbed_state(rng);
    const auto first = solve_step(model(), x0, {}, cfg, kT, Param::kn);
    if (first.fallback) continue;
    NmpcConfig warm_only = cfg;
    warm_only.multistart = 1;
    const auto again = solve_step(model(), x0, first.sequence, warm_only, kT, Param::kn);
    EXPECT_NEAR(again.sequence[0], first.sequence[0], 1e-6 * 150.0);
  }
}

TEST(SolveStep, Deterministic) {
  NmpcConfig cfg;
  const auto x0 = model().init_state(0.7);
  const auto a = solve_step(model(), x0, {}, cfg, kT, Param::kp);
  const auto b = solve_step(model(), x0, {}, cfg, kT, Param::kp);
  EXPECT_EQ(a.sequence, b.sequence);
  EXPECT_EQ(a.objective, b.objective);
}

TEST(NmpcConfig, Validation) {
  NmpcConfig c;
  c.horizon = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = NmpcConfig{};
  c.tolerance = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunNmpc, ShortClosedLoopStaysInBounds) {
  EnvConfig env;
  env.episode_len = 120;
  NmpcConfig cfg;
  const auto run = run_nmpc(default_cell_parameters(), env, cfg, Param::kn);
  EXPECT_FALSE(run.aborted) << run.diagnostic;
  EXPECT_EQ(run.profile.currents.size(), 120u);
  EXPECT_EQ(run.stats.size(), 120u);
  EXPECT_EQ(run.violations, 0u);
  for (double v : run.voltages) {
    EXPECT_GE(v, env.v_min);
    EXPECT_LE(v, env.v_max);
  }
  ExcitationProfile cc;
  cc.currents.assign(120, default_cell_parameters().capacity_Ah);
  const CellModel m(default_cell_parameters());
  const auto fi_cc = fisher_information(analytic_sensitivity(m, cc, 1.0, Param::kn), 0.01);
  EXPECT_GT(run.fisher.fi_raw, fi_cc.fi_raw);
  EXPECT_GT(run.mean_step_time(), 0.0);
}
