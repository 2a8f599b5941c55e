#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "optex/errors.hpp"
#include "optex/oed_env.hpp"

using namespace optex;

namespace {

EnvConfig short_config(Param target, std::size_t len = 200) {
  EnvConfig c;
  c.target = target;
  c.episode_len = len;
  return c;
}

}  // namespace

TEST(OedEnv, ResetIsDeterministic) {
  OedEnv a(default_cell_parameters(), short_config(Param::kp));
  OedEnv b(default_cell_parameters(), short_config(Param::kp));
  const auto oa = a.reset(42);
  const auto ob = b.reset(42);
  EXPECT_EQ(oa.v, ob.v);
  EXPECT_EQ(oa.c_bar_se_p, ob.c_bar_se_p);
  EXPECT_FALSE(a.done());
  EXPECT_EQ(a.steps_taken(), 0u);
}

TEST(OedEnv, StepBeforeResetIsUsageError) {
  OedEnv env(default_cell_parameters(), short_config(Param::kp));
  EXPECT_THROW(env.step(0.0), UsageError);
}

TEST(OedEnv, ActionsAreClipped) {
  OedEnv env(default_cell_parameters(), short_config(Param::kp));
  env.reset();
  const auto out = env.step(400.0);
  EXPECT_TRUE(out.info.clipped);
  EXPECT_EQ(out.info.applied_current, 150.0);
  EXPECT_EQ(out.info.requested_current, 400.0);
}

TEST(OedEnv, ChargingFromFullTerminatesWithPenalty) {
  OedEnv env(default_cell_parameters(), short_config(Param::kn));
  env.reset();
  StepOutcome out;
  do {
    out = env.step(-150.0);
  } while (!env.done());
  EXPECT_TRUE(out.terminated);
  EXPECT_FALSE(out.truncated);
  EXPECT_EQ(out.reward, -5.0);
  EXPECT_EQ(out.info.violation, Violation::over_voltage);
  EXPECT_THROW(env.step(0.0), UsageError);
}

TEST(OedEnv, TruncatesAtEpisodeLength) {
  OedEnv env(default_cell_parameters(), short_config(Param::kp, 30));
  env.reset();
  StepOutcome out;
  for (int k = 0; k < 30; ++k) {
    ASSERT_FALSE(env.done());
    out = env.step(30.0);
  }
  EXPECT_TRUE(out.truncated);
  EXPECT_FALSE(out.terminated);
  EXPECT_TRUE(env.done());
}

TEST(OedEnv, ZeroCurrentEarnsNothing) {
  const auto r = rollout([](const Observation&) { return 0.0; }, short_config(Param::kp), default_cell_parameters());
  EXPECT_EQ(r.total_reward, 0.0);
  EXPECT_EQ(r.fisher.fi_raw, 0.0);
  EXPECT_EQ(r.profile.currents.size(), 200u);
}

TEST(OedEnv, RewardSumEqualsProfileFisher) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-150.0, 150.0);
  for (Param t : {Param::kp, Param::kn}) {
    auto cfg = short_config(t, 400);
    const auto params = default_cell_parameters();
    const auto r = rollout([&](const Observation& o) { return o.v < 3.3 ? -80.0 : d(rng); }, cfg, params);
    double reward = 0.0;
    for (const auto& row : r.log) {
      if (row.reward != cfg.penalty_M) reward += row.reward;
    }
    const CellModel m(params);
    const auto fi = fisher_information(analytic_sensitivity(m, r.profile, cfg.soc0, t), params.sigma_y);
    EXPECT_NEAR(reward, fi.fi_raw, 1e-9 * fi.fi_raw);
    EXPECT_NEAR(r.fisher.fi_raw, fi.fi_raw, 1e-9 * fi.fi_raw);
  }
}

TEST(OedEnv, InBoundsRewardImpliesInBoundsVoltage) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-150.0, 150.0);
  auto cfg = short_config(Param::kp, 1800);
  OedEnv env(default_cell_parameters(), cfg);
  for (int episode = 0; episode < 5; ++episode) {
    env.reset(episode);
    while (!env.done()) {
      const auto out = env.step(d(rng) + 60.0);
      if (out.reward > cfg.penalty_M) {
        EXPECT_GE(out.observation.v, cfg.v_min);
        EXPECT_LE(out.observation.v, cfg.v_max);
      }
    }
  }
}

TEST(OedEnv, ReplayIsBitwiseIdentical) {
  auto policy = [](const Observation& o) { return o.v > 3.4 ? 150.0 : -150.0; };
  const auto a = rollout(policy, short_config(Param::kn, 300), default_cell_parameters(), 7);
  const auto b = rollout(policy, short_config(Param::kn, 300), default_cell_parameters(), 7);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    EXPECT_EQ(a.log[k].voltage, b.log[k].voltage);
    EXPECT_EQ(a.log[k].reward, b.log[k].reward);
  }
}

TEST(EnvConfig, Validation) {
  EnvConfig c;
  c.i_min = 10.0;
  c.i_max = -10.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EnvConfig{};
  c.episode_len = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EnvConfig{};
  c.penalty_M = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
