#include "optex/oed_env.hpp"

#include <algorithm>
#include <cmath>

#include "optex/errors.hpp"

namespace optex {

void EnvConfig::validate() const {
  if (!(i_min < i_max)) throw ConfigError("env: i_min must be < i_max");
  if (!(v_min < v_max)) throw ConfigError("env: v_min must be < v_max");
  if (episode_len == 0) throw ConfigError("env: episode_len must be > 0");
  if (!(penalty_M < 0.0)) throw ConfigError("env: penalty_M must be negative");
  if (!(dt > 0.0)) throw ConfigError("env: dt must be > 0");
  if (!(soc0 >= 0.0 && soc0 <= 1.0)) throw ConfigError("env: soc0 must lie in [0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("env: temperature must be > 0");
}

const char* to_string(Violation v) {
  switch (v) {
    case Violation::none: return "none";
    case Violation::under_voltage: return "under_voltage";
    case Violation::over_voltage: return "over_voltage";
    case Violation::singularity: return "singularity";
  }
  return "unknown";
}

OedEnv::OedEnv(CellParameters params, EnvConfig config)
    : model_(std::move(params)), config_(config) {
  config_.validate();
}

Observation OedEnv::observe(const CellState& s) const {
  return {s.v, model_.surface_stoich_p(s)};
}

Observation OedEnv::reset(std::uint64_t seed) {
  seed_ = seed;
  state_ = model_.init_state(config_.soc0);
  counter_ = 0;
  done_ = false;
  return observe(state_);
}

StepOutcome OedEnv::step(double action) {
  if (done_) throw UsageError("episode finished; call reset()");
  StepOutcome out;
  out.info.requested_current = action;
  const double applied = std::clamp(action, config_.i_min, config_.i_max);
  out.info.applied_current = applied;
  out.info.clipped = applied != action;

  ++counter_;
  try {
    state_ = model_.step(state_, applied, config_.dt, config_.temperature);
    out.info.sensitivity =
        voltage_sensitivity(model_, state_, applied, config_.temperature, config_.target);
    if (state_.v < config_.v_min) {
      out.info.violation = Violation::under_voltage;
    } else if (state_.v > config_.v_max) {
      out.info.violation = Violation::over_voltage;
    }
  } catch (const SingularityError&) {
    out.info.violation = Violation::singularity;
    out.info.sensitivity = 0.0;
  }
  out.info.soc = model_.soc(state_);
  out.observation = observe(state_);

  if (out.info.violation != Violation::none) {
    out.reward = config_.penalty_M;
    out.terminated = true;
    done_ = true;
  } else {
    out.reward = out.info.sensitivity * out.info.sensitivity;
    if (counter_ >= config_.episode_len) {
      out.truncated = true;
      done_ = true;
    }
  }
  return out;
}

RolloutResult rollout(const Policy& policy, const EnvConfig& config, const CellParameters& params,
                      std::uint64_t seed) {
  OedEnv env(params, config);
  RolloutResult r;
  r.profile.dt = config.dt;
  r.profile.temperature = config.temperature;
  r.profile.label = "rollout";
  SensitivityTrace trace;
  trace.parameter = config.target;
  trace.dt = config.dt;

  Observation obs = env.reset(seed);
  while (!env.done()) {
    const auto out = env.step(policy(obs));
    r.log.push_back({env.steps_taken(), out.info.applied_current, out.observation.v, out.info.soc,
                     out.reward, out.info.sensitivity});
    r.total_reward += out.reward;
    if (out.info.violation != Violation::none) {
      ++r.violations;
    } else {
      r.profile.currents.push_back(out.info.applied_current);
      trace.values.push_back(out.info.sensitivity);
    }
    obs = out.observation;
  }
  r.fisher = fisher_information(trace, params.sigma_y);
  return r;
}

}  // namespace optex
