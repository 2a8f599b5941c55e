#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "optex/cell_model.hpp"
#include "optex/sensitivity.hpp"

namespace optex {

struct EnvConfig {
  Param target = Param::kp;
  double i_min = -150.0;  // A
  double i_max = 150.0;   // A
  double v_min = 2.8;     // V
  double v_max = 4.2;     // V
  double penalty_M = -5.0;
  std::size_t episode_len = 1800;
  double dt = 1.0;
  double soc0 = 1.0;
  double temperature = 298.15;  // K

  void validate() const;  // throws ConfigError
};

struct Observation {
  double v = 0.0;
  double c_bar_se_p = 0.0;  // c_se,p / c_max,p
};

enum class Violation { none, under_voltage, over_voltage, singularity };
const char* to_string(Violation v);

struct StepInfo {
  double soc = 0.0;
  double sensitivity = 0.0;
  double requested_current = 0.0;
  double applied_current = 0.0;
  bool clipped = false;
  Violation violation = Violation::none;
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;  // squared target sensitivity, or penalty_M on violation
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

/// Episodic wrapper of the cell model: action = current, observation = (V, c_se,p/c_max,p).
/// A voltage violation keeps the transition, pays penalty_M and terminates.
class OedEnv {
 public:
  OedEnv(CellParameters params, EnvConfig config);

  Observation reset(std::uint64_t seed = 0);
  StepOutcome step(double action);

  const EnvConfig& config() const { return config_; }
  const CellModel& model() const { return model_; }
  const CellState& state() const { return state_; }
  std::size_t steps_taken() const { return counter_; }
  bool done() const { return done_; }
  std::uint64_t seed() const { return seed_; }

  Observation observe(const CellState& s) const;

 private:
  CellModel model_;
  EnvConfig config_;
  CellState state_;
  std::size_t counter_ = 0;
  bool done_ = true;
  std::uint64_t seed_ = 0;
};

struct EpisodeLogRow {
  std::size_t step = 0;
  double current = 0.0;
  double voltage = 0.0;
  double soc = 0.0;
  double reward = 0.0;
  double sensitivity = 0.0;
};

struct RolloutResult {
  ExcitationProfile profile;  // applied in-bounds steps only
  FisherSummary fisher;
  std::vector<EpisodeLogRow> log;  // every step, including a terminating violation
  double total_reward = 0.0;
  std::size_t violations = 0;
};

using Policy = std::function<double(const Observation&)>;

/// Noise-free rollout of a policy for one episode.
RolloutResult rollout(const Policy& policy, const EnvConfig& config, const CellParameters& params,
                      std::uint64_t seed = 0);

}  // namespace optex
