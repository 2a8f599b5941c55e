#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "optex/nn.hpp"
#include "optex/oed_env.hpp"

namespace optex {

struct Td3Config {
  double gamma = 0.99;
  std::size_t buffer_capacity = 20'000'000;
  std::size_t batch_size = 256;
  std::size_t max_episodes = 10000;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double exploration_sigma = 9.0;  // A
  double ou_theta = 0.15;
  double ou_dt = 1.0;
  int policy_delay = 2;
  double target_smoothing_sigma = 0.2;  // fraction of the half action range
  double target_noise_clip = 0.5;       // fraction of the half action range
  double tau = 0.005;
  std::vector<std::size_t> hidden_sizes = {64, 64};
  std::uint64_t seed = 0;
  std::size_t warmup_episodes = 5;
  std::size_t update_every = 1;  // environment steps per critic update
  // Sensitivity rewards are divided by this before learning; 0 picks the
  // squared sensitivity of a full-scale step from the initial state.
  double reward_scale = 0.0;
  // Hinge penalty weight * mean(max(|z| - margin, 0)^2) on the actor's
  // pre-tanh output. Keeps the actor out of deep saturation, where its
  // gradient vanishes and a bang-bang policy can no longer be revised.
  double actor_saturation_margin = 3.0;
  double actor_saturation_weight = 1.0;

  void validate() const;  // throws ConfigError
};

/// Fixed affine maps between physical and network units.
struct Normalization {
  double v_min = 2.8, v_max = 4.2;
  double i_min = -150.0, i_max = 150.0;
  Eigen::Vector2d observation(const Observation& o) const;
  double action_to_unit(double current) const;  // [i_min, i_max] -> [-1, 1]
  double unit_to_action(double u) const;
  static Normalization from(const EnvConfig& env);
};

struct NetworkWeights {
  nn::Mlp actor, actor_target;
  nn::Mlp critic1, critic2, critic1_target, critic2_target;
  Normalization norm;
  std::string config_fingerprint;

  /// Deterministic actor output in amperes; always within [i_min, i_max].
  double act(const Observation& obs) const;
  Policy policy() const;
};

NetworkWeights init_weights(const Td3Config& cfg, const Normalization& norm, std::mt19937_64& rng);

void save_weights(const std::filesystem::path& path, const NetworkWeights& w);
NetworkWeights load_weights(const std::filesystem::path& path);

class OuNoise {
 public:
  OuNoise(double theta, double sigma, double dt, double mu = 0.0) : theta_(theta), sigma_(sigma), dt_(dt), mu_(mu) {}
  void reset() { x_ = mu_; }
  double sample(std::mt19937_64& rng);
  double value() const { return x_; }

 private:
  double theta_, sigma_, dt_, mu_;
  double x_ = 0.0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Actor output plus (when explore) the next OU sample, clipped to the range.
double select_action(const Observation& obs, const NetworkWeights& w, OuNoise& noise, std::mt19937_64& rng,
                     bool explore);

struct Transition {
  Eigen::Vector2d obs;       // normalized
  double action = 0.0;       // normalized to [-1, 1]
  double reward = 0.0;       // learning units
  Eigen::Vector2d next_obs;  // normalized
  bool done = false;         // termination only; truncation bootstraps
};

/// FIFO ring buffer; storage grows on demand up to capacity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void add(const Transition& t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }
  /// Oldest stored transition.
  const Transition& oldest() const { return data_[size() < capacity_ ? 0 : head_]; }
  std::vector<Transition> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> data_;
};

struct CriticLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
};

/// Learner state: weights plus optimizers and the update counter.
class Td3Agent {
 public:
  Td3Agent(const Td3Config& cfg, const Normalization& norm);
  Td3Agent(const Td3Config& cfg, NetworkWeights weights);

  /// Bootstrapped targets y = r + gamma (1 - done) min(Q1', Q2') at smoothed target actions.
  Eigen::VectorXd targets(const std::vector<Transition>& batch, std::mt19937_64& rng) const;
  CriticLosses critic_update(const std::vector<Transition>& batch, std::mt19937_64& rng);
  /// One actor step on -Q1(s, pi(s)), then soft updates of all targets. Returns the actor loss.
  double actor_update(const std::vector<Transition>& batch);
  /// Critic update, plus an actor update every policy_delay calls.
  CriticLosses update(const std::vector<Transition>& batch, std::mt19937_64& rng);

  NetworkWeights& weights() { return w_; }
  const NetworkWeights& weights() const { return w_; }
  const Td3Config& config() const { return cfg_; }

 private:
  Td3Config cfg_;
  NetworkWeights w_;
  nn::Adam actor_opt_, critic1_opt_, critic2_opt_;
  long critic_updates_ = 0;
};

struct TrainingLogRow {
  std::size_t episode = 0;
  double episode_return = 0.0;  // environment rewards, including any penalty
  double eval_fi_raw = 0.0;
  std::size_t steps = 0;
  std::size_t violations = 0;   // of the greedy evaluation rollout
};

struct TrainingResult {
  NetworkWeights weights;  // best greedy evaluation without violations
  std::vector<TrainingLogRow> log;
  std::size_t best_episode = 0;
  double best_eval_fi_raw = 0.0;
  double reward_scale = 1.0;
};

using EpisodeCallback = std::function<void(const TrainingLogRow&)>;

/// Throws std::runtime_error if a loss or weight becomes non-finite.
TrainingResult train(const EnvConfig& env_config, const CellParameters& params, const Td3Config& cfg,
                     const EpisodeCallback& on_episode = {});

}  // namespace optex
