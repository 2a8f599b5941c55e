#include "optex/td3.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "optex/errors.hpp"
#include "optex/io.hpp"

namespace optex {

void Td3Config::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("td3: gamma must lie in (0, 1)");
  if (batch_size < 1 || batch_size > buffer_capacity) throw ConfigError("td3: need 1 <= batch_size <= buffer_capacity");
  if (!(actor_lr > 0.0 && critic_lr > 0.0)) throw ConfigError("td3: learning rates must be > 0");
  if (!(exploration_sigma >= 0.0 && ou_theta >= 0.0 && ou_dt > 0.0)) throw ConfigError("td3: invalid OU parameters");
  if (policy_delay < 1) throw ConfigError("td3: policy_delay must be >= 1");
  if (!(target_smoothing_sigma >= 0.0 && target_noise_clip >= 0.0)) throw ConfigError("td3: invalid smoothing noise");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("td3: tau must lie in [0, 1]");
  if (hidden_sizes.empty() || std::find(hidden_sizes.begin(), hidden_sizes.end(), 0u) != hidden_sizes.end())
    throw ConfigError("td3: hidden layer sizes must be positive");
  if (update_every < 1) throw ConfigError("td3: update_every must be >= 1");
  if (!(reward_scale >= 0.0)) throw ConfigError("td3: reward_scale must be >= 0");
  if (!(actor_saturation_margin >= 0.0 && actor_saturation_weight >= 0.0))
    throw ConfigError("td3: actor saturation margin and weight must be >= 0");
}

Eigen::Vector2d Normalization::observation(const Observation& o) const {
  return {2.0 * (o.v - v_min) / (v_max - v_min) - 1.0, 2.0 * o.c_bar_se_p - 1.0};
}

double Normalization::action_to_unit(double current) const {
  return 2.0 * (current - i_min) / (i_max - i_min) - 1.0;
}

double Normalization::unit_to_action(double u) const { return i_min + 0.5 * (u + 1.0) * (i_max - i_min); }

Normalization Normalization::from(const EnvConfig& env) { return {env.v_min, env.v_max, env.i_min, env.i_max}; }

double NetworkWeights::act(const Observation& obs) const {
  const double u = actor.forward(norm.observation(obs))(0, 0);
  return std::clamp(norm.unit_to_action(u), norm.i_min, norm.i_max);
}

Policy NetworkWeights::policy() const {
  return [w = *this](const Observation& o) { return w.act(o); };
}

NetworkWeights init_weights(const Td3Config& cfg, const Normalization& norm, std::mt19937_64& rng) {
  std::vector<std::size_t> actor_sizes = {2};
  std::vector<std::size_t> critic_sizes = {3};
  for (auto h : cfg.hidden_sizes) {
    actor_sizes.push_back(h);
    critic_sizes.push_back(h);
  }
  actor_sizes.push_back(1);
  critic_sizes.push_back(1);
  NetworkWeights w;
  w.norm = norm;
  w.actor = nn::Mlp(actor_sizes, nn::Activation::tanh, rng);
  w.critic1 = nn::Mlp(critic_sizes, nn::Activation::identity, rng);
  w.critic2 = nn::Mlp(critic_sizes, nn::Activation::identity, rng);
  w.actor_target = w.actor;
  w.critic1_target = w.critic1;
  w.critic2_target = w.critic2;
  return w;
}

void save_weights(const std::filesystem::path& path, const NetworkWeights& w) {
  nlohmann::json j;
  j["format"] = "optex-td3-weights";
  j["version"] = 1;
  j["config_fingerprint"] = w.config_fingerprint;
  j["normalization"] = {{"v_min", w.norm.v_min}, {"v_max", w.norm.v_max}, {"i_min", w.norm.i_min},
                        {"i_max", w.norm.i_max}, {"observation", {"voltage", "c_se_p_over_c_max"}}};
  j["networks"] = {{"actor", w.actor.to_json()},
                   {"actor_target", w.actor_target.to_json()},
                   {"critic1", w.critic1.to_json()},
                   {"critic2", w.critic2.to_json()},
                   {"critic1_target", w.critic1_target.to_json()},
                   {"critic2_target", w.critic2_target.to_json()}};
  write_json(path, j);
}

NetworkWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open weight file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format") != "optex-td3-weights" || j.at("version") != 1)
      throw ConfigError(path.string() + ": unsupported weight file format");
    NetworkWeights w;
    w.config_fingerprint = j.value("config_fingerprint", "");
    const auto& n = j.at("normalization");
    w.norm = {n.at("v_min"), n.at("v_max"), n.at("i_min"), n.at("i_max")};
    const auto& nets = j.at("networks");
    w.actor = nn::Mlp::from_json(nets.at("actor"));
    w.actor_target = nn::Mlp::from_json(nets.at("actor_target"));
    w.critic1 = nn::Mlp::from_json(nets.at("critic1"));
    w.critic2 = nn::Mlp::from_json(nets.at("critic2"));
    w.critic1_target = nn::Mlp::from_json(nets.at("critic1_target"));
    w.critic2_target = nn::Mlp::from_json(nets.at("critic2_target"));
    if (w.actor.input_size() != 2 || w.actor.output_size() != 1 || w.critic1.input_size() != 3)
      throw ConfigError(path.string() + ": network shapes do not match the environment");
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": malformed weight file: " + e.what());
  } catch (const std::runtime_error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError(path.string() + ": " + e.what());
  }
}

double OuNoise::sample(std::mt19937_64& rng) {
  x_ += theta_ * (mu_ - x_) * dt_ + sigma_ * std::sqrt(dt_) * normal_(rng);
  return x_;
}

double select_action(const Observation& obs, const NetworkWeights& w, OuNoise& noise, std::mt19937_64& rng,
                     bool explore) {
  double a = w.norm.unit_to_action(w.actor.forward(w.norm.observation(obs))(0, 0));
  if (explore) a += noise.sample(rng);
  return std::clamp(a, w.norm.i_min, w.norm.i_max);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be > 0");
}

void ReplayBuffer::add(const Transition& t) {
  if (data_.size() < capacity_) {
    data_.push_back(t);
    return;
  }
  data_[head_] = t;
  head_ = (head_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (data_.empty()) throw UsageError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(data_[pick(rng)]);
  return out;
}

namespace {

Eigen::MatrixXd critic_input(const Eigen::MatrixXd& obs, const Eigen::RowVectorXd& action) {
  Eigen::MatrixXd x(3, obs.cols());
  x.topRows(2) = obs;
  x.row(2) = action;
  return x;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::runtime_error(std::string("td3: non-finite ") + what);
}

}  // namespace

Td3Agent::Td3Agent(const Td3Config& cfg, const Normalization& norm) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg.seed);
  w_ = init_weights(cfg_, norm, rng);
  actor_opt_ = nn::Adam(w_.actor, cfg_.actor_lr);
  critic1_opt_ = nn::Adam(w_.critic1, cfg_.critic_lr);
  critic2_opt_ = nn::Adam(w_.critic2, cfg_.critic_lr);
}

Td3Agent::Td3Agent(const Td3Config& cfg, NetworkWeights weights) : cfg_(cfg), w_(std::move(weights)) {
  cfg_.validate();
  actor_opt_ = nn::Adam(w_.actor, cfg_.actor_lr);
  critic1_opt_ = nn::Adam(w_.critic1, cfg_.critic_lr);
  critic2_opt_ = nn::Adam(w_.critic2, cfg_.critic_lr);
}

Eigen::VectorXd Td3Agent::targets(const std::vector<Transition>& batch, std::mt19937_64& rng) const {
  const auto B = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd next(2, B);
  for (Eigen::Index i = 0; i < B; ++i) next.col(i) = batch[static_cast<std::size_t>(i)].next_obs;
  Eigen::RowVectorXd a = w_.actor_target.forward(next).row(0);
  std::normal_distribution<double> smooth(0.0, 1.0);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double eps = cfg_.target_smoothing_sigma > 0.0
                           ? std::clamp(cfg_.target_smoothing_sigma * smooth(rng), -cfg_.target_noise_clip,
                                        cfg_.target_noise_clip)
                           : 0.0;
    a(i) = std::clamp(a(i) + eps, -1.0, 1.0);
  }
  const Eigen::MatrixXd x = critic_input(next, a);
  const Eigen::RowVectorXd q1 = w_.critic1_target.forward(x).row(0);
  const Eigen::RowVectorXd q2 = w_.critic2_target.forward(x).row(0);
  Eigen::VectorXd y(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& t = batch[static_cast<std::size_t>(i)];
    y(i) = t.reward + (t.done ? 0.0 : cfg_.gamma * std::min(q1(i), q2(i)));
  }
  return y;
}

CriticLosses Td3Agent::critic_update(const std::vector<Transition>& batch, std::mt19937_64& rng) {
  if (batch.empty()) throw UsageError("critic_update: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const Eigen::VectorXd y = targets(batch, rng);
  Eigen::MatrixXd obs(2, B);
  Eigen::RowVectorXd act(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    obs.col(i) = batch[static_cast<std::size_t>(i)].obs;
    act(i) = batch[static_cast<std::size_t>(i)].action;
  }
  const Eigen::MatrixXd x = critic_input(obs, act);
  CriticLosses losses;
  auto fit = [&](nn::Mlp& critic, nn::Adam& opt, double& loss) {
    nn::Mlp::Cache cache;
    const Eigen::RowVectorXd q = critic.forward(x, &cache).row(0);
    const Eigen::RowVectorXd err = q - y.transpose();
    loss = err.squaredNorm() / static_cast<double>(B);
    require_finite(loss, "critic loss");
    nn::Mlp::Gradients g;
    critic.backward(cache, (2.0 / static_cast<double>(B)) * err, &g);
    opt.step(critic, g);
  };
  fit(w_.critic1, critic1_opt_, losses.critic1);
  fit(w_.critic2, critic2_opt_, losses.critic2);
  return losses;
}

double Td3Agent::actor_update(const std::vector<Transition>& batch) {
  if (batch.empty()) throw UsageError("actor_update: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd obs(2, B);
  for (Eigen::Index i = 0; i < B; ++i) obs.col(i) = batch[static_cast<std::size_t>(i)].obs;
  nn::Mlp::Cache actor_cache, critic_cache;
  const Eigen::RowVectorXd a = w_.actor.forward(obs, &actor_cache).row(0);
  const Eigen::RowVectorXd q = w_.critic1.forward(critic_input(obs, a), &critic_cache).row(0);
  const Eigen::ArrayXXd z = w_.actor.pre_activation(actor_cache).array();
  const Eigen::ArrayXXd excess = (z.abs() - cfg_.actor_saturation_margin).max(0.0);
  const double inv_b = 1.0 / static_cast<double>(B);
  const double loss = -q.mean() + cfg_.actor_saturation_weight * excess.square().sum() * inv_b;
  require_finite(loss, "actor loss");
  const Eigen::MatrixXd dx = w_.critic1.backward(critic_cache, Eigen::RowVectorXd::Constant(B, -inv_b), nullptr);
  const Eigen::MatrixXd dz = (2.0 * cfg_.actor_saturation_weight * inv_b * excess * z.sign()).matrix();
  nn::Mlp::Gradients g;
  w_.actor.backward(actor_cache, dx.row(2), &g, &dz);
  actor_opt_.step(w_.actor, g);
  w_.actor_target.soft_update_from(w_.actor, cfg_.tau);
  w_.critic1_target.soft_update_from(w_.critic1, cfg_.tau);
  w_.critic2_target.soft_update_from(w_.critic2, cfg_.tau);
  return loss;
}

CriticLosses Td3Agent::update(const std::vector<Transition>& batch, std::mt19937_64& rng) {
  const auto losses = critic_update(batch, rng);
  if (++critic_updates_ % cfg_.policy_delay == 0) actor_update(batch);
  return losses;
}

TrainingResult train(const EnvConfig& env_config, const CellParameters& params, const Td3Config& cfg,
                     const EpisodeCallback& on_episode) {
  cfg.validate();
  env_config.validate();
  const Normalization norm = Normalization::from(env_config);
  Td3Agent agent(cfg, norm);

  TrainingResult result;
  result.reward_scale = cfg.reward_scale;
  if (result.reward_scale <= 0.0) {
    // Squared sensitivity of one full-scale discharge step from the start state.
    result.reward_scale = 1.0;
    try {
      const CellModel model(params);
      const double i = std::max(std::abs(env_config.i_min), std::abs(env_config.i_max));
      const auto s = model.step(model.init_state(env_config.soc0), i, env_config.dt, env_config.temperature);
      const double sens = voltage_sensitivity(model, s, i, env_config.temperature, env_config.target);
      if (sens * sens > 0.0) result.reward_scale = sens * sens;
    } catch (const SingularityError&) {
    }
  }
  result.weights = agent.weights();

  std::mt19937_64 explore_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 sample_rng(cfg.seed ^ 0xbf58476d1ce4e5b9ULL);
  std::uniform_real_distribution<double> uniform_action(env_config.i_min, env_config.i_max);
  OuNoise noise(cfg.ou_theta, cfg.exploration_sigma, cfg.ou_dt);
  ReplayBuffer buffer(cfg.buffer_capacity);
  OedEnv env(params, env_config);
  std::size_t total_steps = 0;
  bool have_best = false;

  for (std::size_t ep = 0; ep < cfg.max_episodes; ++ep) {
    Observation obs = env.reset(cfg.seed + ep);
    noise.reset();
    double episode_return = 0.0;
    const bool warmup = ep < cfg.warmup_episodes;
    while (!env.done()) {
      const double a = warmup ? uniform_action(explore_rng) : select_action(obs, agent.weights(), noise, explore_rng, true);
      const auto out = env.step(a);
      const double r = out.info.violation != Violation::none ? env_config.penalty_M : out.reward / result.reward_scale;
      buffer.add({norm.observation(obs), norm.action_to_unit(out.info.applied_current), r,
                  norm.observation(out.observation), out.terminated});
      episode_return += out.reward;
      obs = out.observation;
      ++total_steps;
      if (!warmup && buffer.size() >= cfg.batch_size && total_steps % cfg.update_every == 0)
        agent.update(buffer.sample(cfg.batch_size, sample_rng), sample_rng);
    }
    if (!agent.weights().actor.finite() || !agent.weights().critic1.finite() || !agent.weights().critic2.finite())
      throw std::runtime_error("td3: non-finite weights after episode " + std::to_string(ep));

    const auto eval = rollout(agent.weights().policy(), env_config, params);
    TrainingLogRow row{ep, episode_return, eval.fisher.fi_raw, env.steps_taken(), eval.violations};
    result.log.push_back(row);
    if (eval.violations == 0 && (!have_best || eval.fisher.fi_raw > result.best_eval_fi_raw)) {
      have_best = true;
      result.best_eval_fi_raw = eval.fisher.fi_raw;
      result.best_episode = ep;
      result.weights = agent.weights();
    }
    if (on_episode) on_episode(row);
  }
  if (!have_best && cfg.max_episodes > 0) result.weights = agent.weights();
  return result;
}

}  // namespace optex
