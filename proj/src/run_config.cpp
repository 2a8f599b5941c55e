#include "optex/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "optex/errors.hpp"
#include "optex/io.hpp"

namespace optex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Each section lists its fields once; the same list drives parsing and dumping.
template <class F>
void fields(EnvConfig& c, F&& f) {
  f("target", c.target);
  f("i_min", c.i_min);
  f("i_max", c.i_max);
  f("v_min", c.v_min);
  f("v_max", c.v_max);
  f("penalty_M", c.penalty_M);
  f("episode_len", c.episode_len);
  f("dt", c.dt);
  f("soc0", c.soc0);
  f("temperature", c.temperature);
}

template <class F>
void fields(Td3Config& c, F&& f) {
  f("gamma", c.gamma);
  f("buffer_capacity", c.buffer_capacity);
  f("batch_size", c.batch_size);
  f("max_episodes", c.max_episodes);
  f("actor_lr", c.actor_lr);
  f("critic_lr", c.critic_lr);
  f("exploration_sigma", c.exploration_sigma);
  f("ou_theta", c.ou_theta);
  f("ou_dt", c.ou_dt);
  f("policy_delay", c.policy_delay);
  f("target_smoothing_sigma", c.target_smoothing_sigma);
  f("target_noise_clip", c.target_noise_clip);
  f("tau", c.tau);
  f("hidden_sizes", c.hidden_sizes);
  f("warmup_episodes", c.warmup_episodes);
  f("update_every", c.update_every);
  f("reward_scale", c.reward_scale);
  f("actor_saturation_margin", c.actor_saturation_margin);
  f("actor_saturation_weight", c.actor_saturation_weight);
}

template <class F>
void fields(NmpcConfig& c, F&& f) {
  f("horizon", c.horizon);
  f("dt", c.dt);
  f("i_min", c.i_min);
  f("i_max", c.i_max);
  f("v_min", c.v_min);
  f("v_max", c.v_max);
  f("voltage_margin", c.voltage_margin);
  f("max_iterations", c.max_iterations);
  f("tolerance", c.tolerance);
  f("warm_start", c.warm_start);
  f("multistart", c.multistart);
  f("finite_difference_gradients", c.finite_difference_gradients);
  f("max_consecutive_failures", c.max_consecutive_failures);
}

template <class F>
void fields(EstimationSettings& c, F&& f) {
  f("n_starts", c.n_starts);
  f("noise_sigma", c.noise_sigma);
  f("ftol", c.optimizer.ftol);
  f("xtol", c.optimizer.xtol);
  f("max_evaluations", c.optimizer.max_evaluations);
}

template <class F>
void fields(CcDischargeSpec& c, F&& f) {
  f("c_rate", c.c_rate);
  f("cutoff_v", c.cutoff_v);
  f("total_length_s", c.total_length_s);
  f("hard_cap_s", c.hard_cap_s);
}

template <class F>
void fields(RcidSpec& c, F&& f) {
  f("c_rate", c.c_rate);
  f("pulse_s", c.pulse_s);
  f("rest_s", c.rest_s);
  f("soc_stops", c.soc_stops);
  f("total_length_s", c.total_length_s);
}

template <class F>
void fields(ProfileSpec& c, F&& f) {
  f("kind", c.kind);
  f("path", c.path);
  f("scale", c.scale);
  f("current", c.current);
  f("steps", c.steps);
  f("soc0", c.soc0);
}

template <class F>
void fields(CompareEntry& c, F&& f) {
  f("label", c.label);
  f("path", c.path);
  f("soc0", c.soc0);
  f("mean_step_time_s", c.mean_step_time_s);
  f("summary", c.summary);
}

class Reader {
 public:
  Reader(const json& j, std::string where, const fs::path& base) : j_(j), where_(std::move(where)), base_(base) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  void operator()(const char* key, T& value) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      read(j_.at(key), value);
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  void allow(const char* key) { known_.insert(key); }

  void finish() const {
    for (const auto& item : j_.items())
      if (!known_.count(item.key())) throw ConfigError(where_ + ": unknown key '" + item.key() + "'");
  }

 private:
  template <class T>
  void read(const json& v, T& out) {
    v.get_to(out);
  }
  void read(const json& v, double& out) {
    // JSON has no NaN; null stands for "not given".
    out = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  }
  void read(const json& v, Param& out) { out = param_from_string(v.get<std::string>()); }
  void read(const json& v, fs::path& out) {
    fs::path p = v.get<std::string>();
    out = p.empty() || p.is_absolute() || base_.empty() ? p : base_ / p;
  }

  const json& j_;
  std::string where_;
  fs::path base_;
  std::set<std::string> known_;
};

struct Writer {
  json& j;
  template <class T>
  void operator()(const char* key, const T& value) {
    j[key] = value;
  }
  void operator()(const char* key, const double& value) {
    if (std::isnan(value))
      j[key] = nullptr;
    else
      j[key] = value;
  }
  void operator()(const char* key, const Param& value) { j[key] = to_string(value); }
  void operator()(const char* key, const fs::path& value) { j[key] = value.string(); }
};

template <class T>
void read_section(const json& root, const char* key, T& out, const fs::path& base) {
  if (!root.contains(key)) return;
  Reader r(root.at(key), key, base);
  fields(out, r);
  r.finish();
}

template <class T>
json dump(T value) {
  json j = json::object();
  fields(value, Writer{j});
  return j;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

}  // namespace

ExcitationProfile ProfileSpec::build(const CellParameters& params, const EnvConfig& env) const {
  const double i_limit = std::max(std::abs(env.i_min), std::abs(env.i_max));
  ExcitationProfile p;
  if (kind == "cc") {
    CcDischargeSpec s = cc;
    s.dt = env.dt;
    s.soc0 = soc0;
    s.temperature = env.temperature;
    p = cc_discharge(s, params, i_limit);
  } else if (kind == "rcid" || kind == "rcid_standard") {
    RcidSpec s = kind == "rcid" ? rcid : RcidSpec::standard();
    s.dt = env.dt;
    s.soc_start = soc0;
    s.temperature = env.temperature;
    p = optex::rcid(s, params, i_limit);
  } else if (kind == "drive_cycle") {
    p = load_drive_cycle(path.empty() ? default_drive_cycle_path() : path.string(), env.dt, scale, i_limit,
                         env.temperature);
  } else if (kind == "constant") {
    p = constant_current(current, steps, env.dt, env.temperature);
    check_current_bounds(p, i_limit);
  } else if (kind == "csv") {
    p = read_profile_csv(path, env.temperature);
    check_current_bounds(p, i_limit);
  } else {
    throw ConfigError("profile.kind: unknown kind '" + kind + "'");
  }
  if (p.label.empty()) p.label = kind;
  return p;
}

void RunConfig::validate() const {
  if (!cell_parameters.empty()) require_file(cell_parameters, "cell parameter file");
  env.validate();
  td3.validate();
  nmpc.validate();
  if (estimation.n_starts < 1) throw ConfigError("estimation.n_starts must be >= 1");
  if (!(estimation.noise_sigma >= 0.0)) throw ConfigError("estimation.noise_sigma must be >= 0");
  if (!(estimation.optimizer.ftol > 0.0 && estimation.optimizer.xtol > 0.0 && estimation.optimizer.max_evaluations > 0))
    throw ConfigError("estimation: ftol, xtol and max_evaluations must be > 0");
  static const std::set<std::string> kinds = {"cc", "rcid", "rcid_standard", "drive_cycle", "constant", "csv"};
  if (!kinds.count(profile.kind)) throw ConfigError("profile.kind: unknown kind '" + profile.kind + "'");
  if (profile.kind == "csv" || (profile.kind == "drive_cycle" && !profile.path.empty()))
    require_file(profile.path, "profile file");
  if (!(profile.soc0 >= 0.0 && profile.soc0 <= 1.0)) throw ConfigError("profile.soc0 must lie in [0, 1]");
  if (map_c_rates.empty() || map_soc.empty()) throw ConfigError("sensitivity_map: grids must be non-empty");
  for (double s : map_soc)
    if (!(s > 0.0 && s < 1.0)) throw ConfigError("sensitivity_map.soc: values must lie in (0, 1)");
  for (double r : map_c_rates)
    if (!(r >= 0.0)) throw ConfigError("sensitivity_map.c_rates: values must be >= 0");
  for (const auto& e : compare) {
    if (e.label.empty()) throw ConfigError("compare: every entry needs a label");
    require_file(e.path, "compare profile '" + e.label + "'");
    if (!e.summary.empty()) require_file(e.summary, "compare summary '" + e.label + "'");
  }
}

CellParameters RunConfig::load_parameters() const {
  return cell_parameters.empty() ? default_cell_parameters() : load_cell_parameters(cell_parameters);
}

std::string RunConfig::fingerprint() const {
  json j = to_json(*this);
  j.erase("output_dir");
  return optex::fingerprint(j.dump());
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  Reader top(j, "config", base_dir);
  top("cell_parameters", c.cell_parameters);
  top("output_dir", c.output_dir);
  top("seed", c.seed);
  top("deterministic", c.deterministic);
  for (const char* k : {"env", "td3", "nmpc", "estimation", "profile", "sensitivity_map", "compare"}) top.allow(k);
  top.finish();

  read_section(j, "env", c.env, base_dir);
  read_section(j, "td3", c.td3, base_dir);
  read_section(j, "nmpc", c.nmpc, base_dir);
  read_section(j, "estimation", c.estimation, base_dir);
  if (j.contains("profile")) {
    const json& p = j.at("profile");
    Reader r(p, "profile", base_dir);
    fields(c.profile, r);
    r.allow("cc");
    r.allow("rcid");
    r.finish();
    read_section(p, "cc", c.profile.cc, base_dir);
    read_section(p, "rcid", c.profile.rcid, base_dir);
  }
  if (j.contains("sensitivity_map")) {
    Reader r(j.at("sensitivity_map"), "sensitivity_map", base_dir);
    r("c_rates", c.map_c_rates);
    r("soc", c.map_soc);
    r.finish();
  }
  if (j.contains("compare")) {
    if (!j.at("compare").is_array()) throw ConfigError("compare: expected an array of entries");
    for (const auto& e : j.at("compare")) {
      CompareEntry entry;
      Reader r(e, "compare[]", base_dir);
      fields(entry, r);
      r.finish();
      c.compare.push_back(std::move(entry));
    }
  }
  c.td3.seed = c.seed;
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& c) {
  json j;
  j["cell_parameters"] = c.cell_parameters.string();
  j["output_dir"] = c.output_dir.string();
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["env"] = dump(c.env);
  j["td3"] = dump(c.td3);
  j["nmpc"] = dump(c.nmpc);
  j["estimation"] = dump(c.estimation);
  j["profile"] = dump(c.profile);
  j["profile"]["cc"] = dump(c.profile.cc);
  j["profile"]["rcid"] = dump(c.profile.rcid);
  j["sensitivity_map"] = {{"c_rates", c.map_c_rates}, {"soc", c.map_soc}};
  j["compare"] = json::array();
  for (const auto& e : c.compare) j["compare"].push_back(dump(e));
  return j;
}

}  // namespace optex
