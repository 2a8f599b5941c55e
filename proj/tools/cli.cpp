#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "optex/errors.hpp"
#include "optex/io.hpp"
#include "optex/run_config.hpp"
#include "optex/sensitivity.hpp"

namespace optex::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string target;
  std::string profile;  // CSV overriding the configured profile
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::size_t> max_episodes;
  std::optional<std::size_t> steps;
  std::vector<std::string> entries;  // compare: label=path
};

struct Context {
  RunConfig cfg;
  CellParameters params;
  std::string fp;
  fs::path out;
  std::ostream& log;

  // Created on first write so that failed commands leave nothing behind.
  fs::path file(const std::string& name) const {
    fs::create_directories(out);
    return out / name;
  }

  void json_out(const std::string& name, json j) const {
    j["config_fingerprint"] = fp;
    write_json(file(name), j);
    log << "wrote " << file(name).string() << "\n";
  }
  void csv_out(const std::string& name, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) const {
    write_csv(file(name), header, rows, fp);
    log << "wrote " << file(name).string() << "\n";
  }
  void profile_out(const std::string& name, const ExcitationProfile& p) const {
    write_profile_csv(file(name), p, fp);
    log << "wrote " << file(name).string() << "\n";
  }
  double temperature() const { return cfg.env.temperature; }
};

Context prepare(const Options& o, std::ostream& log) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  cfg.td3.seed = cfg.seed;
  if (o.deterministic) cfg.deterministic = true;
  if (!o.target.empty()) cfg.env.target = param_from_string(o.target);
  if (o.max_episodes) cfg.td3.max_episodes = *o.max_episodes;
  if (o.steps) cfg.env.episode_len = *o.steps;
  if (!o.profile.empty()) {
    cfg.profile.kind = "csv";
    cfg.profile.path = o.profile;
  }
  cfg.validate();
  return Context{cfg, cfg.load_parameters(), cfg.fingerprint(), cfg.output_dir, log};
}

std::vector<Param> targets_for(const Options& o, const RunConfig& cfg) {
  if (!o.target.empty()) return {cfg.env.target};
  return {Param::kp, Param::kn};
}

json fisher_json(const CellModel& model, const ExcitationProfile& profile, double soc0) {
  json j;
  for (Param p : {Param::kp, Param::kn})
    j[to_string(p)] = to_json(fisher_information(analytic_sensitivity(model, profile, soc0, p),
                                                 model.params().sigma_y));
  return j;
}

// ---------------------------------------------------------------- commands

int cmd_simulate(const Options& o, std::ostream& log) {
  const auto ctx = prepare(o, log);
  const auto profile = ctx.cfg.profile.build(ctx.params, ctx.cfg.env);
  const double soc0 = ctx.cfg.profile.soc0;
  const CellModel model(ctx.params);
  const VoltageWindow window{ctx.cfg.env.v_min, ctx.cfg.env.v_max};
  const auto sim = model.simulate(profile, soc0, window);
  const auto skp = analytic_sensitivity(model, sim, profile, Param::kp);
  const auto skn = analytic_sensitivity(model, sim, profile, Param::kn);
  std::vector<std::vector<double>> rows;
  rows.reserve(profile.currents.size());
  for (std::size_t k = 0; k < profile.currents.size(); ++k)
    rows.push_back({static_cast<double>(k), static_cast<double>(k + 1) * profile.dt, profile.currents[k],
                    sim.voltage[k], model.soc(sim.states[k]), skp.values[k], skn.values[k]});
  ctx.csv_out("simulation.csv", {"step", "t_s", "current_A", "voltage_V", "soc", "dV_dkp", "dV_dkn"}, rows);
  json s;
  s["label"] = profile.label;
  s["steps"] = profile.currents.size();
  s["length_s"] = profile.duration();
  s["soc0"] = soc0;
  s["limit_crossings"] = sim.limit_crossings.size();
  s["fisher"] = {{"kp", to_json(fisher_information(skp, ctx.params.sigma_y))},
                 {"kn", to_json(fisher_information(skn, ctx.params.sigma_y))}};
  ctx.json_out("simulation_summary.json", s);
  return kSuccess;
}

int cmd_sensitivity_map(const Options& o, std::ostream& log) {
  const auto ctx = prepare(o, log);
  const double i_limit = std::max(std::abs(ctx.cfg.env.i_min), std::abs(ctx.cfg.env.i_max));
  const auto mkp = sensitivity_map(ctx.cfg.map_c_rates, ctx.cfg.map_soc, ctx.params, Param::kp, ctx.temperature(),
                                   ctx.cfg.env.dt, i_limit);
  const auto mkn = sensitivity_map(ctx.cfg.map_c_rates, ctx.cfg.map_soc, ctx.params, Param::kn, ctx.temperature(),
                                   ctx.cfg.env.dt, i_limit);
  std::vector<std::vector<double>> rows;
  json argmax = json::object();
  for (std::size_t r = 0; r < mkp.c_rates.size(); ++r) {
    for (std::size_t s = 0; s < mkp.soc_grid.size(); ++s)
      rows.push_back({mkp.c_rates[r], mkp.soc_grid[s], mkp.at(r, s), mkn.at(r, s)});
    argmax["kp"].push_back({{"c_rate", mkp.c_rates[r]}, {"soc", mkp.soc_grid[mkp.argmax_soc(r)]}});
    argmax["kn"].push_back({{"c_rate", mkn.c_rates[r]}, {"soc", mkn.soc_grid[mkn.argmax_soc(r)]}});
  }
  ctx.csv_out("sensitivity_map.csv", {"c_rate", "soc", "squared_dV_dkp", "squared_dV_dkn"}, rows);
  ctx.json_out("sensitivity_map_summary.json", {{"argmax_soc", argmax}});
  return kSuccess;
}

int cmd_train(const Options& o, std::ostream& log) {
  const auto ctx = prepare(o, log);
  const std::string t = to_string(ctx.cfg.env.target);
  const auto t0 = Clock::now();
  const auto result = train(ctx.cfg.env, ctx.params, ctx.cfg.td3, [&](const TrainingLogRow& row) {
    if (row.episode % 50 == 0)
      log << "episode " << row.episode << " eval_fi_raw " << row.eval_fi_raw << " violations " << row.violations
          << std::endl;  // long runs are usually redirected to a file
  });
  const double train_s = std::chrono::duration<double>(Clock::now() - t0).count();

  NetworkWeights weights = result.weights;
  weights.config_fingerprint = ctx.fp;
  save_weights(ctx.file("policy_" + t + ".json"), weights);
  log << "wrote " << ctx.file("policy_" + t + ".json").string() << "\n";

  std::vector<std::vector<double>> rows;
  for (const auto& r : result.log)
    rows.push_back({static_cast<double>(r.episode), r.episode_return, r.eval_fi_raw, static_cast<double>(r.steps),
                    static_cast<double>(r.violations)});
  ctx.csv_out("training_log_" + t + ".csv", {"episode", "episode_return", "eval_fi_raw", "steps", "violations"},
              rows);

  // Greedy evaluation of the returned weights, timing each policy call.
  double policy_s = 0.0;
  std::size_t calls = 0;
  const auto policy = [&](const Observation& obs) {
    const auto s = Clock::now();
    const double a = weights.act(obs);
    policy_s += std::chrono::duration<double>(Clock::now() - s).count();
    ++calls;
    return a;
  };
  auto eval = rollout(policy, ctx.cfg.env, ctx.params);
  eval.profile.label = "drl_" + t;
  ctx.profile_out("drl_profile_" + t + ".csv", eval.profile);

  json s;
  s["target"] = t;
  s["episodes"] = result.log.size();
  s["best_episode"] = result.best_episode;
  s["best_eval_fi_raw"] = result.best_eval_fi_raw;
  s["reward_scale"] = result.reward_scale;
  s["eval"] = {{"steps", eval.profile.currents.size()}, {"violations", eval.violations},
               {"fisher", to_json(eval.fisher)}};
  if (!ctx.cfg.deterministic) {
    s["training_time_s"] = train_s;
    s["mean_step_time_s"] = calls ? policy_s / static_cast<double>(calls) : 0.0;
  }
  ctx.json_out("train_summary_" + t + ".json", s);
  return kSuccess;
}

int cmd_nmpc(const Options& o, std::ostream& log) {
  const auto ctx = prepare(o, log);
  const std::string t = to_string(ctx.cfg.env.target);
  auto run = run_nmpc(ctx.params, ctx.cfg.env, ctx.cfg.nmpc, ctx.cfg.env.target);
  run.profile.label = "nmpc_" + t;
  ctx.profile_out("nmpc_profile_" + t + ".csv", run.profile);

  std::vector<std::string> header = {"step", "current_A", "voltage_V", "iterations", "objective", "fallback"};
  if (!ctx.cfg.deterministic) header.push_back("wall_time_s");
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < run.stats.size(); ++k) {
    const auto& st = run.stats[k];
    std::vector<double> row = {static_cast<double>(k), run.profile.currents[k], run.voltages[k],
                               static_cast<double>(st.iterations), st.objective, st.fallback ? 1.0 : 0.0};
    if (!ctx.cfg.deterministic) row.push_back(st.wall_time_s);
    rows.push_back(std::move(row));
  }
  ctx.csv_out("nmpc_steps_" + t + ".csv", header, rows);

  json s;
  s["target"] = t;
  s["steps"] = run.profile.currents.size();
  s["violations"] = run.violations;
  s["aborted"] = run.aborted;
  s["diagnostic"] = run.diagnostic;
  s["fisher"] = to_json(run.fisher);
  if (!ctx.cfg.deterministic) s["mean_step_time_s"] = run.mean_step_time();
  ctx.json_out("nmpc_summary_" + t + ".json", s);
  if (run.aborted) {
    log << "nmpc aborted: " << run.diagnostic << "\n";
    return kRuntimeFailure;
  }
  return kSuccess;
}

int cmd_profile(const Options& o, std::ostream& log) {
  const auto ctx = prepare(o, log);
  const auto profile = ctx.cfg.profile.build(ctx.params, ctx.cfg.env);
  ctx.profile_out("profile.csv", profile);
  json s;
  s["label"] = profile.label;
  s["steps"] = profile.currents.size();
  s["length_s"] = profile.duration();
  s["soc0"] = ctx.cfg.profile.soc0;
  s["fisher"] = fisher_json(CellModel(ctx.params), profile, ctx.cfg.profile.soc0);
  ctx.json_out("profile_summary.json", s);
  return kSuccess;
}

int cmd_estimate(const Options& o, std::ostream& log) {
  const auto ctx = prepare(o, log);
  const auto profile = ctx.cfg.profile.build(ctx.params, ctx.cfg.env);
  json s;
  s["profile"] = profile.label;
  s["steps"] = profile.currents.size();
  bool all_identifiable = true;
  for (Param p : targets_for(o, ctx.cfg)) {
    auto task = EstimationTask::defaults(p);
    task.profile = profile;
    task.soc0 = ctx.cfg.profile.soc0;
    task.n_starts = ctx.cfg.estimation.n_starts;
    task.noise_sigma = ctx.cfg.estimation.noise_sigma;
    task.seed = ctx.cfg.seed;
    task.optimizer = ctx.cfg.estimation.optimizer;
    const auto res = run_task(task, ctx.params);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < res.starts.size(); ++i) {
      const auto& r = res.starts[i];
      rows.push_back({static_cast<double>(i), r.initial, r.estimate, r.abs_pct_error, r.start_cost, r.cost,
                      static_cast<double>(r.evaluations), r.converged ? 1.0 : 0.0, r.identifiable ? 1.0 : 0.0});
    }
    const std::string t = to_string(p);
    ctx.csv_out("estimation_" + t + ".csv",
                {"start", "initial", "estimate", "abs_pct_error", "start_cost", "cost", "evaluations", "converged",
                 "identifiable"},
                rows);
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    s[t] = {{"nominal", task.nominal},       {"identifiable", res.identifiable}, {"n_used", res.n_used},
            {"median_pct", num(res.median)}, {"q1_pct", num(res.q1)},          {"q3_pct", num(res.q3)},
            {"min_pct", num(res.min)},       {"max_pct", num(res.max)},        {"warnings", res.warnings}};
    for (const auto& w : res.warnings) log << "warning (" << t << "): " << w << "\n";
    all_identifiable = all_identifiable && res.identifiable;
  }
  ctx.json_out("estimation_summary.json", s);
  return all_identifiable ? kSuccess : kRuntimeFailure;
}

int cmd_compare(const Options& o, std::ostream& log) {
  auto ctx = prepare(o, log);
  std::vector<CompareEntry> entries = ctx.cfg.compare;
  for (const auto& e : o.entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--entry expects label=path, got '" + e + "'");
    CompareEntry c;
    c.label = e.substr(0, eq);
    c.path = e.substr(eq + 1);
    if (!fs::is_regular_file(c.path)) throw ConfigError("compare profile not found: " + c.path.string());
    entries.push_back(c);
  }
  if (entries.empty()) throw ConfigError("compare: no entries (use the config 'compare' list or --entry)");

  std::vector<ComparisonInput> inputs;
  for (const auto& e : entries) {
    ComparisonInput in{e.label, read_profile_csv(e.path, ctx.temperature()), e.soc0, e.mean_step_time_s};
    if (!e.summary.empty() && std::isnan(in.mean_step_time_s)) {
      std::ifstream f(e.summary);
      const auto j = json::parse(f, nullptr, false);
      if (j.is_discarded()) throw ConfigError("malformed summary JSON: " + e.summary.string());
      if (j.contains("mean_step_time_s")) in.mean_step_time_s = j.at("mean_step_time_s").get<double>();
    }
    inputs.push_back(std::move(in));
  }
  const auto table = run_comparison(inputs, ctx.params, ctx.cfg.estimation.optimizer);

  double fastest = std::numeric_limits<double>::infinity();
  for (const auto& r : table.rows)
    if (r.mean_step_time_s > 0.0) fastest = std::min(fastest, r.mean_step_time_s);
  std::vector<std::vector<double>> rows;
  json j;
  for (const auto& r : table.rows) {
    const double ratio = std::isfinite(fastest) && r.mean_step_time_s > 0.0 ? r.mean_step_time_s / fastest
                                                                          : std::numeric_limits<double>::quiet_NaN();
    rows.push_back({r.length_s, r.temperature, r.fi_raw_kp, r.fi_raw_kn, r.median_error_kp, r.median_error_kn,
                    r.mean_step_time_s, ratio});
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    j["rows"].push_back({{"label", r.label},
                         {"length_s", r.length_s},
                         {"temperature_K", r.temperature},
                         {"fi_raw_kp", r.fi_raw_kp},
                         {"fi_raw_kn", r.fi_raw_kn},
                         {"median_error_kp_pct", num(r.median_error_kp)},
                         {"median_error_kn_pct", num(r.median_error_kn)},
                         {"mean_step_time_s", num(r.mean_step_time_s)},
                         {"step_time_ratio_to_fastest", num(ratio)}});
  }
  // Labels are strings, so the CSV carries a row index; the JSON maps index to label.
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].insert(rows[i].begin(), static_cast<double>(i));
  ctx.csv_out("comparison.csv",
              {"row", "length_s", "temperature_K", "fi_raw_kp", "fi_raw_kn", "median_error_kp_pct",
               "median_error_kn_pct", "mean_step_time_s", "step_time_ratio_to_fastest"},
              rows);
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  j["spearman_fi_vs_error_kp"] = num(table.spearman_kp);
  j["spearman_fi_vs_error_kn"] = num(table.spearman_kn);
  ctx.json_out("comparison.json", j);
  const std::string md = render_table(table);
  std::ofstream(ctx.file("comparison.md")) << "<!-- config_fingerprint=" << ctx.fp << " -->\n" << md;
  log << md;
  return kSuccess;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("-o,--out", o.out, "output directory (overrides the config)");
  sub->add_option("--seed", o.seed, "random seed (overrides the config)");
  sub->add_flag("--deterministic", o.deterministic, "omit wall-clock timings so reruns are byte-identical");
  sub->add_option("--target", o.target, "target parameter")->check(CLI::IsMember({"kp", "kn", "k_p", "k_n"}));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal excitation design for battery rate-constant identification"};
  app.require_subcommand(1);
  Options o;

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const Options&, std::ostream&);
  };
  const std::vector<Command> commands = {
      {"simulate", "simulate a profile and write voltage and sensitivity traces", cmd_simulate},
      {"sensitivity-map", "squared sensitivity over a C-rate x SoC grid", cmd_sensitivity_map},
      {"train", "train the reinforcement-learning designer", cmd_train},
      {"nmpc", "closed-loop receding-horizon design", cmd_nmpc},
      {"profile", "generate a conventional profile", cmd_profile},
      {"estimate", "least-squares recovery of the rate constants", cmd_estimate},
      {"compare", "comparison report over several profiles", cmd_compare},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o);
    if (std::string(c.name) == "simulate" || std::string(c.name) == "estimate")
      sub->add_option("--profile", o.profile, "profile CSV (t_s,current_A) instead of the configured one")
          ->check(CLI::ExistingFile);
    if (std::string(c.name) == "train") sub->add_option("--max-episodes", o.max_episodes, "training episodes");
    if (std::string(c.name) == "nmpc" || std::string(c.name) == "train")
      sub->add_option("--steps", o.steps, "episode length in steps");
    if (std::string(c.name) == "compare")
      sub->add_option("--entry", o.entries, "label=profile.csv, repeatable");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfigFailure;
  }
  try {
    for (const auto& c : commands)
      if (app.got_subcommand(c.name)) return c.fn(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kConfigFailure;
}

}  // namespace optex::cli
