#pragma once

#include <cstdint>
#include <limits>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "optex/estimation.hpp"
#include "optex/nmpc.hpp"
#include "optex/oed_env.hpp"
#include "optex/profiles.hpp"
#include "optex/td3.hpp"

namespace optex {

/// Which conventional or external profile a run should use.
struct ProfileSpec {
  std::string kind = "cc";  // cc | rcid | rcid_standard | drive_cycle | constant | csv
  CcDischargeSpec cc;
  RcidSpec rcid;
  std::filesystem::path path;  // drive_cycle and csv
  double scale = 1.0;          // drive_cycle
  double current = 0.0;        // constant, A
  std::size_t steps = 0;       // constant
  double soc0 = 1.0;           // initial SoC the profile is applied from

  /// Temperature, dt and current limit come from the environment section.
  ExcitationProfile build(const CellParameters& params, const EnvConfig& env) const;
};

struct EstimationSettings {
  std::size_t n_starts = 10;
  double noise_sigma = 0.0;  // V
  OptimizerSettings optimizer;
};

struct CompareEntry {
  std::string label;
  std::filesystem::path path;  // profile CSV
  double soc0 = 1.0;
  // Designer cost per step. NaN unless given directly or read from a summary
  // JSON carrying "mean_step_time_s".
  double mean_step_time_s = std::numeric_limits<double>::quiet_NaN();
  std::filesystem::path summary;
};

struct RunConfig {
  std::filesystem::path cell_parameters;  // empty selects the bundled parameter file
  std::filesystem::path output_dir = "optex_out";
  std::uint64_t seed = 0;
  bool deterministic = false;

  EnvConfig env;
  Td3Config td3;
  NmpcConfig nmpc;
  EstimationSettings estimation;
  ProfileSpec profile;
  std::vector<double> map_c_rates = {1, 2, 3, 4, 5};
  std::vector<double> map_soc = {0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95};  // bin centres
  std::vector<CompareEntry> compare;

  /// Checks every section plus existence of referenced files. Throws ConfigError.
  void validate() const;
  CellParameters load_parameters() const;
  /// Stable 16-hex-digit hash of the effective configuration (output_dir excluded).
  std::string fingerprint() const;
};

/// Relative paths inside j resolve against base_dir. Unknown keys are errors.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

}  // namespace optex
