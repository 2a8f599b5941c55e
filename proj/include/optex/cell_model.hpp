#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "optex/ocp.hpp"

namespace optex {

/// Target rate constant.
enum class Param { kp, kn };

const char* to_string(Param p);
Param param_from_string(const std::string& s);  // "kp"/"k_p"/"kn"/"k_n"

struct ElectrodeParameters {
  double k = 0.0;       // rate constant, m^2.5 mol^-0.5 s^-1
  double c_max = 0.0;   // mol m^-3
  double c_e = 0.0;     // electrolyte concentration at the electrode, mol m^-3
  double J = 0.0;       // signed intercalation coefficient, m^-2 (J_p < 0, J_n > 0)
  double E_io = 0.0;    // activation energy, J mol^-1
  OcpTable ocp;         // stoichiometry -> V
  double stoich_0 = 0.0;    // stoichiometry at 0% SoC
  double stoich_100 = 0.0;  // stoichiometry at 100% SoC
  double diffusion_time_s = 0.0;  // R^2/D; all diffusion coefficients derive from it

  double stoich_at(double soc) const { return stoich_0 + soc * (stoich_100 - stoich_0); }
};

struct CellParameters {
  ElectrodeParameters positive;
  ElectrodeParameters negative;
  double R_c = 0.0;                // ohm
  double capacity_Ah = 0.0;        // Ah
  double T_ref = 298.15;           // K
  double T0 = 298.15;              // K
  double R_ion = 0.0;              // ohm
  double diff_gain = 0.0;          // phi_diff steady-state gain, V/A
  double diff_tau = 1.0;           // phi_diff time constant, s
  double sigma_y = 0.01;           // V
  double gas_constant = 8.314;     // J mol^-1 K^-1
  double faraday = 96485.0;        // C mol^-1

  /// Throws ConfigError listing the first violated invariant.
  void validate() const;

  double rate_constant(Param p) const { return p == Param::kp ? positive.k : negative.k; }
  void set_rate_constant(Param p, double k) { (p == Param::kp ? positive.k : negative.k) = k; }
};

/// Loads the commented-JSON parameter file; OCP CSV paths resolve relative to it.
CellParameters load_cell_parameters(const std::filesystem::path& path);

/// Parameter file shipped in data/ (compiled-in path of the source tree).
/// Bundled data directory; the OPTEX_DATA_DIR environment variable overrides it.
std::filesystem::path data_dir();
std::filesystem::path default_parameter_path();
CellParameters default_cell_parameters();

struct ElectrodeState {
  double c_se = 0.0;  // surface concentration
  double c_b1 = 0.0;  // inner shell
  double c_b2 = 0.0;  // middle shell
  double c_d = 0.0;   // surface minus outer-shell average
};

struct CellState {
  double v = 0.0;
  ElectrodeState p;
  ElectrodeState n;
  double phi_diff = 0.0;      // electrolyte diffusion filter state, V
  double held_current = 0.0;  // current applied over the step that produced this state

  /// Linear state vector: [p(c_se,c_b1,c_b2,c_d), n(...), phi_diff].
  Eigen::Matrix<double, 9, 1> linear() const;
  void set_linear(const Eigen::Matrix<double, 9, 1>& x);
};

struct ExcitationProfile {
  double dt = 1.0;
  std::vector<double> currents;  // A, discharge positive
  double temperature = 298.15;   // K
  std::string label;

  double duration() const { return dt * static_cast<double>(currents.size()); }
  void validate() const;  // throws ConfigError
};

/// Exact zero-order-hold discretization x+ = Ad x + Bd I of the linear dynamics.
struct Discretization {
  double dt = 0.0;
  Eigen::Matrix<double, 9, 9> Ad;
  Eigen::Matrix<double, 9, 1> Bd;
};

/// Continuous-time (A, B) for one electrode, states (c_se, c_b1, c_b2, c_d).
/// rate_per_amp is d(mean concentration)/dt per ampere.
void electrode_dynamics(const ElectrodeParameters& e, double rate_per_amp,
                        Eigen::Matrix<double, 4, 4>& A, Eigen::Matrix<double, 4, 1>& B);

double exchange_current_density(double c_se, const ElectrodeParameters& electrode, double T,
                                const CellParameters& params);
double kinetic_overpotential(double current, double i0, const ElectrodeParameters& electrode,
                             const CellParameters& params);

struct VoltageWindow {
  double v_min = 2.8;
  double v_max = 4.2;
};

struct SimulationResult {
  std::vector<CellState> states;  // post-step states, one per profile sample
  std::vector<double> voltage;
  std::vector<std::size_t> limit_crossings;  // sample indices outside the window
};

/// Reduced electrochemical ECM. Holds parameters and a ZOH cache per dt.
class CellModel {
 public:
  explicit CellModel(CellParameters params);
  CellModel(const CellModel& other);
  CellModel& operator=(const CellModel& other);

  const CellParameters& params() const { return params_; }

  CellState init_state(double soc0) const;
  CellState step(const CellState& state, double current, double dt, double T) const;
  double terminal_voltage(const CellState& state, double current, double T) const;
  double soc(const CellState& state) const;
  /// Surface stoichiometries (c_se / c_max).
  double surface_stoich_p(const CellState& s) const { return s.p.c_se / params_.positive.c_max; }
  double surface_stoich_n(const CellState& s) const { return s.n.c_se / params_.negative.c_max; }

  /// Kinetic overpotentials at the state's surface concentrations.
  double eta_p(const CellState& state, double current, double T) const;
  double eta_n(const CellState& state, double current, double T) const;

  SimulationResult simulate(const ExcitationProfile& profile, double soc0,
                            VoltageWindow window = {}) const;

  const Discretization& discretization(double dt) const;

  /// d(mean concentration)/dt per ampere for each electrode.
  double rate_per_amp_p() const;
  double rate_per_amp_n() const;

 private:
  CellParameters params_;
  mutable std::shared_mutex cache_mutex_;
  mutable std::map<double, std::unique_ptr<Discretization>> cache_;
};

}  // namespace optex
