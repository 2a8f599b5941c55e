#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "optex/cell_model.hpp"

namespace optex {

struct SensitivityTrace {
  Param parameter = Param::kp;
  std::vector<double> values;  // dV_k/dtheta, V per parameter unit
  double dt = 1.0;
};

struct FisherSummary {
  Param parameter = Param::kp;
  double fi_raw = 0.0;     // sum of squared sensitivities, V^2 theta^-2
  double fi_scaled = 0.0;  // fi_raw / sigma_y^2
  double cramer_rao = std::numeric_limits<double>::infinity();  // 1 / fi_scaled
  std::size_t n_samples = 0;
};

/// dV/dk at a post-step state with the held current, via the chain rule
/// (d eta / d i0)(d i0 / d k). Equals eta_p/k_p for kp and -eta_n/k_n for kn.
double voltage_sensitivity(const CellModel& model, const CellState& state, double current, double T,
                           Param parameter);

/// Analytic sensitivity along a simulated trajectory (one value per sample).
SensitivityTrace analytic_sensitivity(const CellModel& model, const ExcitationProfile& profile,
                                      double soc0, Param parameter);
SensitivityTrace analytic_sensitivity(const CellModel& model, const SimulationResult& sim,
                                      const ExcitationProfile& profile, Param parameter);

/// Central differences, re-simulating the full trajectory at theta(1 +/- delta).
SensitivityTrace finite_difference_sensitivity(const ExcitationProfile& profile, double soc0,
                                               const CellParameters& params, Param parameter,
                                               double rel_delta);

FisherSummary fisher_information(const SensitivityTrace& trace, double sigma_y);

struct SensitivityMap {
  Param parameter = Param::kp;
  std::vector<double> c_rates;
  std::vector<double> soc_grid;
  std::vector<double> squared;  // row-major [c_rate][soc]; NaN where singular
  std::vector<bool> singular;

  double at(std::size_t rate_idx, std::size_t soc_idx) const {
    return squared[rate_idx * soc_grid.size() + soc_idx];
  }
  /// Index into soc_grid of the largest finite value in a C-rate row.
  std::size_t argmax_soc(std::size_t rate_idx) const;
};

/// Squared one-step sensitivity from an equilibrated state at each (C-rate, SoC).
/// C-rate = discharge current / capacity; |C-rate| * capacity must not exceed i_limit.
SensitivityMap sensitivity_map(const std::vector<double>& c_rates, const std::vector<double>& soc_grid,
                               const CellParameters& params, Param parameter, double T,
                               double dt = 1.0, double i_limit = 150.0);

}  // namespace optex
