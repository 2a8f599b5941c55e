#pragma once

#include <string>
#include <vector>

#include "optex/cell_model.hpp"

namespace optex {

struct CcDischargeSpec {
  double c_rate = 1.0;
  double cutoff_v = 3.0;
  double total_length_s = 3800.0;  // discharge then rest up to this length
  double hard_cap_s = 86400.0;     // error if the cutoff is not reached by then
  double dt = 1.0;
  double soc0 = 1.0;
  double temperature = 298.15;
};

/// Constant discharge at c_rate until the next step would take the voltage
/// below cutoff_v, then zero current up to total_length_s. When the cutoff
/// comes later than total_length_s the discharge is truncated there.
ExcitationProfile cc_discharge(const CcDischargeSpec& spec, const CellParameters& params,
                               double i_limit = 150.0);

struct RcidSpec {
  double c_rate = 1.0;
  double pulse_s = 0.0;  // upper bound on a single pulse; 0 disables the check
  double rest_s = 5200.0;
  std::vector<double> soc_stops;  // strictly decreasing, each in [0, soc_start)
  double soc_start = 1.0;
  double total_length_s = 0.0;    // if > 0 the final rest is resized to hit it
  double dt = 1.0;
  double temperature = 298.15;

  /// 0.95, 0.90, ..., 0.05 at 1C with a 102212 s total.
  static RcidSpec standard();
};

/// Pulse-rest blocks stepping through soc_stops. Each pulse removes exactly
/// Q * (previous stop - stop); the last step of a pulse carries a fractional
/// current when the required duration is not a whole number of steps.
ExcitationProfile rcid(const RcidSpec& spec, const CellParameters& params, double i_limit = 150.0);

/// Two-column CSV (t_s, current_A) resampled to dt by zero-order hold and scaled.
ExcitationProfile load_drive_cycle(const std::string& path, double dt = 1.0, double scale = 1.0,
                                   double i_limit = 150.0, double temperature = 298.15);

/// Constant current for n steps; the baseline used in fixed-length comparisons.
ExcitationProfile constant_current(double current, std::size_t n, double dt = 1.0, double temperature = 298.15);

/// Throws ConfigError naming the first sample with |I| > i_limit.
void check_current_bounds(const ExcitationProfile& profile, double i_limit);

std::string default_drive_cycle_path();

}  // namespace optex
