#include "optex/profiles.hpp"

#include <cmath>
#include <filesystem>

#include "optex/errors.hpp"
#include "optex/io.hpp"

namespace optex {

void check_current_bounds(const ExcitationProfile& profile, double i_limit) {
  for (std::size_t k = 0; k < profile.currents.size(); ++k) {
    if (!(std::abs(profile.currents[k]) <= i_limit))
      throw ConfigError("current " + std::to_string(profile.currents[k]) + " A at sample " + std::to_string(k) +
                        " exceeds the " + std::to_string(i_limit) + " A limit");
  }
}

ExcitationProfile constant_current(double current, std::size_t n, double dt, double temperature) {
  ExcitationProfile p;
  p.dt = dt;
  p.temperature = temperature;
  p.currents.assign(n, current);
  p.label = "constant_current";
  return p;
}

ExcitationProfile cc_discharge(const CcDischargeSpec& spec, const CellParameters& params, double i_limit) {
  if (!(spec.c_rate > 0.0)) throw ConfigError("cc_discharge: c_rate must be > 0");
  if (!(spec.dt > 0.0)) throw ConfigError("cc_discharge: dt must be > 0");
  if (!(spec.total_length_s > 0.0) || !(spec.hard_cap_s > 0.0))
    throw ConfigError("cc_discharge: lengths must be > 0");
  const double current = spec.c_rate * params.capacity_Ah;
  if (current > i_limit) throw ConfigError("cc_discharge: current exceeds the limit");

  const CellModel model(params);
  const auto total = static_cast<std::size_t>(std::llround(spec.total_length_s / spec.dt));
  const auto cap = static_cast<std::size_t>(std::llround(spec.hard_cap_s / spec.dt));
  CellState s = model.init_state(spec.soc0);
  std::size_t n_discharge = 0;
  bool reached = false;
  while (n_discharge < cap) {
    CellState next;
    try {
      next = model.step(s, current, spec.dt, spec.temperature);
    } catch (const SingularityError&) {
      reached = true;  // the surface saturated before the voltage cutoff
      break;
    }
    if (next.v < spec.cutoff_v) {
      reached = true;
      break;
    }
    s = next;
    ++n_discharge;
  }
  if (!reached)
    throw DomainError("cc_discharge: cutoff " + std::to_string(spec.cutoff_v) + " V not reached within " +
                      std::to_string(spec.hard_cap_s) + " s");

  ExcitationProfile p;
  p.dt = spec.dt;
  p.temperature = spec.temperature;
  p.label = "cc_discharge";
  p.currents.assign(std::min(n_discharge, total), current);
  p.currents.resize(total, 0.0);
  return p;
}

RcidSpec RcidSpec::standard() {
  RcidSpec s;
  for (int i = 19; i >= 1; --i) s.soc_stops.push_back(0.05 * i);
  s.total_length_s = 102212.0;
  return s;
}

ExcitationProfile rcid(const RcidSpec& spec, const CellParameters& params, double i_limit) {
  if (!(spec.c_rate > 0.0)) throw ConfigError("rcid: c_rate must be > 0");
  if (!(spec.rest_s >= 0.0) || !(spec.pulse_s >= 0.0)) throw ConfigError("rcid: durations must be >= 0");
  if (!(spec.dt > 0.0)) throw ConfigError("rcid: dt must be > 0");
  if (spec.soc_stops.empty()) throw ConfigError("rcid: no SoC stops");
  if (!(spec.soc_start <= 1.0)) throw ConfigError("rcid: soc_start must be <= 1");
  double prev = spec.soc_start;
  for (double stop : spec.soc_stops) {
    if (!(stop < prev) || stop < 0.0) throw ConfigError("rcid: SoC stops must be strictly decreasing in [0, soc_start)");
    prev = stop;
  }
  const double current = spec.c_rate * params.capacity_Ah;
  if (current > i_limit) throw ConfigError("rcid: current exceeds the limit");

  ExcitationProfile p;
  p.dt = spec.dt;
  p.temperature = spec.temperature;
  p.label = "rcid";
  const auto rest_steps = static_cast<std::size_t>(std::llround(spec.rest_s / spec.dt));
  prev = spec.soc_start;
  for (std::size_t b = 0; b < spec.soc_stops.size(); ++b) {
    const double charge_As = (prev - spec.soc_stops[b]) * params.capacity_Ah * 3600.0;
    const double duration = charge_As / current;
    if (spec.pulse_s > 0.0 && duration > spec.pulse_s + 1e-9)
      throw ConfigError("rcid: block " + std::to_string(b) + " needs a " + std::to_string(duration) +
                        " s pulse, longer than pulse_s");
    const double steps = duration / spec.dt;
    auto whole = static_cast<std::size_t>(std::floor(steps + 1e-9));
    p.currents.insert(p.currents.end(), whole, current);
    const double remainder = charge_As - static_cast<double>(whole) * current * spec.dt;
    if (remainder > 1e-9 * charge_As) p.currents.push_back(remainder / spec.dt);
    p.currents.insert(p.currents.end(), rest_steps, 0.0);
    prev = spec.soc_stops[b];
  }
  if (spec.total_length_s > 0.0) {
    const auto total = static_cast<std::size_t>(std::llround(spec.total_length_s / spec.dt));
    // Only the trailing rest may be trimmed; never cut into a pulse.
    std::size_t last_pulse = p.currents.size();
    while (last_pulse > 0 && p.currents[last_pulse - 1] == 0.0) --last_pulse;
    if (total < last_pulse) throw ConfigError("rcid: total length shorter than the pulse schedule");
    p.currents.resize(total, 0.0);
  }
  return p;
}

ExcitationProfile load_drive_cycle(const std::string& path, double dt, double scale, double i_limit,
                                   double temperature) {
  if (!(dt > 0.0)) throw ConfigError("drive cycle: dt must be > 0");
  const auto t = read_csv(path);
  if (t.header.size() != 2) throw ConfigError(path + ": expected columns t_s,current_A");
  if (t.rows.empty()) throw ConfigError(path + ": no samples");
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    if (!(t.rows[i][0] > t.rows[i - 1][0]))
      throw ConfigError(path + ":" + std::to_string(t.line_numbers[i]) + ": time column not increasing");
  }
  const double t0 = t.rows.front()[0];
  const double span = t.rows.back()[0] - t0;
  const auto n = static_cast<std::size_t>(std::floor(span / dt + 1e-9)) + 1;

  ExcitationProfile p;
  p.dt = dt;
  p.temperature = temperature;
  p.label = std::filesystem::path(path).stem().string();
  p.currents.reserve(n);
  std::size_t src = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double tk = t0 + static_cast<double>(k) * dt;
    while (src + 1 < t.rows.size() && t.rows[src + 1][0] <= tk + 1e-9 * dt) ++src;
    const double value = t.rows[src][1] * scale;
    if (!(std::abs(value) <= i_limit))
      throw ConfigError(path + ":" + std::to_string(t.line_numbers[src]) + ": current " + std::to_string(value) +
                        " A exceeds the " + std::to_string(i_limit) + " A limit");
    p.currents.push_back(value);
  }
  return p;
}

std::string default_drive_cycle_path() {
  return (data_dir() / "drive_cycle_synthetic.csv").string();
}

}  // namespace optex
