#include "optex/sensitivity.hpp"

#include <cmath>

#include "optex/errors.hpp"

namespace optex {

double voltage_sensitivity(const CellModel& model, const CellState& state, double current, double T,
                           Param parameter) {
  const auto& params = model.params();
  const bool cathode = parameter == Param::kp;
  const auto& e = cathode ? params.positive : params.negative;
  const double c_se = cathode ? state.p.c_se : state.n.c_se;

  const double i0 = exchange_current_density(c_se, e, T, params);
  const double eta = kinetic_overpotential(current, i0, e, params);
  const double deta_di0 = -eta / i0;  // eta ~ 1/i0
  const double di0_dk = i0 / e.k;     // i0 ~ k
  // V contains -eta_p and +eta_n.
  return cathode ? -deta_di0 * di0_dk : deta_di0 * di0_dk;
}

SensitivityTrace analytic_sensitivity(const CellModel& model, const SimulationResult& sim,
                                      const ExcitationProfile& profile, Param parameter) {
  SensitivityTrace t;
  t.parameter = parameter;
  t.dt = profile.dt;
  t.values.reserve(sim.states.size());
  for (std::size_t k = 0; k < sim.states.size(); ++k) {
    t.values.push_back(
        voltage_sensitivity(model, sim.states[k], profile.currents[k], profile.temperature, parameter));
  }
  return t;
}

SensitivityTrace analytic_sensitivity(const CellModel& model, const ExcitationProfile& profile,
                                      double soc0, Param parameter) {
  return analytic_sensitivity(model, model.simulate(profile, soc0), profile, parameter);
}

SensitivityTrace finite_difference_sensitivity(const ExcitationProfile& profile, double soc0,
                                               const CellParameters& params, Param parameter,
                                               double rel_delta) {
  if (!(rel_delta > 0.0 && rel_delta <= 1e-2)) throw DomainError("rel_delta must lie in (0, 1e-2]");
  const double theta = params.rate_constant(parameter);
  CellParameters up = params, down = params;
  up.set_rate_constant(parameter, theta * (1.0 + rel_delta));
  down.set_rate_constant(parameter, theta * (1.0 - rel_delta));
  const auto v_up = CellModel(up).simulate(profile, soc0).voltage;
  const auto v_down = CellModel(down).simulate(profile, soc0).voltage;

  SensitivityTrace t;
  t.parameter = parameter;
  t.dt = profile.dt;
  t.values.resize(v_up.size());
  const double denom = 2.0 * theta * rel_delta;
  for (std::size_t k = 0; k < v_up.size(); ++k) t.values[k] = (v_up[k] - v_down[k]) / denom;
  return t;
}

FisherSummary fisher_information(const SensitivityTrace& trace, double sigma_y) {
  if (!(sigma_y > 0.0)) throw DomainError("sigma_y must be > 0");
  FisherSummary f;
  f.parameter = trace.parameter;
  f.n_samples = trace.values.size();
  for (double s : trace.values) f.fi_raw += s * s;
  f.fi_scaled = f.fi_raw / (sigma_y * sigma_y);
  f.cramer_rao = f.fi_scaled > 0.0 ? 1.0 / f.fi_scaled : std::numeric_limits<double>::infinity();
  return f;
}

std::size_t SensitivityMap::argmax_soc(std::size_t rate_idx) const {
  std::size_t best = 0;
  double best_v = -1.0;
  for (std::size_t j = 0; j < soc_grid.size(); ++j) {
    const double v = at(rate_idx, j);
    if (std::isfinite(v) && v > best_v) {
      best_v = v;
      best = j;
    }
  }
  return best;
}

SensitivityMap sensitivity_map(const std::vector<double>& c_rates, const std::vector<double>& soc_grid,
                               const CellParameters& params, Param parameter, double T, double dt,
                               double i_limit) {
  for (double c : c_rates) {
    if (!(std::abs(c) * params.capacity_Ah <= i_limit + 1e-9))
      throw DomainError("C-rate " + std::to_string(c) + " exceeds the current limit");
  }
  for (double s : soc_grid) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("SoC grid values must lie in (0, 1)");
  }
  const CellModel model(params);
  SensitivityMap map;
  map.parameter = parameter;
  map.c_rates = c_rates;
  map.soc_grid = soc_grid;
  map.squared.resize(c_rates.size() * soc_grid.size());
  map.singular.resize(map.squared.size(), false);
  for (std::size_t i = 0; i < c_rates.size(); ++i) {
    const double current = c_rates[i] * params.capacity_Ah;
    for (std::size_t j = 0; j < soc_grid.size(); ++j) {
      const std::size_t idx = i * soc_grid.size() + j;
      try {
        const auto s = model.step(model.init_state(soc_grid[j]), current, dt, T);
        const double sens = voltage_sensitivity(model, s, current, T, parameter);
        map.squared[idx] = sens * sens;
      } catch (const SingularityError&) {
        map.squared[idx] = std::nan("");
        map.singular[idx] = true;
      }
    }
  }
  return map;
}

}  // namespace optex
