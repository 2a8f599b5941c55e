#include "optex/cell_model.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "optex/errors.hpp"

#ifndef OPTEX_DATA_DIR
#define OPTEX_DATA_DIR "data"
#endif

namespace optex {

using json = nlohmann::json;

const char* to_string(Param p) { return p == Param::kp ? "kp" : "kn"; }

Param param_from_string(const std::string& s) {
  if (s == "kp" || s == "k_p") return Param::kp;
  if (s == "kn" || s == "k_n") return Param::kn;
  throw ConfigError("unknown target parameter '" + s + "' (expected kp or kn)");
}

namespace {

void validate_electrode(const ElectrodeParameters& e, const char* name, bool cathode) {
  auto fail = [&](const std::string& what) {
    throw ConfigError(std::string(name) + " electrode: " + what);
  };
  if (!(e.k > 0.0)) fail("k must be > 0");
  if (!(e.c_max > 0.0)) fail("c_max must be > 0");
  if (!(e.c_e > 0.0)) fail("c_e must be > 0");
  if (!(e.diffusion_time_s > 0.0)) fail("diffusion_time_s must be > 0");
  if (e.ocp.empty()) fail("OCP table missing");
  if (cathode) {
    if (!(1.0 >= e.stoich_0 && e.stoich_0 > e.stoich_100 && e.stoich_100 >= 0.0))
      fail("stoichiometry bounds must satisfy 1 >= x_0% > x_100% >= 0");
    if (!(e.J < 0.0)) fail("J must be negative for the cathode");
  } else {
    if (!(0.0 <= e.stoich_0 && e.stoich_0 < e.stoich_100 && e.stoich_100 <= 1.0))
      fail("stoichiometry bounds must satisfy 0 <= x_0% < x_100% <= 1");
    if (!(e.J > 0.0)) fail("J must be positive for the anode");
  }
}

ElectrodeParameters parse_electrode(const json& j, const std::filesystem::path& base) {
  ElectrodeParameters e;
  e.k = j.at("k").get<double>();
  e.c_max = j.at("c_max").get<double>();
  e.c_e = j.at("c_e").get<double>();
  e.J = j.at("J").get<double>();
  e.E_io = j.at("E_io").get<double>();
  e.stoich_0 = j.at("stoich_0").get<double>();
  e.stoich_100 = j.at("stoich_100").get<double>();
  e.diffusion_time_s = j.at("diffusion_time_s").get<double>();
  std::filesystem::path ocp = j.at("ocp_csv").get<std::string>();
  if (ocp.is_relative()) ocp = base / ocp;
  e.ocp = OcpTable::load_csv(ocp);
  return e;
}

}  // namespace

void CellParameters::validate() const {
  validate_electrode(positive, "positive", true);
  validate_electrode(negative, "negative", false);
  if (!(capacity_Ah > 0.0)) throw ConfigError("capacity must be > 0");
  if (!(R_c >= 0.0)) throw ConfigError("R_c must be >= 0");
  if (!(R_ion >= 0.0)) throw ConfigError("R_ion must be >= 0");
  if (!(sigma_y > 0.0)) throw ConfigError("sigma_y must be > 0");
  if (!(T_ref > 0.0) || !(T0 > 0.0)) throw ConfigError("temperatures must be > 0");
  if (!(diff_tau > 0.0)) throw ConfigError("electrolyte diffusion time constant must be > 0");
}

CellParameters load_cell_parameters(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open parameter file: " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  CellParameters p;
  try {
    p.capacity_Ah = j.at("capacity_Ah").get<double>();
    p.R_c = j.at("R_c_ohm").get<double>();
    p.R_ion = j.at("electrolyte_R_ion_ohm").get<double>();
    p.diff_gain = j.at("electrolyte_diff_gain_ohm").get<double>();
    p.diff_tau = j.at("electrolyte_diff_tau_s").get<double>();
    p.T_ref = j.at("T_ref_K").get<double>();
    p.T0 = j.at("T0_K").get<double>();
    p.sigma_y = j.at("sigma_y_V").get<double>();
    p.gas_constant = j.value("gas_constant", 8.314);
    p.faraday = j.value("faraday", 96485.0);
    p.positive = parse_electrode(j.at("positive"), base);
    p.negative = parse_electrode(j.at("negative"), base);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("OPTEX_DATA_DIR"); env && *env) return env;
  return OPTEX_DATA_DIR;
}

std::filesystem::path default_parameter_path() { return data_dir() / "default_cell.json"; }

CellParameters default_cell_parameters() { return load_cell_parameters(default_parameter_path()); }

Eigen::Matrix<double, 9, 1> CellState::linear() const {
  Eigen::Matrix<double, 9, 1> x;
  x << p.c_se, p.c_b1, p.c_b2, p.c_d, n.c_se, n.c_b1, n.c_b2, n.c_d, phi_diff;
  return x;
}

void CellState::set_linear(const Eigen::Matrix<double, 9, 1>& x) {
  p = {x(0), x(1), x(2), x(3)};
  n = {x(4), x(5), x(6), x(7)};
  phi_diff = x(8);
}

void ExcitationProfile::validate() const {
  if (!(dt > 0.0)) throw ConfigError("profile dt must be > 0");
  if (!(temperature > 0.0)) throw ConfigError("profile temperature must be > 0");
  for (std::size_t i = 0; i < currents.size(); ++i) {
    if (!std::isfinite(currents[i])) throw ConfigError("non-finite current at sample " + std::to_string(i));
  }
}

// Three equal-thickness finite-volume shells of a spherical particle plus a
// first-order surface lag. Shell volumes are 1:7:19, interface areas 1:4:9.
// c_se = outer shell average + c_d; c_d relaxes with tau_d = tau/(9 pi^2) to the
// gap between the parabolic-profile surface value (tau/15 per unit rate) and
// the quasi-steady outer-shell value of the 3-shell scheme (17 tau/729).
void electrode_dynamics(const ElectrodeParameters& e, double rate_per_amp,
                        Eigen::Matrix<double, 4, 4>& A, Eigen::Matrix<double, 4, 1>& B) {
  const double tau = e.diffusion_time_s;
  const double tau_d = tau / (9.0 * std::numbers::pi * std::numbers::pi);
  const double lag_gain = 1.0 / 15.0 - 17.0 / 729.0;

  // Shell coordinates s = (s1, s2, s3, c_d).
  Eigen::Matrix<double, 4, 4> As = Eigen::Matrix<double, 4, 4>::Zero();
  Eigen::Matrix<double, 4, 1> Bs = Eigen::Matrix<double, 4, 1>::Zero();
  As(0, 0) = -27.0 / tau;
  As(0, 1) = 27.0 / tau;
  As(1, 0) = 27.0 / (7.0 * tau);
  As(1, 1) = -(27.0 + 108.0) / (7.0 * tau);
  As(1, 2) = 108.0 / (7.0 * tau);
  As(2, 1) = 108.0 / (19.0 * tau);
  As(2, 2) = -108.0 / (19.0 * tau);
  As(3, 3) = -1.0 / tau_d;
  Bs(2) = 27.0 / 19.0 * rate_per_amp;
  Bs(3) = lag_gain * tau / tau_d * rate_per_amp;

  // x = (c_se, c_b1, c_b2, c_d) = T s with c_se = s3 + c_d.
  Eigen::Matrix<double, 4, 4> T;
  T << 0, 0, 1, 1,
       1, 0, 0, 0,
       0, 1, 0, 0,
       0, 0, 0, 1;
  const Eigen::Matrix<double, 4, 4> Tinv = T.inverse();
  A = T * As * Tinv;
  B = T * Bs;
}

double exchange_current_density(double c_se, const ElectrodeParameters& electrode, double T,
                                const CellParameters& params) {
  if (!(c_se > 0.0 && c_se < electrode.c_max)) {
    throw SingularityError("surface concentration " + std::to_string(c_se) +
                           " outside (0, c_max=" + std::to_string(electrode.c_max) + ")");
  }
  if (!(T > 0.0)) throw DomainError("temperature must be > 0");
  const double arrhenius =
      std::exp((1.0 / params.T_ref - 1.0 / T) * electrode.E_io / params.gas_constant);
  return arrhenius * params.faraday * electrode.k *
         std::sqrt(c_se * (electrode.c_max - c_se) * electrode.c_e);
}

double kinetic_overpotential(double current, double i0, const ElectrodeParameters& electrode,
                             const CellParameters& params) {
  if (!(i0 > 0.0)) throw SingularityError("exchange current density must be > 0");
  return params.gas_constant * params.T0 * (-electrode.J * current) / (params.faraday * i0);
}

CellModel::CellModel(CellParameters params) : params_(std::move(params)) { params_.validate(); }

CellModel::CellModel(const CellModel& other) : params_(other.params_) {}

CellModel& CellModel::operator=(const CellModel& other) {
  if (this != &other) {
    std::unique_lock lock(cache_mutex_);
    params_ = other.params_;
    cache_.clear();
  }
  return *this;
}

double CellModel::rate_per_amp_p() const {
  const auto& e = params_.positive;
  return -(e.stoich_100 - e.stoich_0) * e.c_max / (3600.0 * params_.capacity_Ah);
}

double CellModel::rate_per_amp_n() const {
  const auto& e = params_.negative;
  return -(e.stoich_100 - e.stoich_0) * e.c_max / (3600.0 * params_.capacity_Ah);
}

const Discretization& CellModel::discretization(double dt) const {
  {
    std::shared_lock lock(cache_mutex_);
    auto it = cache_.find(dt);
    if (it != cache_.end()) return *it->second;
  }
  if (!(dt > 0.0)) throw DomainError("dt must be > 0");

  Eigen::Matrix<double, 9, 9> A = Eigen::Matrix<double, 9, 9>::Zero();
  Eigen::Matrix<double, 9, 1> B = Eigen::Matrix<double, 9, 1>::Zero();
  Eigen::Matrix<double, 4, 4> Ae;
  Eigen::Matrix<double, 4, 1> Be;
  electrode_dynamics(params_.positive, rate_per_amp_p(), Ae, Be);
  A.block<4, 4>(0, 0) = Ae;
  B.segment<4>(0) = Be;
  electrode_dynamics(params_.negative, rate_per_amp_n(), Ae, Be);
  A.block<4, 4>(4, 4) = Ae;
  B.segment<4>(4) = Be;
  A(8, 8) = -1.0 / params_.diff_tau;
  B(8) = -params_.diff_gain / params_.diff_tau;

  // [Ad Bd; 0 1] = exp([A B; 0 0] dt)
  Eigen::Matrix<double, 10, 10> M = Eigen::Matrix<double, 10, 10>::Zero();
  M.block<9, 9>(0, 0) = A * dt;
  M.block<9, 1>(0, 9) = B * dt;
  const Eigen::Matrix<double, 10, 10> phi = M.exp();

  auto d = std::make_unique<Discretization>();
  d->dt = dt;
  d->Ad = phi.block<9, 9>(0, 0);
  d->Bd = phi.block<9, 1>(0, 9);

  std::unique_lock lock(cache_mutex_);
  auto [it, inserted] = cache_.emplace(dt, std::move(d));
  return *it->second;
}

CellState CellModel::init_state(double soc0) const {
  if (!(soc0 >= 0.0 && soc0 <= 1.0)) throw DomainError("initial SoC must lie in [0, 1]");
  CellState s;
  const double cp = params_.positive.stoich_at(soc0) * params_.positive.c_max;
  const double cn = params_.negative.stoich_at(soc0) * params_.negative.c_max;
  s.p = {cp, cp, cp, 0.0};
  s.n = {cn, cn, cn, 0.0};
  s.phi_diff = 0.0;
  s.held_current = 0.0;
  s.v = terminal_voltage(s, 0.0, params_.T_ref);
  return s;
}

double CellModel::eta_p(const CellState& state, double current, double T) const {
  const double i0 = exchange_current_density(state.p.c_se, params_.positive, T, params_);
  return kinetic_overpotential(current, i0, params_.positive, params_);
}

double CellModel::eta_n(const CellState& state, double current, double T) const {
  const double i0 = exchange_current_density(state.n.c_se, params_.negative, T, params_);
  return kinetic_overpotential(current, i0, params_.negative, params_);
}

double CellModel::terminal_voltage(const CellState& state, double current, double T) const {
  const double up = params_.positive.ocp(surface_stoich_p(state));
  const double un = params_.negative.ocp(surface_stoich_n(state));
  const double phi_ion = -params_.R_ion * current;
  return up - un - eta_p(state, current, T) + eta_n(state, current, T) + state.phi_diff + phi_ion -
         current * params_.R_c;
}

CellState CellModel::step(const CellState& state, double current, double dt, double T) const {
  const auto& d = discretization(dt);
  CellState next = state;
  next.set_linear(d.Ad * state.linear() + d.Bd * current);
  next.held_current = current;
  next.v = terminal_voltage(next, current, T);
  return next;
}

double CellModel::soc(const CellState& state) const {
  const auto& e = params_.negative;
  const double outer = state.n.c_se - state.n.c_d;
  const double mean = (state.n.c_b1 + 7.0 * state.n.c_b2 + 19.0 * outer) / 27.0;
  const double x = mean / e.c_max;
  return (x - e.stoich_0) / (e.stoich_100 - e.stoich_0);
}

SimulationResult CellModel::simulate(const ExcitationProfile& profile, double soc0,
                                     VoltageWindow window) const {
  profile.validate();
  SimulationResult out;
  out.states.reserve(profile.currents.size());
  out.voltage.reserve(profile.currents.size());
  CellState s = init_state(soc0);
  for (std::size_t k = 0; k < profile.currents.size(); ++k) {
    s = step(s, profile.currents[k], profile.dt, profile.temperature);
    out.states.push_back(s);
    out.voltage.push_back(s.v);
    if (s.v < window.v_min || s.v > window.v_max) out.limit_crossings.push_back(k);
  }
  return out;
}

}  // namespace optex
