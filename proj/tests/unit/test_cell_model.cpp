#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "optex/cell_model.hpp"
#include "optex/errors.hpp"

using namespace optex;

namespace {

const CellModel& model() {
  static const CellModel m(default_cell_parameters());
  return m;
}

// Straight linear interpolation of the raw CSV, independent of OcpTable.
double raw_table_lookup(const std::string& file, double x) {
  std::ifstream in(std::string(OPTEX_TEST_DATA_DIR) + "/" + file);
  std::string line;
  std::getline(in, line);
  double x0 = 0, u0 = 0, x1, u1;
  char comma;
  bool first = true;
  while (in >> x1 >> comma >> u1) {
    if (!first && x1 >= x) return u0 + (u1 - u0) * (x - x0) / (x1 - x0);
    x0 = x1;
    u0 = u1;
    first = false;
  }
  return u0;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(OcpTable, RejectsNonMonotone) {
  EXPECT_THROW(OcpTable({0.0, 0.5, 1.0}, {1.0, 2.0, 1.5}), ConfigError);
  EXPECT_THROW(OcpTable({0.0, 0.0, 1.0}, {1.0, 2.0, 3.0}), ConfigError);
  EXPECT_NO_THROW(OcpTable({0.0, 0.5, 1.0}, {3.0, 2.0, 1.0}));
}

TEST(OcpTable, InterpolatesNodesExactlyAndStaysMonotone) {
  const auto& t = model().params().negative.ocp;
  for (std::size_t i = 0; i < t.stoichiometry().size(); i += 17) {
    EXPECT_DOUBLE_EQ(t(t.stoichiometry()[i]), t.volts()[i]);
  }
  double prev = t(0.0);
  for (int i = 1; i <= 5000; ++i) {
    const double u = t(i / 5000.0);
    EXPECT_LT(u, prev);
    prev = u;
  }
}

TEST(OcpTable, DerivativeMatchesFiniteDifference) {
  const auto& t = model().params().positive.ocp;
  for (double x : {0.11, 0.3117, 0.52, 0.77, 0.93}) {
    const double h = 1e-7;
    const double fd = (t(x + h) - t(x - h)) / (2 * h);
    EXPECT_NEAR(t.derivative(x), fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(CellParameters, LoadsDefaultsAndValidates) {
  const auto& p = model().params();
  EXPECT_DOUBLE_EQ(p.capacity_Ah, 30.0);
  EXPECT_DOUBLE_EQ(p.positive.k, 2.43e-9);
  EXPECT_DOUBLE_EQ(p.negative.k, 1.85e-9);
  EXPECT_LT(p.positive.J, 0.0);
  EXPECT_GT(p.negative.J, 0.0);

  auto bad = p;
  bad.positive.k = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = p;
  bad.negative.stoich_0 = 0.99;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = p;
  bad.sigma_y = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(CellParameters, MissingFileIsConfigError) {
  EXPECT_THROW(load_cell_parameters("/nonexistent/cell.json"), ConfigError);
}

TEST(InitState, FullAndEmptyRestVoltages) {
  const auto& p = model().params();
  const auto full = model().init_state(1.0);
  EXPECT_DOUBLE_EQ(full.v, p.positive.ocp(p.positive.stoich_100) - p.negative.ocp(p.negative.stoich_100));
  EXPECT_DOUBLE_EQ(full.p.c_b1, full.p.c_se);
  EXPECT_DOUBLE_EQ(full.p.c_b2, full.p.c_se);
  EXPECT_DOUBLE_EQ(full.n.c_b1, full.n.c_se);
  EXPECT_DOUBLE_EQ(full.phi_diff, 0.0);
  const auto empty = model().init_state(0.0);
  EXPECT_DOUBLE_EQ(empty.v, p.positive.ocp(p.positive.stoich_0) - p.negative.ocp(p.negative.stoich_0));
  EXPECT_THROW(model().init_state(1.01), DomainError);
  EXPECT_THROW(model().init_state(-0.01), DomainError);
}

TEST(InitState, MidSocRestVoltageGolden) {
  const auto& p = model().params();
  const auto s = model().init_state(0.5);
  const double xp = p.positive.stoich_at(0.5), xn = p.negative.stoich_at(0.5);
  const double independent =
      raw_table_lookup("ocp_nmc811.csv", xp) - raw_table_lookup("ocp_graphite.csv", xn);
  // PCHIP vs linear interpolation on a 0.005 grid.
  EXPECT_NEAR(s.v, independent, 2e-3);
  EXPECT_NEAR(s.v, 3.6798161, 1e-6);  // frozen after first build
}

TEST(Soc, DefinitionAtInit) {
  EXPECT_NEAR(model().soc(model().init_state(1.0)), 1.0, 1e-12);
  EXPECT_NEAR(model().soc(model().init_state(0.3)), 0.3, 1e-12);
}

TEST(Step, ZeroCurrentIsFixedPoint) {
  for (double soc : {0.05, 0.5, 1.0}) {
    const auto s0 = model().init_state(soc);
    auto s = s0;
    for (int k = 0; k < 100; ++k) s = model().step(s, 0.0, 1.0, 298.15);
    const auto a = s0.linear(), b = s.linear();
    for (int i = 0; i < 8; ++i) EXPECT_LE(rel(b(i), a(i)), 1e-12) << i;
    EXPECT_EQ(b(8), 0.0);
    EXPECT_NEAR(s.v, s0.v, 1e-12);
  }
}

TEST(Step, DischargeSigns) {
  const auto s0 = model().init_state(1.0);
  const auto s = model().step(s0, 150.0, 1.0, 298.15);
  EXPECT_LT(s.n.c_se, s0.n.c_se);
  EXPECT_GT(s.p.c_se, s0.p.c_se);
  EXPECT_LT(s.v, s0.v);
}

TEST(Step, CoulombCountingOneCHour) {
  auto s = model().init_state(1.0);
  for (int k = 0; k < 1800; ++k) s = model().step(s, 30.0, 1.0, 298.15);
  EXPECT_NEAR(model().soc(s), 0.5, 1e-3);
  for (int k = 0; k < 1800; ++k) s = model().step(s, 30.0, 1.0, 298.15);
  EXPECT_NEAR(1.0 - model().soc(s), 1.0, 1e-3);
}

TEST(Step, CoulombBookkeepingRandomProfile) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> cur(-150.0, 150.0);
  auto s = model().init_state(0.6);
  double charge = 0.0;
  for (int k = 0; k < 500; ++k) {
    const double i = cur(rng);
    charge += i;
    s = model().step(s, i, 1.0, 298.15);
  }
  const double expected = -charge / (3600.0 * 30.0);
  EXPECT_LE(std::abs((model().soc(s) - 0.6) - expected), 1e-6 * std::abs(expected));
}

TEST(Step, ZohRefinementAgrees) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> cur(-150.0, 150.0);
  auto coarse = model().init_state(0.7);
  auto fine = coarse;
  for (int k = 0; k < 200; ++k) {
    const double i = cur(rng);
    coarse = model().step(coarse, i, 1.0, 298.15);
    for (int j = 0; j < 10; ++j) fine = model().step(fine, i, 0.1, 298.15);
  }
  const auto a = coarse.linear(), b = fine.linear();
  for (int i = 0; i < 8; ++i) EXPECT_LE(rel(a(i), b(i)), 1e-3);
}

TEST(Step, VoltageConsistentWithAlgebraicMap) {
  auto s = model().init_state(0.8);
  for (double i : {50.0, -120.0, 0.0, 150.0}) {
    s = model().step(s, i, 1.0, 310.0);
    EXPECT_DOUBLE_EQ(s.v, model().terminal_voltage(s, s.held_current, 310.0));
  }
}

TEST(TerminalVoltage, ZeroCurrentIsOcvDifference) {
  const auto& p = model().params();
  auto s = model().step(model().init_state(0.6), 80.0, 1.0, 298.15);
  s.phi_diff = 0.0;
  EXPECT_DOUBLE_EQ(model().terminal_voltage(s, 0.0, 298.15),
                   p.positive.ocp(model().surface_stoich_p(s)) - p.negative.ocp(model().surface_stoich_n(s)));
}

TEST(TerminalVoltage, LinearResponseAntisymmetry) {
  const auto& p = model().params();
  auto s = model().init_state(0.4);
  s = model().step(s, 120.0, 1.0, 298.15);
  for (double i : {1.0, 30.0, 150.0}) {
    const double sum = model().terminal_voltage(s, i, 298.15) + model().terminal_voltage(s, -i, 298.15);
    const double ocv = p.positive.ocp(model().surface_stoich_p(s)) - p.negative.ocp(model().surface_stoich_n(s));
    EXPECT_NEAR(sum, 2.0 * (ocv + s.phi_diff), 1e-12 * std::abs(sum));
  }
}

TEST(TerminalVoltage, MidSocThirtyAmpsTermByTerm) {
  const auto& p = model().params();
  const auto s = model().init_state(0.5);
  const double I = 30.0, T = 298.15;
  // Independent hand evaluation of each of the seven terms.
  auto i0 = [&](const ElectrodeParameters& e, double c) {
    return p.faraday * e.k * std::sqrt(c * (e.c_max - c) * e.c_e);
  };
  const double up = p.positive.ocp(s.p.c_se / p.positive.c_max);
  const double un = p.negative.ocp(s.n.c_se / p.negative.c_max);
  const double eta_p = p.gas_constant * p.T0 * (-p.positive.J * I) / (p.faraday * i0(p.positive, s.p.c_se));
  const double eta_n = p.gas_constant * p.T0 * (-p.negative.J * I) / (p.faraday * i0(p.negative, s.n.c_se));
  const double hand = up - un - eta_p + eta_n + 0.0 + (-p.R_ion * I) - I * p.R_c;
  const double v = model().terminal_voltage(s, I, T);
  EXPECT_NEAR(v, hand, 1e-12);
  EXPECT_NEAR(v, 3.6472743, 1e-6);  // frozen against the default parameter file
}

TEST(TerminalVoltage, SingularAtBounds) {
  auto s = model().init_state(0.5);
  s.p.c_se = model().params().positive.c_max;
  EXPECT_THROW(model().terminal_voltage(s, 1.0, 298.15), SingularityError);
  s = model().init_state(0.5);
  s.n.c_se = 0.0;
  EXPECT_THROW(model().terminal_voltage(s, 1.0, 298.15), SingularityError);
}

TEST(ExchangeCurrent, ArrheniusIdentityAtReference) {
  const auto& p = model().params();
  const auto& e = p.positive;
  const double c = 0.4 * e.c_max;
  EXPECT_EQ(exchange_current_density(c, e, p.T_ref, p),
            1.0 * p.faraday * e.k * std::sqrt(c * (e.c_max - c) * e.c_e));
  EXPECT_GT(exchange_current_density(c, e, p.T_ref + 20.0, p), exchange_current_density(c, e, p.T_ref, p));
}

TEST(ExchangeCurrent, MaximizedAtHalfCmaxGridScan) {
  const auto& p = model().params();
  const auto& e = p.negative;
  double best_c = 0.0, best = -1.0;
  for (int i = 1; i < 1000; ++i) {
    const double c = e.c_max * i / 1000.0;
    const double v = exchange_current_density(c, e, 298.15, p);
    if (v > best) {
      best = v;
      best_c = c;
    }
  }
  EXPECT_NEAR(best_c, e.c_max / 2.0, e.c_max / 1000.0);
}

TEST(ExchangeCurrent, LinearInRateConstant) {
  auto p = model().params();
  const double c = 0.3 * p.negative.c_max;
  const double a = exchange_current_density(c, p.negative, 300.0, p);
  p.negative.k *= 2.0;
  EXPECT_NEAR(exchange_current_density(c, p.negative, 300.0, p), 2.0 * a, 1e-15 * a);
  EXPECT_THROW(exchange_current_density(0.0, p.negative, 300.0, p), SingularityError);
  EXPECT_THROW(exchange_current_density(p.negative.c_max, p.negative, 300.0, p), SingularityError);
}

TEST(KineticOverpotential, Structure) {
  const auto& p = model().params();
  EXPECT_EQ(kinetic_overpotential(0.0, 0.2, p.positive, p), 0.0);
  const double a = kinetic_overpotential(40.0, 0.2, p.positive, p);
  EXPECT_NEAR(kinetic_overpotential(40.0, 0.4, p.positive, p), a / 2.0, 1e-15);
  EXPECT_NEAR(kinetic_overpotential(80.0, 0.2, p.positive, p), 2.0 * a, 1e-15);
  EXPECT_GT(a, 0.0);  // cathode overpotential positive on discharge
  EXPECT_LT(kinetic_overpotential(40.0, 0.2, p.negative, p), 0.0);
  EXPECT_THROW(kinetic_overpotential(1.0, 0.0, p.positive, p), SingularityError);
}

TEST(Simulate, EmptyAndZeroProfiles) {
  ExcitationProfile empty;
  EXPECT_TRUE(model().simulate(empty, 0.5).states.empty());

  ExcitationProfile zeros;
  zeros.currents.assign(50, 0.0);
  const auto r = model().simulate(zeros, 0.5);
  ASSERT_EQ(r.voltage.size(), 50u);
  for (double v : r.voltage) EXPECT_DOUBLE_EQ(v, r.voltage.front());
}

TEST(Simulate, OneCDischargeSocMonotone) {
  ExcitationProfile cc;
  cc.currents.assign(3500, 30.0);
  const auto r = model().simulate(cc, 1.0);
  double prev = 1.0;
  for (const auto& s : r.states) {
    const double soc = model().soc(s);
    EXPECT_LE(soc, prev + 1e-15);
    prev = soc;
  }
  EXPECT_TRUE(r.limit_crossings.empty());
}

TEST(Simulate, FlagsLimitCrossingsWithoutHalting) {
  ExcitationProfile charge;
  charge.currents.assign(5, -150.0);
  const auto r = model().simulate(charge, 1.0);
  EXPECT_EQ(r.voltage.size(), 5u);
  EXPECT_EQ(r.limit_crossings.size(), 5u);
}

TEST(Simulate, RejectsInvalidProfile) {
  ExcitationProfile p;
  p.dt = 0.0;
  p.currents = {1.0};
  EXPECT_THROW(model().simulate(p, 0.5), ConfigError);
  p.dt = 1.0;
  p.currents = {std::nan("")};
  EXPECT_THROW(model().simulate(p, 0.5), ConfigError);
}
