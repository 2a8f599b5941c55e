#include "optex/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "optex/errors.hpp"

namespace optex {

OcpTable::OcpTable(std::vector<double> stoichiometry, std::vector<double> volts)
    : x_(std::move(stoichiometry)), u_(std::move(volts)) {
  const std::size_t n = x_.size();
  if (n < 2 || u_.size() != n) throw ConfigError("OCP table needs >= 2 matching points");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x_[i]) || !std::isfinite(u_[i])) throw ConfigError("OCP table has non-finite entry");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) throw ConfigError("OCP stoichiometry column must be strictly increasing");
  }
  decreasing_ = u_[1] < u_[0];
  for (std::size_t i = 1; i < n; ++i) {
    const double d = u_[i] - u_[i - 1];
    if (decreasing_ ? !(d < 0.0) : !(d > 0.0)) {
      throw ConfigError("OCP table is not strictly monotone at row " + std::to_string(i));
    }
  }

  // Fritsch-Carlson slopes.
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    delta[i] = (u_[i + 1] - u_[i]) / h[i];
  }
  slope_.assign(n, 0.0);
  slope_[0] = delta[0];
  slope_[n - 1] = delta[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double w1 = 2.0 * h[i] + h[i - 1];
    const double w2 = h[i] + 2.0 * h[i - 1];
    slope_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);  // same sign guaranteed
  }
}

OcpTable OcpTable::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open OCP table: " + path.string());
  std::vector<double> x, u;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double a = 0.0, b = 0.0;
    if (!(ss >> a >> b)) {
      if (x.empty()) continue;  // header
      throw ConfigError(path.string() + ": malformed row " + std::to_string(row));
    }
    x.push_back(a);
    u.push_back(b);
  }
  return OcpTable(std::move(x), std::move(u));
}

std::size_t OcpTable::segment(double x) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
  return std::min(i, x_.size() - 2);
}

double OcpTable::operator()(double x) const {
  if (x <= x_.front()) return u_.front() + slope_.front() * (x - x_.front());
  if (x >= x_.back()) return u_.back() + slope_.back() * (x - x_.back());
  const std::size_t i = segment(x);
  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * u_[i] + (t3 - 2 * t2 + t) * h * slope_[i] +
         (-2 * t3 + 3 * t2) * u_[i + 1] + (t3 - t2) * h * slope_[i + 1];
}

double OcpTable::derivative(double x) const {
  if (x <= x_.front()) return slope_.front();
  if (x >= x_.back()) return slope_.back();
  const std::size_t i = segment(x);
  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double t2 = t * t;
  return ((6 * t2 - 6 * t) * u_[i] + (-6 * t2 + 6 * t) * u_[i + 1]) / h +
         (3 * t2 - 4 * t + 1) * slope_[i] + (3 * t2 - 2 * t) * slope_[i + 1];
}

}  // namespace optex
