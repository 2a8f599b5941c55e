#pragma once

#include <filesystem>
#include <vector>

namespace optex {

// Open-circuit potential as a function of stoichiometry, interpolated with a
// monotone piecewise cubic (Fritsch-Carlson). Outside the tabulated range the
// end segments are extended linearly.
class OcpTable {
 public:
  OcpTable() = default;

  /// Throws ConfigError unless x is strictly increasing and u strictly
  /// monotone (either direction).
  OcpTable(std::vector<double> stoichiometry, std::vector<double> volts);

  static OcpTable load_csv(const std::filesystem::path& path);

  double operator()(double x) const;
  double derivative(double x) const;

  const std::vector<double>& stoichiometry() const { return x_; }
  const std::vector<double>& volts() const { return u_; }
  bool decreasing() const { return decreasing_; }
  bool empty() const { return x_.empty(); }

 private:
  std::size_t segment(double x) const;

  std::vector<double> x_;
  std::vector<double> u_;
  std::vector<double> slope_;  // node derivatives
  bool decreasing_ = false;
};

}  // namespace optex
