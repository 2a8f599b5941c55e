#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "optex/cell_model.hpp"
#include "optex/sensitivity.hpp"

namespace optex {

struct OptimizerSettings {
  // Absolute least-squares cost tolerance in V^2: the search stops once every
  // point left in the bracket is within ftol of the best cost found.
  double ftol = 1e-7;
  double xtol = 1e-9;  // bracket width in ln(theta)
  int max_evaluations = 200;
};

struct EstimationTask {
  Param target = Param::kp;
  double nominal = 0.0;
  double lo = 0.0;  // range the starts are spread over
  double hi = 0.0;
  double search_lo = 0.0;  // bounds of the optimizer itself
  double search_hi = 0.0;
  std::size_t n_starts = 10;
  ExcitationProfile profile;
  double soc0 = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  OptimizerSettings optimizer;

  /// Standard nominal value, start range and search bounds for a target.
  static EstimationTask defaults(Param target);
  void validate() const;
};

struct StartResult {
  double initial = 0.0;
  double estimate = 0.0;
  double abs_pct_error = 0.0;
  double start_cost = 0.0;
  double cost = 0.0;
  int evaluations = 0;
  bool converged = false;
  bool identifiable = true;
};

struct EstimationResult {
  Param target = Param::kp;
  std::vector<StartResult> starts;
  bool identifiable = true;
  std::size_t n_used = 0;  // converged, identifiable starts in the statistics
  double median = std::numeric_limits<double>::quiet_NaN();
  double q1 = median, q3 = median, min = median, max = median;
  std::vector<std::string> warnings;
};

/// n values evenly spaced on [lo, hi] including both ends; n = 1 gives the midpoint.
std::vector<double> generate_starts(const EstimationTask& task);

/// Simulated voltage plus i.i.d. Gaussian noise (seeded); sigma = 0 returns the clean trace.
std::vector<double> synthesize_voltage(const ExcitationProfile& profile, double soc0, const CellParameters& params,
                                       double noise_sigma, std::uint64_t seed);

/// Least-squares cost of a candidate rate constant against a fixed data trace.
/// The rate constants only enter the output map, so the state trajectory is
/// simulated once and every evaluation reuses it.
class LeastSquaresProblem {
 public:
  LeastSquaresProblem(const CellParameters& params, const ExcitationProfile& profile, double soc0, Param target,
                      std::vector<double> data);
  double cost(double theta) const;
  /// Sum of squared target sensitivities along the trajectory at the nominal value.
  double fi_raw() const { return fi_raw_; }
  std::size_t evaluations() const { return evaluations_; }

 private:
  CellParameters params_;
  ExcitationProfile profile_;
  Param target_;
  std::vector<double> data_;
  std::vector<CellState> states_;
  double fi_raw_ = 0.0;
  mutable std::size_t evaluations_ = 0;
};

/// Bounded scalar minimization in ln(theta) from one start: downhill bracketing
/// followed by golden-section steps with parabolic refinement.
StartResult estimate(const EstimationTask& task, const LeastSquaresProblem& problem, double start);

/// Synthesizes data (per task noise and seed) from params and runs every start.
EstimationResult run_task(const EstimationTask& task, const CellParameters& params);

/// Same, against a caller-supplied voltage trace.
EstimationResult run_task(const EstimationTask& task, const CellParameters& params, const std::vector<double>& data);

struct ComparisonInput {
  std::string label;
  ExcitationProfile profile;
  double soc0 = 1.0;
  double mean_step_time_s = std::numeric_limits<double>::quiet_NaN();  // designer cost per step, if known
};

struct ComparisonRow {
  std::string label;
  double length_s = 0.0;
  double temperature = 298.15;
  double fi_raw_kp = 0.0;
  double fi_raw_kn = 0.0;
  double median_error_kp = std::numeric_limits<double>::quiet_NaN();
  double median_error_kn = std::numeric_limits<double>::quiet_NaN();
  double mean_step_time_s = std::numeric_limits<double>::quiet_NaN();
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  double spearman_kp = std::numeric_limits<double>::quiet_NaN();  // rank correlation of fi_raw vs median error
  double spearman_kn = std::numeric_limits<double>::quiet_NaN();
};

ComparisonTable run_comparison(const std::vector<ComparisonInput>& inputs, const CellParameters& params,
                               const OptimizerSettings& optimizer = {});

/// Spearman rank correlation with average ranks for ties; NaN if fewer than two
/// finite pairs or no variation.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

std::string render_table(const ComparisonTable& table);

}  // namespace optex
