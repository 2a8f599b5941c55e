#pragma once

#include <string>
#include <vector>

#include "optex/cell_model.hpp"
#include "optex/oed_env.hpp"
#include "optex/sensitivity.hpp"

namespace optex {

struct NmpcConfig {
  std::size_t horizon = 20;
  double dt = 1.0;
  double i_min = -150.0;
  double i_max = 150.0;
  double v_min = 2.8;
  double v_max = 4.2;
  double voltage_margin = 0.005;  // V, tightening of predicted voltage bounds
  int max_iterations = 40;        // SQP iterations per start
  double tolerance = 1e-6;        // on the scaled step / first-order measure
  bool warm_start = true;
  int multistart = 4;             // warm, +pulse train, -pulse train, zero (then +max, -max)
  bool finite_difference_gradients = false;
  int max_consecutive_failures = 30;

  void validate() const;
};

struct HorizonEvaluation {
  double objective = 0.0;        // -sum of squared target sensitivities
  std::vector<double> voltages;  // predicted voltage after each move
  bool singular = false;
};

/// Simulates u from x0 with the full cell model.
HorizonEvaluation horizon_objective(const CellModel& model, const CellState& x0,
                                    const std::vector<double>& u, double dt, double T, Param target);

struct StepSolution {
  double applied_current = 0.0;
  std::vector<double> sequence;
  double objective = 0.0;
  int iterations = 0;
  bool fallback = false;
  std::string diagnostic;
};

/// Receding-horizon subproblem: best feasible local optimum over the starts,
/// never worse than the (feasible) shifted warm start.
StepSolution solve_step(const CellModel& model, const CellState& x0,
                        const std::vector<double>& prev_solution, const NmpcConfig& config, double T,
                        Param target);

struct NmpcStepStats {
  int iterations = 0;
  double objective = 0.0;
  double wall_time_s = 0.0;
  bool fallback = false;
};

struct NmpcRun {
  ExcitationProfile profile;
  FisherSummary fisher;
  std::vector<NmpcStepStats> stats;
  std::vector<double> voltages;
  std::size_t violations = 0;
  bool aborted = false;
  std::string diagnostic;

  double mean_step_time() const;
};

NmpcRun run_nmpc(const CellParameters& params, const EnvConfig& env_config,
                 const NmpcConfig& nmpc_config, Param target);

namespace detail {

/// Fast horizon predictor used inside the solver: objective, voltages and their
/// gradients in the physical current units. Exposed for gradient tests.
struct HorizonModel {
  HorizonModel(const CellModel& model, const CellState& x0, std::size_t horizon, double dt, double T,
               Param target);

  /// Returns false if a predicted surface concentration leaves (0, c_max).
  bool evaluate(const std::vector<double>& u, double& objective, std::vector<double>& grad,
                std::vector<double>& voltages, std::vector<std::vector<double>>& vjac) const;

  std::size_t horizon;

 private:
  const CellModel& model_;
  double T_;
  Param target_;
  std::vector<Eigen::Vector3d> free_;     // (c_se_p, c_se_n, phi) free response at k+1
  std::vector<Eigen::Vector3d> impulse_;  // C Ad^m Bd
};

}  // namespace detail

}  // namespace optex
