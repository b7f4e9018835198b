#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "flatdt/flatness.hpp"
#include "flatdt/system.hpp"

namespace flatdt {

struct BoundaryPair {
  Eigen::VectorXd x;
  Eigen::VectorXd u;
};

/// Point-to-point transfer from (x_i, u_i) at k_i to (x_f, u_f) at k_f.
struct PlanningProblem {
  int k_i = 0;
  int k_f = 0;
  BoundaryPair initial;
  BoundaryPair final;
  /// Optional nominal y profile over [k_i + lo, k_f + r] (see output_window).
  std::optional<std::vector<Eigen::VectorXd>> nominal;
};

/// y(k) for k = k_start, k_start + 1, ...
struct OutputTrajectory {
  int k_start = 0;
  std::vector<Eigen::VectorXd> values;
  double boundary_residual = 0.0;
  double min_guard_margin = 0.0;
  int attempts = 0;
  std::uint64_t seed = 0;

  const Eigen::VectorXd& at(int k) const { return values.at(static_cast<std::size_t>(k - k_start)); }
  int k_end() const { return k_start + static_cast<int>(values.size()) - 1; }
};

struct PlanOptions {
  std::uint64_t seed = 42;
  int max_iterations = 200;
  double boundary_weight = 1e6;
  double tolerance = 1e-8;
  /// Amplitude of the seeded jitter added to the default nominal profile.
  double jitter = 0.5;
  int max_attempts = 20;
  SamplingOptions sampling;
};

/// Lowest and highest shift a parameterisation window covers: F at step k
/// reads y(k + lo) .. y(k + r).
std::pair<int, int> output_window(const FlatSpec& spec);

/// Solves the boundary conditions F(y(k_i + lo), ..., y(k_i + r)) = (x_i, u_i)
/// and the same at k_f, choosing the remaining values closest to the nominal
/// profile. Requires k_f - k_i > r - lo. Throws PreconditionError,
/// ConvergenceError or GuardError (with the offending window).
OutputTrajectory plan_trajectory(const FlatSpec& spec, const PlanningProblem& problem, const PlanOptions& options = {});

/// (x(k), u(k)) = F(window at k) for k in [k_start - lo, k_end - r].
Trajectory synthesize_xu(const FlatSpec& spec, const OutputTrajectory& y);

/// F at one window given as y(k + lo) .. y(k + r).
Eigen::VectorXd eval_parameterization(const FlatSpec& spec, std::span<const Eigen::VectorXd> window);

struct TrajectoryReport {
  std::vector<double> defects;
  double max_defect = 0.0;
  int worst_step = 0;
  /// Distance between the trajectory and a forward simulation of its inputs.
  double simulation_deviation = 0.0;
  double boundary_residual = 0.0;
  bool pass = false;
};

TrajectoryReport validate_trajectory(const SystemModel& sys, const Trajectory& t, const PlanningProblem& problem,
                                     double tolerance = kTrajectoryTolerance);

void write_output_csv(std::ostream& os, const FlatSpec& spec, const OutputTrajectory& y);

}  // namespace flatdt
