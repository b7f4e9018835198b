#pragma once

#include <functional>

#include <Eigen/Dense>

namespace flatdt {

/// Relative threshold below which a pivot counts as zero in rank decisions.
inline constexpr double kRankThreshold = 1e-8;

/// Numeric rank by column-pivoted Householder QR; pivots below
/// kRankThreshold times the largest pivot count as zero.
int numeric_rank(const Eigen::MatrixXd& m);

struct NewtonOptions {
  int max_iterations = 50;
  double tolerance = 1e-12;      // on the max-norm of the residual
  double min_damping = 0x1p-20;  // Armijo backtracking stops here
};

struct NewtonResult {
  Eigen::VectorXd solution;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Gauss-Newton with Armijo backtracking for r(w) = 0.
///
/// The step solves J dw = -r in the minimum-norm least-squares sense, so the
/// same routine serves square, under- and over-determined systems. A trial
/// point whose residual cannot be evaluated (singular evaluation) is treated
/// as a failed line-search step.
NewtonResult solve_newton(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
                          const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
                          Eigen::VectorXd start, const NewtonOptions& options = {});

}  // namespace flatdt
