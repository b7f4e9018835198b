#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flatdt/expr.hpp"

namespace flatdt {

using ParameterValues = std::map<std::string, double>;

/// Discrete-time system x+ = f(x, u) together with the extension output
/// zeta = g(x, u) that completes f to a local diffeomorphism, and optionally
/// the symbolic inverse psi of (f, g).
struct SystemModel {
  std::string name;
  ParameterValues parameters;
  std::vector<std::string> states;       // x^1..x^n
  std::vector<std::string> inputs;       // u^1..u^m
  std::vector<std::string> ext_outputs;  // zeta^1..zeta^m
  std::vector<Expr> f;                   // n rows over (x, u)
  std::vector<Expr> g;                   // m rows over (x, u)
  /// n + m rows (x rows, then u rows) over (x, zeta[-1]), i.e. written in the
  /// coordinates of the successor point: x here plays the role of x+.
  std::optional<std::vector<Expr>> psi;
  Eigen::VectorXd x0;
  Eigen::VectorXd u0;

  int n() const { return static_cast<int>(states.size()); }
  int m() const { return static_cast<int>(inputs.size()); }

  std::vector<VarRef> state_refs() const;
  std::vector<VarRef> input_refs(int shift = 0) const;
  std::vector<VarRef> ext_refs(int shift) const;

  /// Binding holding only the parameter values.
  Binding parameter_binding() const;
  Binding bind_xu(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

  Eigen::VectorXd eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  Eigen::VectorXd eval_g(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

struct RankCheck {
  std::string name;
  int required = 0;
  int min_rank = 0;
  bool pass = true;
  bool informational = false;  // reported but never fails validation
};

struct ValidationReport {
  double equilibrium_defect = 0.0;
  bool equilibrium_ok = true;
  std::vector<RankCheck> ranks;
  std::optional<double> inverse_residual;  // when psi is present
  bool inverse_ok = true;
  int samples = 0;
  std::uint64_t seed = 0;

  bool pass() const;
};

struct ValidationOptions {
  int samples = 50;
  std::uint64_t seed = 42;
  double radius = 2.0;
  double equilibrium_tolerance = 1e-12;
  double inverse_tolerance = 1e-10;
};

/// Checks the rank assumptions on f and g at the equilibrium and at random
/// points around it. Fails fast if (x0, u0) is not an equilibrium.
ValidationReport validate_system(const SystemModel& sys, const ValidationOptions& options = {});

/// Solves f(x, u) = xplus, g(x, u) = zeta. Uses psi when present, otherwise
/// damped Newton from the seed. Throws ConvergenceError after 50 iterations.
std::pair<Eigen::VectorXd, Eigen::VectorXd> invert_extension(const SystemModel& sys, const Eigen::VectorXd& xplus,
                                                            const Eigen::VectorXd& zeta, const Eigen::VectorXd& seed_x,
                                                            const Eigen::VectorXd& seed_u);

/// States x(k) and inputs u(k) over a contiguous window starting at k_start.
/// inputs.size() is states.size() or states.size() - 1.
struct Trajectory {
  int k_start = 0;
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> inputs;

  /// ||x(k+1) - f(x(k), u(k))||_inf for every step where both sides exist.
  std::vector<double> defects(const SystemModel& sys) const;
  double max_defect(const SystemModel& sys) const;
};

inline constexpr double kTrajectoryTolerance = 1e-8;

Trajectory simulate_forward(const SystemModel& sys, const Eigen::VectorXd& x0,
                            const std::vector<Eigen::VectorXd>& inputs, int k_start = 0);

/// Rebuilds the past from x(k) and zeta(k-1), zeta(k-2), ... by repeated
/// inversion of the extension map. The returned window ends at x(k), which is
/// placed at index k_end.
Trajectory reconstruct_backward(const SystemModel& sys, const Eigen::VectorXd& x_k,
                                const std::vector<Eigen::VectorXd>& zeta_past, int k_end = 0);

/// CSV with header `k,x1..xn,u1..um,defect`; missing values are left empty.
void write_trajectory_csv(std::ostream& os, const SystemModel& sys, const Trajectory& t);

/// 17 significant digits, as used by every CSV writer of the toolkit.
std::string format_csv_number(double v);

}  // namespace flatdt
