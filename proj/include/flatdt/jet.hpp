#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flatdt/expr.hpp"
#include "flatdt/system.hpp"

namespace flatdt {

/// Ordered, truncated set of jet coordinates together with the centre of the
/// sampling box for each of them.
struct JetChart {
  std::vector<VarRef> coords;
  Eigen::VectorXd center;

  std::size_t size() const { return coords.size(); }
  std::optional<std::size_t> index_of(const VarRef& v) const;
};

/// (zeta[-alpha], ..., zeta[-1], x, u, u[1], ..., u[beta]), centred at the
/// equilibrium (zeta centred at g(x0, u0)).
JetChart system_chart(const SystemModel& sys, int alpha, int beta);

/// Smallest system chart containing every variable of `exprs`.
JetChart system_chart_for(const SystemModel& sys, std::span<const Expr> exprs);

/// Per component j the coordinates names[j][lo[j]] .. names[j][hi[j]],
/// component-major; every coordinate of component j is centred at center[j].
JetChart output_chart(std::span<const std::string> names, std::span<const int> lo, std::span<const int> hi,
                      std::span<const double> center = {});

struct JetPoint {
  JetChart chart;
  Eigen::VectorXd values;

  double at(const VarRef& v) const;
  /// Binds every chart coordinate plus the given parameters.
  Binding binding(const ParameterValues& parameters = {}) const;
};

struct SamplingOptions {
  double radius = 2.0;
  double guard_threshold = 1e-3;
  int max_attempts = 1000;
};

/// Deterministic stream of guarded jet points. Each point is drawn uniformly
/// from the box centre +- radius and redrawn until every guard exceeds the
/// threshold in magnitude (a guard that cannot be evaluated counts as
/// violated).
class JetSampler {
 public:
  JetSampler(JetChart chart, std::vector<Expr> guards, std::uint64_t seed, ParameterValues parameters = {},
             SamplingOptions options = {});

  JetPoint next();

 private:
  JetChart chart_;
  std::vector<Expr> guards_;
  ParameterValues parameters_;
  SamplingOptions options_;
  std::mt19937_64 rng_;
};

JetPoint sample_jet_point(const JetChart& chart, std::uint64_t seed, std::span<const Expr> guards,
                          const ParameterValues& parameters = {}, const SamplingOptions& options = {});

/// True when every guard evaluates and exceeds `threshold` in magnitude.
bool guards_hold(std::span<const Expr> guards, const Binding& b, double threshold);
/// Smallest |guard| at b; 0 when some guard cannot be evaluated.
double guard_margin(std::span<const Expr> guards, const Binding& b);

/// Forward shift delta on system jet coordinates:
/// zeta[-k] -> zeta[-k+1] (k >= 2), zeta[-1] -> g, x -> f, u[k] -> u[k+1].
Expr shift_forward(const Expr& e, const SystemModel& sys);

/// Backward shift using the symbolic inverse psi:
/// x -> psi_x(x, zeta[-1]), u -> psi_u(x, zeta[-1]), u[k] -> u[k-1] (k >= 1),
/// zeta[-k] -> zeta[-k-1]. Throws PreconditionError without psi.
Expr shift_backward(const Expr& e, const SystemModel& sys);

/// delta^times (negative: backward).
Expr shift_by(const Expr& e, const SystemModel& sys, int times);

/// Output-jet shift: every listed variable v[k] becomes v[k + s]. With an
/// empty name list every variable is shifted.
Expr shift_output_by(const Expr& e, int s, std::span<const std::string> names = {});

}  // namespace flatdt
