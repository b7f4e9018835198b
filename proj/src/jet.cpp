#include "flatdt/jet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flatdt/errors.hpp"

namespace flatdt {

std::optional<std::size_t> JetChart::index_of(const VarRef& v) const {
  auto it = std::find(coords.begin(), coords.end(), v);
  if (it == coords.end()) return std::nullopt;
  return static_cast<std::size_t>(it - coords.begin());
}

JetChart system_chart(const SystemModel& sys, int alpha, int beta) {
  if (alpha < 0 || beta < 0) throw PreconditionError("system_chart: negative depth");
  const int n = sys.n();
  const int m = sys.m();
  JetChart chart;
  chart.center.resize(static_cast<Eigen::Index>(alpha * m + n + (beta + 1) * m));
  Eigen::VectorXd zeta0 = Eigen::VectorXd::Zero(m);
  try {
    zeta0 = sys.eval_g(sys.x0, sys.u0);
  } catch (const Error&) {
  }
  Eigen::Index i = 0;
  for (int k = alpha; k >= 1; --k)
    for (int j = 0; j < m; ++j) {
      chart.coords.push_back({sys.ext_outputs[j], -k});
      chart.center[i++] = zeta0[j];
    }
  for (int s = 0; s < n; ++s) {
    chart.coords.push_back({sys.states[s], 0});
    chart.center[i++] = sys.x0[s];
  }
  for (int k = 0; k <= beta; ++k)
    for (int j = 0; j < m; ++j) {
      chart.coords.push_back({sys.inputs[j], k});
      chart.center[i++] = sys.u0[j];
    }
  return chart;
}

JetChart system_chart_for(const SystemModel& sys, std::span<const Expr> exprs) {
  int alpha = 0;
  int beta = 0;
  for (const VarRef& v : variables_of(exprs)) {
    if (std::find(sys.ext_outputs.begin(), sys.ext_outputs.end(), v.name) != sys.ext_outputs.end())
      alpha = std::max(alpha, -v.shift);
    else if (std::find(sys.inputs.begin(), sys.inputs.end(), v.name) != sys.inputs.end())
      beta = std::max(beta, v.shift);
  }
  return system_chart(sys, alpha, beta);
}

JetChart output_chart(std::span<const std::string> names, std::span<const int> lo, std::span<const int> hi,
                      std::span<const double> center) {
  if (lo.size() != names.size() || hi.size() != names.size()) throw PreconditionError("output_chart: size mismatch");
  JetChart chart;
  std::vector<double> c;
  for (std::size_t j = 0; j < names.size(); ++j)
    for (int k = lo[j]; k <= hi[j]; ++k) {
      chart.coords.push_back({names[j], k});
      c.push_back(j < center.size() ? center[j] : 0.0);
    }
  chart.center = Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  return chart;
}

double JetPoint::at(const VarRef& v) const {
  auto i = chart.index_of(v);
  if (!i) throw PreconditionError("coordinate " + to_string(v) + " not in chart");
  return values[static_cast<Eigen::Index>(*i)];
}

Binding JetPoint::binding(const ParameterValues& parameters) const {
  Binding b;
  for (const auto& [k, v] : parameters) b.set_parameter(k, v);
  for (std::size_t i = 0; i < chart.coords.size(); ++i) b.set(chart.coords[i], values[static_cast<Eigen::Index>(i)]);
  return b;
}

bool guards_hold(std::span<const Expr> guards, const Binding& b, double threshold) {
  for (const Expr& g : guards) {
    try {
      if (!(std::abs(eval_expr(g, b)) > threshold)) return false;
    } catch (const SingularEvaluationError&) {
      return false;
    }
  }
  return true;
}

double guard_margin(std::span<const Expr> guards, const Binding& b) {
  double margin = std::numeric_limits<double>::infinity();
  for (const Expr& g : guards) {
    try {
      margin = std::min(margin, std::abs(eval_expr(g, b)));
    } catch (const SingularEvaluationError&) {
      return 0.0;
    }
  }
  return margin;
}

JetSampler::JetSampler(JetChart chart, std::vector<Expr> guards, std::uint64_t seed, ParameterValues parameters,
                       SamplingOptions options)
    : chart_(std::move(chart)),
      guards_(std::move(guards)),
      parameters_(std::move(parameters)),
      options_(options),
      rng_(seed) {}

JetPoint JetSampler::next() {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  JetPoint p{chart_, Eigen::VectorXd(static_cast<Eigen::Index>(chart_.size()))};
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values[i] = chart_.center[i] + options_.radius * unit(rng_);
    if (guards_.empty() || guards_hold(guards_, p.binding(parameters_), options_.guard_threshold)) return p;
  }
  throw GuardError("no sample satisfied the guards after " + std::to_string(options_.max_attempts) + " attempts");
}

JetPoint sample_jet_point(const JetChart& chart, std::uint64_t seed, std::span<const Expr> guards,
                          const ParameterValues& parameters, const SamplingOptions& options) {
  return JetSampler(chart, std::vector<Expr>(guards.begin(), guards.end()), seed, parameters, options).next();
}

// ---------------------------------------------------------------------------
// shift operators

namespace {

int index_in(const std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

[[noreturn]] void not_a_jet_coordinate(const VarRef& v) {
  throw PreconditionError("'" + to_string(v) + "' is not a system jet coordinate");
}

}  // namespace

Expr shift_forward(const Expr& e, const SystemModel& sys) {
  return substitute(e, VarMapper([&sys](const VarRef& v) -> std::optional<Expr> {
                      if (int j = index_in(sys.ext_outputs, v.name); j >= 0) {
                        if (v.shift >= 0) not_a_jet_coordinate(v);
                        if (v.shift == -1) return sys.g[j];
                        return Expr::variable(v.name, v.shift + 1);
                      }
                      if (int i = index_in(sys.states, v.name); i >= 0) {
                        if (v.shift != 0) not_a_jet_coordinate(v);
                        return sys.f[i];
                      }
                      if (index_in(sys.inputs, v.name) >= 0) {
                        if (v.shift < 0) not_a_jet_coordinate(v);
                        return Expr::variable(v.name, v.shift + 1);
                      }
                      not_a_jet_coordinate(v);
                    }));
}

Expr shift_backward(const Expr& e, const SystemModel& sys) {
  if (!sys.psi) throw PreconditionError("backward shift requires a symbolic inverse of the extension map");
  const std::vector<Expr>& psi = *sys.psi;
  const int n = sys.n();
  return substitute(e, VarMapper([&](const VarRef& v) -> std::optional<Expr> {
                      if (index_in(sys.ext_outputs, v.name) >= 0) {
                        if (v.shift >= 0) not_a_jet_coordinate(v);
                        return Expr::variable(v.name, v.shift - 1);
                      }
                      if (int i = index_in(sys.states, v.name); i >= 0) {
                        if (v.shift != 0) not_a_jet_coordinate(v);
                        return psi[i];
                      }
                      if (int j = index_in(sys.inputs, v.name); j >= 0) {
                        if (v.shift < 0) not_a_jet_coordinate(v);
                        if (v.shift == 0) return psi[n + j];
                        return Expr::variable(v.name, v.shift - 1);
                      }
                      not_a_jet_coordinate(v);
                    }));
}

Expr shift_by(const Expr& e, const SystemModel& sys, int times) {
  Expr r = e;
  for (int i = 0; i < times; ++i) r = shift_forward(r, sys);
  for (int i = 0; i > times; --i) r = shift_backward(r, sys);
  return r;
}

Expr shift_output_by(const Expr& e, int s, std::span<const std::string> names) {
  if (s == 0) return e;
  return substitute(e, VarMapper([&](const VarRef& v) -> std::optional<Expr> {
                      if (!names.empty() && std::find(names.begin(), names.end(), v.name) == names.end())
                        return std::nullopt;
                      return Expr::variable(v.name, v.shift + s);
                    }));
}

}  // namespace flatdt
