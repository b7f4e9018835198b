#include "flatdt/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "flatdt/errors.hpp"
#include "flatdt/numerics.hpp"

namespace flatdt {

std::pair<int, int> output_window(const FlatSpec& spec) {
  const std::vector<int> lo = spec.lo();
  return {lo.empty() ? 0 : *std::min_element(lo.begin(), lo.end()), spec.r_max()};
}

namespace {

// Unknowns y(k) for k in [k0, k0 + count), stored as one vector, time-major.
struct Layout {
  int k0 = 0;
  int count = 0;
  int m = 0;
  int lo = 0;
  int r = 0;

  int width() const { return r - lo + 1; }
  // First entry of the window read by F at step k.
  Eigen::Index window_offset(int k) const { return static_cast<Eigen::Index>(k + lo - k0) * m; }
  Eigen::Index window_size() const { return static_cast<Eigen::Index>(width()) * m; }
};

std::vector<VarRef> window_refs(const FlatSpec& spec, int lo, int r) {
  std::vector<VarRef> refs;
  for (int s = lo; s <= r; ++s)
    for (const std::string& name : spec.outputs) refs.push_back({name, s});
  return refs;
}

Binding bind_window(const FlatSpec& spec, const std::vector<VarRef>& refs, const Eigen::Ref<const Eigen::VectorXd>& w) {
  Binding b = spec.system.parameter_binding();
  for (std::size_t i = 0; i < refs.size(); ++i) b.set(refs[i], w[static_cast<Eigen::Index>(i)]);
  return b;
}

class Planner {
 public:
  Planner(const FlatSpec& spec, const PlanningProblem& problem, const PlanOptions& options)
      : spec_(spec), problem_(problem), options_(options), F_(spec.parameterization()), guards_(spec.output_guards()) {
    const auto [lo, r] = output_window(spec);
    layout_ = {problem.k_i + lo, problem.k_f - problem.k_i + (r - lo) + 1, spec.m(), lo, r};
    refs_ = window_refs(spec, lo, r);
    center_ = spec.output_equilibrium();
    const SystemModel& sys = spec.system;
    const int nm = sys.n() + sys.m();
    auto stack = [&](const BoundaryPair& p) {
      if (p.x.size() != sys.n() || p.u.size() != sys.m()) throw PreconditionError("boundary pair has wrong dimensions");
      Eigen::VectorXd t(nm);
      t << p.x, p.u;
      return t;
    };
    target_i_ = stack(problem.initial);
    target_f_ = stack(problem.final);
    if (problem.k_f - problem.k_i <= r - lo)
      throw PreconditionError("horizon too short: need k_f - k_i > " + std::to_string(r - lo) + ", got " +
                              std::to_string(problem.k_f - problem.k_i));
    if (problem.nominal && static_cast<int>(problem.nominal->size()) != layout_.count)
      throw PreconditionError("nominal profile must have " + std::to_string(layout_.count) + " entries");
  }

  OutputTrajectory run() {
    std::string last_failure = "no attempt made";
    bool guard_failure = false;
    for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
      const std::uint64_t seed = options_.seed + static_cast<std::uint64_t>(attempt);
      try {
        Eigen::VectorXd nominal = problem_.nominal ? flatten(*problem_.nominal) : default_nominal(seed);
        Eigen::VectorXd y = solve(nominal);
        const double residual = boundary(y).lpNorm<Eigen::Infinity>();
        if (!(residual <= options_.tolerance)) {
          last_failure = "boundary residual " + std::to_string(residual) + " after Gauss-Newton";
          guard_failure = false;
          continue;
        }
        double margin = std::numeric_limits<double>::infinity();
        std::optional<int> bad_window;
        for (int k = problem_.k_i; k <= problem_.k_f; ++k) {
          const double g = guard_margin(guards_, window_binding(y, k));
          margin = std::min(margin, g);
          if (!(g > options_.sampling.guard_threshold)) {
            bad_window = k;
            break;
          }
        }
        if (bad_window) {
          last_failure = "guard violated on window k=" + std::to_string(*bad_window);
          guard_failure = true;
          continue;
        }
        OutputTrajectory out;
        out.k_start = layout_.k0;
        for (int t = 0; t < layout_.count; ++t) out.values.push_back(y.segment(static_cast<Eigen::Index>(t) * layout_.m, layout_.m));
        out.boundary_residual = residual;
        out.min_guard_margin = margin;
        out.attempts = attempt + 1;
        out.seed = seed;
        return out;
      } catch (const ConvergenceError& e) {
        last_failure = e.what();
        guard_failure = false;
      } catch (const GuardError& e) {
        last_failure = e.what();
        guard_failure = true;
      }
    }
    const std::string message =
        "planning failed after " + std::to_string(options_.max_attempts) + " attempts: " + last_failure;
    if (guard_failure) throw GuardError(message);
    throw ConvergenceError(message);
  }

 private:
  Binding window_binding(const Eigen::VectorXd& y, int k) const {
    return bind_window(spec_, refs_, y.segment(layout_.window_offset(k), layout_.window_size()));
  }

  Eigen::VectorXd flatten(const std::vector<Eigen::VectorXd>& profile) const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(layout_.count) * layout_.m);
    for (int t = 0; t < layout_.count; ++t) {
      if (profile[t].size() != layout_.m) throw PreconditionError("nominal profile entry has wrong dimension");
      y.segment(static_cast<Eigen::Index>(t) * layout_.m, layout_.m) = profile[t];
    }
    return y;
  }

  // F(window) = target from a random guarded start; min-norm Newton.
  Eigen::VectorXd solve_window(const Eigen::VectorXd& target, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto residual = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
      const Binding b = bind_window(spec_, refs_, w);
      Eigen::VectorXd out(static_cast<Eigen::Index>(F_.size()));
      for (std::size_t i = 0; i < F_.size(); ++i) out[static_cast<Eigen::Index>(i)] = eval_expr(F_[i], b);
      return out - target;
    };
    auto jacobian = [&](const Eigen::VectorXd& w) { return jacobian_at(F_, refs_, bind_window(spec_, refs_, w)); };
    for (int start = 0; start < options_.sampling.max_attempts; ++start) {
      Eigen::VectorXd w(layout_.window_size());
      for (Eigen::Index i = 0; i < w.size(); ++i)
        w[i] = center_[static_cast<std::size_t>(i % layout_.m)] + options_.sampling.radius * unit(rng);
      if (!guards_hold(guards_, bind_window(spec_, refs_, w), options_.sampling.guard_threshold)) continue;
      NewtonResult r;
      try {
        r = solve_newton(residual, jacobian, w);
      } catch (const SingularEvaluationError&) {
        continue;
      }
      if (r.converged && guards_hold(guards_, bind_window(spec_, refs_, r.solution), options_.sampling.guard_threshold))
        return r.solution;
      if (start >= 50) break;
    }
    throw ConvergenceError("no guarded output window maps to the boundary pair");
  }

  // Boundary windows solved separately, free values linearly interpolated
  // between them with seeded jitter (a straight line can sit on the
  // singular locus).
  Eigen::VectorXd default_nominal(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    const Eigen::VectorXd wi = solve_window(target_i_, rng);
    const Eigen::VectorXd wf = solve_window(target_f_, rng);
    const int m = layout_.m;
    const int width = layout_.width();
    const int free_first = width;                   // first index after the initial window
    const int free_last = layout_.count - width - 1;  // last index before the final window
    Eigen::VectorXd y(static_cast<Eigen::Index>(layout_.count) * m);
    y.head(layout_.window_size()) = wi;
    y.tail(layout_.window_size()) = wf;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const Eigen::VectorXd a = wi.tail(m);
    const Eigen::VectorXd b = wf.head(m);
    const int gap = free_last - free_first + 2;
    for (int t = free_first; t <= free_last; ++t) {
      const double s = static_cast<double>(t - free_first + 1) / gap;
      for (int j = 0; j < m; ++j)
        y[static_cast<Eigen::Index>(t) * m + j] = (1.0 - s) * a[j] + s * b[j] + options_.jitter * unit(rng);
    }
    return y;
  }

  Eigen::VectorXd boundary(const Eigen::VectorXd& y) const {
    const int nm = static_cast<int>(F_.size());
    Eigen::VectorXd out(2 * nm);
    const Binding bi = window_binding(y, problem_.k_i);
    const Binding bf = window_binding(y, problem_.k_f);
    for (int i = 0; i < nm; ++i) {
      out[i] = eval_expr(F_[i], bi) - target_i_[i];
      out[nm + i] = eval_expr(F_[i], bf) - target_f_[i];
    }
    return out;
  }

  Eigen::MatrixXd boundary_jacobian(const Eigen::VectorXd& y) const {
    const int nm = static_cast<int>(F_.size());
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * nm, y.size());
    J.block(0, layout_.window_offset(problem_.k_i), nm, layout_.window_size()) =
        jacobian_at(F_, refs_, window_binding(y, problem_.k_i));
    J.block(nm, layout_.window_offset(problem_.k_f), nm, layout_.window_size()) =
        jacobian_at(F_, refs_, window_binding(y, problem_.k_f));
    return J;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& nominal) const {
    const double w = options_.boundary_weight;
    const Eigen::Index nb = 2 * static_cast<Eigen::Index>(F_.size());
    auto residual = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
      Eigen::VectorXd out(nb + y.size());
      out << w * boundary(y), y - nominal;
      return out;
    };
    auto jacobian = [&](const Eigen::VectorXd& y) -> Eigen::MatrixXd {
      Eigen::MatrixXd J(nb + y.size(), y.size());
      J << w * boundary_jacobian(y), Eigen::MatrixXd::Identity(y.size(), y.size());
      return J;
    };
    NewtonOptions gn;
    gn.max_iterations = options_.max_iterations;
    gn.tolerance = 0.0;  // least squares: run until the line search stalls
    Eigen::VectorXd y = nominal;
    try {
      y = solve_newton(residual, jacobian, nominal, gn).solution;
    } catch (const SingularEvaluationError& e) {
      throw ConvergenceError(std::string("nominal profile is singular: ") + e.what());
    }
    // The weighted problem leaves a residual of order 1/w; finish on the
    // boundary equations alone with minimum-norm steps.
    const NewtonResult polish = solve_newton([&](const Eigen::VectorXd& v) { return boundary(v); },
                                             [&](const Eigen::VectorXd& v) { return boundary_jacobian(v); }, y);
    return polish.solution;
  }

  const FlatSpec& spec_;
  const PlanningProblem& problem_;
  PlanOptions options_;
  std::vector<Expr> F_;
  std::vector<Expr> guards_;
  Layout layout_;
  std::vector<VarRef> refs_;
  std::vector<double> center_;
  Eigen::VectorXd target_i_;
  Eigen::VectorXd target_f_;
};

}  // namespace

OutputTrajectory plan_trajectory(const FlatSpec& spec, const PlanningProblem& problem, const PlanOptions& options) {
  return Planner(spec, problem, options).run();
}

Eigen::VectorXd eval_parameterization(const FlatSpec& spec, std::span<const Eigen::VectorXd> window) {
  const auto [lo, r] = output_window(spec);
  if (static_cast<int>(window.size()) != r - lo + 1) throw PreconditionError("window must hold r - lo + 1 values");
  Binding b = spec.system.parameter_binding();
  for (int s = lo; s <= r; ++s)
    for (int j = 0; j < spec.m(); ++j) b.set(spec.outputs[j], s, window[static_cast<std::size_t>(s - lo)][j]);
  const std::vector<Expr> F = spec.parameterization();
  Eigen::VectorXd out(static_cast<Eigen::Index>(F.size()));
  for (std::size_t i = 0; i < F.size(); ++i) out[static_cast<Eigen::Index>(i)] = eval_expr(F[i], b);
  return out;
}

Trajectory synthesize_xu(const FlatSpec& spec, const OutputTrajectory& y) {
  const auto [lo, r] = output_window(spec);
  const int n = spec.system.n();
  const int m = spec.system.m();
  Trajectory t;
  t.k_start = y.k_start - lo;
  for (int k = t.k_start; k + r <= y.k_end(); ++k) {
    std::span<const Eigen::VectorXd> window(y.values.data() + (k + lo - y.k_start), static_cast<std::size_t>(r - lo + 1));
    Eigen::VectorXd xu;
    try {
      xu = eval_parameterization(spec, window);
    } catch (const SingularEvaluationError& e) {
      throw SingularEvaluationError("window k=" + std::to_string(k), e.subexpression());
    }
    t.states.push_back(xu.head(n));
    t.inputs.push_back(xu.tail(m));
  }
  return t;
}

TrajectoryReport validate_trajectory(const SystemModel& sys, const Trajectory& t, const PlanningProblem& problem,
                                     double tolerance) {
  TrajectoryReport report;
  report.defects = t.defects(sys);
  for (std::size_t k = 0; k < report.defects.size(); ++k)
    if (report.defects[k] > report.max_defect) {
      report.max_defect = report.defects[k];
      report.worst_step = t.k_start + static_cast<int>(k);
    }

  if (!t.states.empty()) {
    const std::vector<Eigen::VectorXd> inputs(t.inputs.begin(), t.inputs.begin() + (t.states.size() - 1));
    const Trajectory sim = simulate_forward(sys, t.states.front(), inputs, t.k_start);
    for (std::size_t k = 0; k < sim.states.size(); ++k)
      report.simulation_deviation =
          std::max(report.simulation_deviation, (sim.states[k] - t.states[k]).lpNorm<Eigen::Infinity>());
  }

  auto deviation = [&](int k, const BoundaryPair& p) {
    const int idx = k - t.k_start;
    if (idx < 0 || idx >= static_cast<int>(t.states.size()) || idx >= static_cast<int>(t.inputs.size()))
      return std::numeric_limits<double>::infinity();
    return std::max((t.states[idx] - p.x).lpNorm<Eigen::Infinity>(), (t.inputs[idx] - p.u).lpNorm<Eigen::Infinity>());
  };
  report.boundary_residual = std::max(deviation(problem.k_i, problem.initial), deviation(problem.k_f, problem.final));
  report.pass = report.max_defect <= tolerance && report.boundary_residual <= tolerance &&
                report.simulation_deviation <= tolerance;
  return report;
}

void write_output_csv(std::ostream& os, const FlatSpec& spec, const OutputTrajectory& y) {
  os << 'k';
  for (const std::string& name : spec.outputs) os << ',' << name;
  os << '\n';
  for (std::size_t t = 0; t < y.values.size(); ++t) {
    os << y.k_start + static_cast<int>(t);
    for (Eigen::Index j = 0; j < y.values[t].size(); ++j) os << ',' << format_csv_number(y.values[t][j]);
    os << '\n';
  }
}

}  // namespace flatdt
