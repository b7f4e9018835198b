#include "flatdt/system.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <random>

#include "flatdt/errors.hpp"
#include "flatdt/numerics.hpp"

namespace flatdt {

std::vector<VarRef> SystemModel::state_refs() const {
  std::vector<VarRef> out;
  for (const auto& s : states) out.push_back({s, 0});
  return out;
}

std::vector<VarRef> SystemModel::input_refs(int shift) const {
  std::vector<VarRef> out;
  for (const auto& s : inputs) out.push_back({s, shift});
  return out;
}

std::vector<VarRef> SystemModel::ext_refs(int shift) const {
  std::vector<VarRef> out;
  for (const auto& s : ext_outputs) out.push_back({s, shift});
  return out;
}

Binding SystemModel::parameter_binding() const {
  Binding b;
  for (const auto& [k, v] : parameters) b.set_parameter(k, v);
  return b;
}

Binding SystemModel::bind_xu(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  Binding b = parameter_binding();
  for (int i = 0; i < n(); ++i) b.set(states[i], 0, x[i]);
  for (int j = 0; j < m(); ++j) b.set(inputs[j], 0, u[j]);
  return b;
}

namespace {

Eigen::VectorXd eval_all(const std::vector<Expr>& es, const Binding& b) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(es.size()));
  for (std::size_t i = 0; i < es.size(); ++i) out[static_cast<Eigen::Index>(i)] = eval_expr(es[i], b);
  return out;
}

}  // namespace

Eigen::VectorXd SystemModel::eval_f(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return eval_all(f, bind_xu(x, u));
}

Eigen::VectorXd SystemModel::eval_g(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return eval_all(g, bind_xu(x, u));
}

// ---------------------------------------------------------------------------
// validation

bool ValidationReport::pass() const {
  if (!equilibrium_ok || !inverse_ok) return false;
  return std::all_of(ranks.begin(), ranks.end(), [](const RankCheck& r) { return r.informational || r.pass; });
}

namespace {

Eigen::VectorXd eval_psi(const SystemModel& sys, const Eigen::VectorXd& xplus, const Eigen::VectorXd& zeta) {
  Binding b = sys.parameter_binding();
  for (int i = 0; i < sys.n(); ++i) b.set(sys.states[i], 0, xplus[i]);
  for (int j = 0; j < sys.m(); ++j) b.set(sys.ext_outputs[j], -1, zeta[j]);
  return eval_all(*sys.psi, b);
}

}  // namespace

ValidationReport validate_system(const SystemModel& sys, const ValidationOptions& options) {
  ValidationReport report;
  report.seed = options.seed;
  const int n = sys.n();
  const int m = sys.m();

  report.equilibrium_defect = (sys.eval_f(sys.x0, sys.u0) - sys.x0).lpNorm<Eigen::Infinity>();
  report.equilibrium_ok = report.equilibrium_defect <= options.equilibrium_tolerance;
  if (!report.equilibrium_ok) return report;

  const std::vector<VarRef> x_refs = sys.state_refs();
  const std::vector<VarRef> u_refs = sys.input_refs();
  std::vector<VarRef> xu_refs = x_refs;
  xu_refs.insert(xu_refs.end(), u_refs.begin(), u_refs.end());
  std::vector<Expr> fg = sys.f;
  fg.insert(fg.end(), sys.g.begin(), sys.g.end());

  report.ranks = {
      {"rank d(x,u) f = n", n, n, true, false},
      {"rank d(u) f = m", m, m, true, false},
      {"rank d(x,u) (f,g) = n+m", n + m, n + m, true, false},
      {"rank d(x) f = n", n, n, true, true},
  };

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto check_at = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    const Binding b = sys.bind_xu(x, u);
    const Eigen::MatrixXd Jf = jacobian_at(sys.f, xu_refs, b);
    const Eigen::MatrixXd Jfg = jacobian_at(fg, xu_refs, b);
    const int ranks[] = {numeric_rank(Jf), numeric_rank(Jf.rightCols(m)), numeric_rank(Jfg), numeric_rank(Jf.leftCols(n))};
    for (std::size_t i = 0; i < report.ranks.size(); ++i) {
      report.ranks[i].min_rank = std::min(report.ranks[i].min_rank, ranks[i]);
      report.ranks[i].pass = report.ranks[i].min_rank >= report.ranks[i].required;
    }
  };

  check_at(sys.x0, sys.u0);
  double inverse_residual = 0.0;
  int accepted = 0;
  for (int attempt = 0; accepted < options.samples && attempt < 20 * options.samples; ++attempt) {
    Eigen::VectorXd x = sys.x0;
    Eigen::VectorXd u = sys.u0;
    for (int i = 0; i < n; ++i) x[i] += options.radius * unit(rng);
    for (int j = 0; j < m; ++j) u[j] += options.radius * unit(rng);
    try {
      check_at(x, u);
      if (sys.psi) {
        // psi o (f, g) = id
        const Eigen::VectorXd xplus = sys.eval_f(x, u);
        const Eigen::VectorXd zeta = sys.eval_g(x, u);
        const Eigen::VectorXd back = eval_psi(sys, xplus, zeta);
        Eigen::VectorXd xu(n + m);
        xu << x, u;
        inverse_residual = std::max(inverse_residual, (back - xu).lpNorm<Eigen::Infinity>());
        // (f, g) o psi = id, with (x, u) read as a point (xplus, zeta)
        const Eigen::VectorXd pre = eval_psi(sys, x, u);
        Eigen::VectorXd image(n + m);
        image << sys.eval_f(pre.head(n), pre.tail(m)), sys.eval_g(pre.head(n), pre.tail(m));
        Eigen::VectorXd target(n + m);
        target << x, u;
        inverse_residual = std::max(inverse_residual, (image - target).lpNorm<Eigen::Infinity>());
      }
      ++accepted;
    } catch (const SingularEvaluationError&) {
    }
  }
  report.samples = accepted;
  if (sys.psi) {
    report.inverse_residual = inverse_residual;
    report.inverse_ok = inverse_residual <= options.inverse_tolerance;
  }
  return report;
}

// ---------------------------------------------------------------------------
// inversion and simulation

std::pair<Eigen::VectorXd, Eigen::VectorXd> invert_extension(const SystemModel& sys, const Eigen::VectorXd& xplus,
                                                            const Eigen::VectorXd& zeta, const Eigen::VectorXd& seed_x,
                                                            const Eigen::VectorXd& seed_u) {
  const int n = sys.n();
  const int m = sys.m();
  if (xplus.size() != n || zeta.size() != m) throw PreconditionError("invert_extension: dimension mismatch");
  if (sys.psi) {
    const Eigen::VectorXd xu = eval_psi(sys, xplus, zeta);
    return {xu.head(n), xu.tail(m)};
  }

  std::vector<VarRef> refs = sys.state_refs();
  for (const VarRef& r : sys.input_refs()) refs.push_back(r);
  std::vector<Expr> fg = sys.f;
  fg.insert(fg.end(), sys.g.begin(), sys.g.end());
  Eigen::VectorXd target(n + m);
  target << xplus, zeta;

  auto residual = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
    const Binding b = sys.bind_xu(w.head(n), w.tail(m));
    return eval_all(fg, b) - target;
  };
  auto jacobian = [&](const Eigen::VectorXd& w) -> Eigen::MatrixXd {
    return jacobian_at(fg, refs, sys.bind_xu(w.head(n), w.tail(m)));
  };
  Eigen::VectorXd start(n + m);
  start << seed_x, seed_u;
  NewtonResult r = solve_newton(residual, jacobian, start);
  if (r.residual > 1e-10)
    throw ConvergenceError("extension map inversion did not converge (residual " + std::to_string(r.residual) +
                           " after " + std::to_string(r.iterations) + " iterations)");
  return {r.solution.head(n), r.solution.tail(m)};
}

std::vector<double> Trajectory::defects(const SystemModel& sys) const {
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < states.size() && k < inputs.size(); ++k)
    out.push_back((states[k + 1] - sys.eval_f(states[k], inputs[k])).lpNorm<Eigen::Infinity>());
  return out;
}

double Trajectory::max_defect(const SystemModel& sys) const {
  double d = 0.0;
  for (double v : defects(sys)) d = std::max(d, v);
  return d;
}

Trajectory simulate_forward(const SystemModel& sys, const Eigen::VectorXd& x0,
                            const std::vector<Eigen::VectorXd>& inputs, int k_start) {
  Trajectory t;
  t.k_start = k_start;
  t.states.push_back(x0);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    try {
      t.states.push_back(sys.eval_f(t.states.back(), inputs[k]));
    } catch (const SingularEvaluationError& e) {
      throw SingularEvaluationError("step " + std::to_string(k_start + static_cast<int>(k)), e.subexpression());
    }
    t.inputs.push_back(inputs[k]);
  }
  return t;
}

Trajectory reconstruct_backward(const SystemModel& sys, const Eigen::VectorXd& x_k,
                                const std::vector<Eigen::VectorXd>& zeta_past, int k_end) {
  std::vector<Eigen::VectorXd> xs{x_k};
  std::vector<Eigen::VectorXd> us;
  Eigen::VectorXd seed_x = x_k;
  Eigen::VectorXd seed_u = sys.u0;
  for (std::size_t depth = 0; depth < zeta_past.size(); ++depth) {
    try {
      auto [x, u] = invert_extension(sys, xs.back(), zeta_past[depth], seed_x, seed_u);
      seed_x = x;
      seed_u = u;
      xs.push_back(std::move(x));
      us.push_back(std::move(u));
    } catch (const Error& e) {
      throw ConvergenceError("backward reconstruction failed at depth " + std::to_string(depth + 1) + ": " + e.what());
    }
  }
  std::reverse(xs.begin(), xs.end());
  std::reverse(us.begin(), us.end());
  Trajectory t;
  t.k_start = k_end - static_cast<int>(zeta_past.size());
  t.states = std::move(xs);
  t.inputs = std::move(us);
  return t;
}

std::string format_csv_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  return std::string(buf.data(), end);
}

void write_trajectory_csv(std::ostream& os, const SystemModel& sys, const Trajectory& t) {
  os << 'k';
  for (const auto& s : sys.states) os << ',' << s;
  for (const auto& s : sys.inputs) os << ',' << s;
  os << ",defect\n";
  const std::vector<double> defects = t.defects(sys);
  for (std::size_t k = 0; k < t.states.size(); ++k) {
    os << t.k_start + static_cast<int>(k);
    for (Eigen::Index i = 0; i < t.states[k].size(); ++i) os << ',' << format_csv_number(t.states[k][i]);
    if (k < t.inputs.size()) {
      for (Eigen::Index j = 0; j < t.inputs[k].size(); ++j) os << ',' << format_csv_number(t.inputs[k][j]);
    } else {
      for (int j = 0; j < sys.m(); ++j) os << ',';
    }
    os << ',';
    if (k < defects.size()) os << format_csv_number(defects[k]);
    os << '\n';
  }
}

}  // namespace flatdt
