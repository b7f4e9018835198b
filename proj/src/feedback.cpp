#include "flatdt/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "flatdt/errors.hpp"
#include "flatdt/numerics.hpp"

namespace flatdt {

namespace {

void require_forward_window(const FlatSpec& spec) {
  for (int lo : spec.lo())
    if (lo < 0) throw PreconditionError("feedback construction needs a parameterisation without backward output shifts");
}

std::vector<VarRef> full_coordinates(const FlatSpec& spec) {
  std::vector<VarRef> c = chain_coordinates(spec);
  for (const VarRef& t : chain_tops(spec)) c.push_back(t);
  return c;
}

Binding bind_coords(const FlatSpec& spec, const std::vector<VarRef>& coords, const Eigen::VectorXd& values) {
  Binding b = spec.system.parameter_binding();
  for (std::size_t i = 0; i < coords.size(); ++i) b.set(coords[i], values[static_cast<Eigen::Index>(i)]);
  return b;
}

Eigen::VectorXd eval_rows(const std::vector<Expr>& rows, const Binding& b) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = eval_expr(rows[i], b);
  return out;
}

std::vector<Expr> f_xz(const FlatSpec& spec, const StateCompletion& c) {
  std::vector<Expr> rows = spec.f_x;
  rows.insert(rows.end(), c.f_z.begin(), c.f_z.end());
  return rows;
}

// Sampler over the full jet (chain coordinates and tops) in the order of
// full_coordinates.
class FullJetSampler {
 public:
  FullJetSampler(const FlatSpec& spec, std::uint64_t seed, const SamplingOptions& options)
      : coords_(full_coordinates(spec)),
        sampler_(output_chart(spec.outputs, std::vector<int>(spec.outputs.size(), 0), spec.r(), spec.output_equilibrium()),
                 spec.output_guards(), seed, spec.system.parameters, options) {}

  Eigen::VectorXd next() {
    const JetPoint p = sampler_.next();
    Eigen::VectorXd out(static_cast<Eigen::Index>(coords_.size()));
    for (std::size_t i = 0; i < coords_.size(); ++i) out[static_cast<Eigen::Index>(i)] = p.at(coords_[i]);
    return out;
  }

 private:
  std::vector<VarRef> coords_;
  JetSampler sampler_;
};

// Shifts a full jet one step along every chain: y^j[k] <- y^j[k+1], with the
// top (v^j) moving to y^j[r_j - 1].
Eigen::VectorXd shift_chain(const FlatSpec& spec, const Eigen::VectorXd& chain, const Eigen::VectorXd& v) {
  const std::vector<int> r = spec.r();
  Eigen::VectorXd out(chain.size());
  Eigen::Index at = 0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    for (int k = 0; k + 1 < r[j]; ++k) out[at + k] = chain[at + k + 1];
    if (r[j] > 0) out[at + r[j] - 1] = v[static_cast<Eigen::Index>(j)];
    at += r[j];
  }
  return out;
}

std::string format_vector(const Eigen::VectorXd& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_csv_number(v[i]);
  return s + "]";
}

}  // namespace

std::vector<VarRef> chain_coordinates(const FlatSpec& spec) {
  const std::vector<int> r = spec.r();
  std::vector<VarRef> out;
  for (std::size_t j = 0; j < r.size(); ++j)
    for (int k = 0; k < r[j]; ++k) out.push_back({spec.outputs[j], k});
  return out;
}

std::vector<VarRef> chain_tops(const FlatSpec& spec) {
  const std::vector<int> r = spec.r();
  std::vector<VarRef> out;
  for (std::size_t j = 0; j < r.size(); ++j) out.push_back({spec.outputs[j], r[j]});
  return out;
}

std::vector<int> chain_lengths(const DynamicFeedback& fb) { return fb.spec.r(); }

// ---------------------------------------------------------------------------
// state completion

StateCompletion complete_state_map(const FlatSpec& spec, const CompletionOptions& options) {
  require_forward_window(spec);
  const std::vector<VarRef> chain = chain_coordinates(spec);
  const int N = static_cast<int>(chain.size());
  const int n = spec.system.n();
  if (N < n) throw PreconditionError("sum of r_j is smaller than n; F_x cannot be completed to a diffeomorphism");

  Binding b;
  if (options.at_equilibrium) {
    const std::vector<double> y0 = spec.output_equilibrium();
    b = spec.system.parameter_binding();
    const std::vector<VarRef> full = full_coordinates(spec);
    for (const VarRef& c : full)
      b.set(c, y0[static_cast<std::size_t>(std::find(spec.outputs.begin(), spec.outputs.end(), c.name) - spec.outputs.begin())]);
  } else {
    FullJetSampler sampler(spec, options.seed, options.sampling);
    b = bind_coords(spec, full_coordinates(spec), sampler.next());
  }

  Eigen::MatrixXd M;
  try {
    M = jacobian_at(spec.f_x, chain, b);
  } catch (const SingularEvaluationError& e) {
    throw PreconditionError(std::string("F_x is singular at the ") +
                            (options.at_equilibrium ? "equilibrium output jet" : "sampled output jet") + " (" + e.what() +
                            "); supply a state_completion or complete at a sampled point");
  }
  int rank = numeric_rank(M);
  if (rank < n) throw PreconditionError("dF_x has rank " + std::to_string(rank) + " < n at the completion point");

  StateCompletion out;
  for (int c = 0; c < N && rank < N; ++c) {
    Eigen::MatrixXd trial(M.rows() + 1, N);
    trial << M, Eigen::RowVectorXd::Unit(N, c);
    const int r = numeric_rank(trial);
    if (r > rank) {
      M = std::move(trial);
      rank = r;
      out.selected.push_back(chain[c]);
      out.names.push_back("z" + std::to_string(out.selected.size()));
      out.f_z.push_back(Expr::variable(chain[c]));
    }
  }
  if (rank < N)
    throw PreconditionError("state completion reached rank " + std::to_string(rank) + " < " + std::to_string(N));
  return out;
}

StateCompletion user_completion(const FlatSpec& spec, std::vector<std::string> names, std::vector<Expr> f_z,
                                const CompletionOptions& options) {
  require_forward_window(spec);
  const std::vector<VarRef> chain = chain_coordinates(spec);
  const int N = static_cast<int>(chain.size());
  const int p = N - spec.system.n();
  if (static_cast<int>(f_z.size()) != p || names.size() != f_z.size())
    throw PreconditionError("state completion needs p = sum r_j - n = " + std::to_string(p) + " rows, got " +
                            std::to_string(f_z.size()));
  const std::set<VarRef> allowed(chain.begin(), chain.end());
  for (const Expr& e : f_z)
    for (const VarRef& v : variables_of(e))
      if (!allowed.count(v))
        throw PreconditionError("F_z may only use y^j[k] with k < r_j; found " + to_string(v));

  StateCompletion out{std::move(names), std::move(f_z), {}};
  const std::vector<Expr> rows = f_xz(spec, out);
  FullJetSampler sampler(spec, options.seed, options.sampling);
  const std::vector<VarRef> full = full_coordinates(spec);
  for (int s = 0; s < options.samples; ++s) {
    const int rank = numeric_rank(jacobian_at(rows, chain, bind_coords(spec, full, sampler.next())));
    if (rank < N)
      throw PreconditionError("(F_x, F_z) has rank " + std::to_string(rank) + " < " + std::to_string(N) +
                              " at a sampled point");
  }
  return out;
}

// ---------------------------------------------------------------------------
// feedback

DynamicFeedback build_feedback(const FlatSpec& spec, const StateCompletion& completion,
                               const std::optional<std::map<VarRef, Expr>>& phi_hat) {
  require_forward_window(spec);
  DynamicFeedback fb;
  fb.spec = spec;
  fb.completion = completion;
  for (int j = 0; j < spec.m(); ++j) fb.new_inputs.push_back("v" + std::to_string(j + 1));
  for (const Expr& e : completion.f_z) fb.shifted_f_z.push_back(shift_output_by(e, 1, spec.outputs));
  if (!phi_hat) return fb;

  fb.phi_hat = phi_hat;
  VarMapper rules = [&](const VarRef& v) -> std::optional<Expr> {
    if (auto it = phi_hat->find(v); it != phi_hat->end()) return it->second;
    return std::nullopt;
  };
  const std::vector<VarRef> tops = chain_tops(spec);
  for (const VarRef& c : chain_coordinates(spec))
    if (!phi_hat->count(c)) throw PreconditionError("phi_hat has no row for " + to_string(c));
  Rules with_tops;
  for (const auto& [k, e] : *phi_hat) with_tops[k] = e;
  for (int j = 0; j < spec.m(); ++j) with_tops[tops[j]] = Expr::variable(fb.new_inputs[j]);

  std::set<std::string> allowed(spec.system.states.begin(), spec.system.states.end());
  allowed.insert(completion.names.begin(), completion.names.end());
  allowed.insert(fb.new_inputs.begin(), fb.new_inputs.end());
  auto close = [&](const Expr& e) {
    const Expr r = substitute(e, with_tops);
    for (const VarRef& v : variables_of(r))
      if (!allowed.count(v.name) || v.shift != 0)
        throw PreconditionError("phi_hat does not cover " + to_string(v) + " needed by the feedback");
    return r;
  };
  for (const Expr& e : fb.shifted_f_z) fb.alpha.push_back(close(e));
  for (const Expr& e : spec.f_u) fb.beta.push_back(close(e));
  fb.symbolic = true;
  return fb;
}

Eigen::VectorXd state_map(const DynamicFeedback& fb, const Eigen::VectorXd& chain) {
  return eval_rows(f_xz(fb.spec, fb.completion), bind_coords(fb.spec, chain_coordinates(fb.spec), chain));
}

Eigen::VectorXd invert_state_map(const DynamicFeedback& fb, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& guess) {
  const std::vector<Expr> rows = f_xz(fb.spec, fb.completion);
  const std::vector<VarRef> chain = chain_coordinates(fb.spec);
  Eigen::VectorXd target(x.size() + z.size());
  target << x, z;
  auto residual = [&](const Eigen::VectorXd& c) -> Eigen::VectorXd {
    return eval_rows(rows, bind_coords(fb.spec, chain, c)) - target;
  };
  auto jacobian = [&](const Eigen::VectorXd& c) { return jacobian_at(rows, chain, bind_coords(fb.spec, chain, c)); };
  NewtonResult r;
  try {
    r = solve_newton(residual, jacobian, guess);
  } catch (const SingularEvaluationError& e) {
    throw ConvergenceError(std::string("state map inversion hit a singular point: ") + e.what());
  }
  if (!(r.residual <= 1e-10))
    throw ConvergenceError("state map inversion did not converge (residual " + format_csv_number(r.residual) + ")");
  return r.solution;
}

FeedbackController::FeedbackController(const DynamicFeedback& fb, std::uint64_t seed) : fb_(fb), seed_(seed) {}

Eigen::VectorXd FeedbackController::recover_chain(const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  if (hint_) {
    try {
      return invert_state_map(fb_, x, z, *hint_);
    } catch (const ConvergenceError&) {
    }
  }
  FullJetSampler sampler(fb_.spec, seed_, SamplingOptions{});
  const Eigen::Index N = static_cast<Eigen::Index>(chain_coordinates(fb_.spec).size());
  for (int attempt = 0; attempt < 200; ++attempt) {
    try {
      return invert_state_map(fb_, x, z, sampler.next().head(N));
    } catch (const Error&) {
    }
  }
  throw ConvergenceError("no output jet found for (x, z) = " + format_vector(x) + ", " + format_vector(z));
}

FeedbackOutput FeedbackController::evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& v) {
  const FlatSpec& spec = fb_.spec;
  FeedbackOutput out;
  Eigen::VectorXd chain;
  if (fb_.symbolic) {
    Binding b = spec.system.parameter_binding();
    for (int i = 0; i < spec.system.n(); ++i) b.set(spec.system.states[i], 0, x[i]);
    for (int i = 0; i < fb_.p(); ++i) b.set(fb_.completion.names[i], 0, z[i]);
    for (int j = 0; j < spec.m(); ++j) b.set(fb_.new_inputs[j], 0, v[j]);
    out.z_next = eval_rows(fb_.alpha, b);
    out.u = eval_rows(fb_.beta, b);
    const std::vector<VarRef> coords = chain_coordinates(spec);
    chain.resize(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) chain[static_cast<Eigen::Index>(i)] = eval_expr(fb_.phi_hat->at(coords[i]), b);
  } else {
    chain = recover_chain(x, z);
    Eigen::VectorXd full(chain.size() + v.size());
    full << chain, v;
    const Binding b = bind_coords(spec, full_coordinates(spec), full);
    out.z_next = eval_rows(fb_.shifted_f_z, b);
    out.u = eval_rows(spec.f_u, b);
  }
  out.jet.resize(chain.size() + v.size());
  out.jet << chain, v;
  hint_ = shift_chain(spec, chain, v);
  return out;
}

ClosedLoopTrajectory simulate_closed_loop(const DynamicFeedback& fb, const Eigen::VectorXd& x0, const Eigen::VectorXd& z0,
                                          const std::vector<Eigen::VectorXd>& v_seq,
                                          std::optional<Eigen::VectorXd> chain_hint, std::uint64_t seed) {
  const SystemModel& sys = fb.spec.system;
  if (x0.size() != sys.n() || z0.size() != fb.p()) throw PreconditionError("closed loop: wrong (x0, z0) dimensions");
  FeedbackController controller(fb, seed);
  if (chain_hint) controller.set_hint(*chain_hint);
  ClosedLoopTrajectory t;
  t.x.push_back(x0);
  t.z.push_back(z0);
  for (std::size_t k = 0; k < v_seq.size(); ++k) {
    if (v_seq[k].size() != fb.spec.m()) throw PreconditionError("closed loop: wrong v dimension");
    FeedbackOutput out;
    Eigen::VectorXd x_next;
    try {
      out = controller.evaluate(t.x.back(), t.z.back(), v_seq[k]);
      x_next = sys.eval_f(t.x.back(), out.u);
    } catch (const Error& e) {
      std::string message = "closed loop failed at step " + std::to_string(k) + ": " + e.what();
      if (!t.jets.empty()) message += "; last good jet " + format_vector(t.jets.back());
      throw ConvergenceError(message);
    }
    t.v.push_back(v_seq[k]);
    t.u.push_back(out.u);
    t.jets.push_back(out.jet);
    t.x.push_back(std::move(x_next));
    t.z.push_back(std::move(out.z_next));
  }
  return t;
}

TransformedEquilibrium transformed_equilibrium(const DynamicFeedback& fb) {
  const FlatSpec& spec = fb.spec;
  const std::vector<double> y0 = spec.output_equilibrium();
  const std::vector<VarRef> chain = chain_coordinates(spec);
  Binding b = spec.system.parameter_binding();
  for (const VarRef& c : chain)
    b.set(c, y0[static_cast<std::size_t>(std::find(spec.outputs.begin(), spec.outputs.end(), c.name) - spec.outputs.begin())]);
  TransformedEquilibrium eq;
  eq.x = spec.system.x0;
  eq.z = eval_rows(fb.completion.f_z, b);
  eq.v = Eigen::Map<const Eigen::VectorXd>(y0.data(), static_cast<Eigen::Index>(y0.size()));
  return eq;
}

// ---------------------------------------------------------------------------
// Brunovsky verification

namespace {

// Draws v such that the full jet (chain, v) satisfies the output guards.
Eigen::VectorXd draw_guarded_input(const FlatSpec& spec, const Eigen::VectorXd& chain, std::mt19937_64& rng,
                                   const SamplingOptions& sampling) {
  const std::vector<Expr> guards = spec.output_guards();
  const std::vector<double> y0 = spec.output_equilibrium();
  const std::vector<VarRef> full = full_coordinates(spec);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::VectorXd jet(chain.size() + spec.m());
  jet.head(chain.size()) = chain;
  for (int attempt = 0; attempt < sampling.max_attempts; ++attempt) {
    for (int j = 0; j < spec.m(); ++j) jet[chain.size() + j] = y0[j] + sampling.radius * unit(rng);
    if (guards_hold(guards, bind_coords(spec, full, jet), sampling.guard_threshold)) return jet.tail(spec.m());
  }
  throw GuardError("no guarded input found for chain " + format_vector(chain));
}

}  // namespace

GuardedRun sample_guarded_run(const DynamicFeedback& fb, int steps, std::uint64_t seed, const SamplingOptions& sampling) {
  const FlatSpec& spec = fb.spec;
  const Eigen::Index N = static_cast<Eigen::Index>(chain_coordinates(spec).size());
  FullJetSampler sampler(spec, seed, sampling);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  GuardedRun run;
  const Eigen::VectorXd jet0 = sampler.next();
  run.chain0 = jet0.head(N);
  const Eigen::VectorXd xz = state_map(fb, run.chain0);
  run.x0 = xz.head(spec.system.n());
  run.z0 = xz.tail(fb.p());
  Eigen::VectorXd chain = run.chain0;
  for (int k = 0; k < steps; ++k) {
    const Eigen::VectorXd v = k == 0 ? Eigen::VectorXd(jet0.tail(spec.m())) : draw_guarded_input(spec, chain, rng, sampling);
    run.v.push_back(v);
    chain = shift_chain(spec, chain, v);
  }
  return run;
}

CheckResult verify_brunovsky(const DynamicFeedback& fb, const BrunovskyOptions& options) {
  CheckResult result;
  result.check = "brunovsky";
  result.seed = options.seed;
  const FlatSpec& spec = fb.spec;
  const Eigen::Index N = static_cast<Eigen::Index>(chain_coordinates(spec).size());
  const std::vector<VarRef> full = full_coordinates(spec);
  FullJetSampler sampler(spec, options.seed, options.sampling);
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1e-3);

  std::ostringstream chains;
  for (int r : chain_lengths(fb)) chains << (chains.tellp() > 0 ? ", " : "") << r;
  result.notes.push_back("chains (" + chains.str() + ")");

  auto fail = [&](const std::string& note) {
    result.max_residual = std::numeric_limits<double>::infinity();
    if (result.notes.size() < 6) result.notes.push_back(note);
  };

  for (int s = 0; s < options.samples; ++s) {
    ++result.samples;
    const Eigen::VectorXd jet0 = sampler.next();
    Eigen::VectorXd chain = jet0.head(N);
    Eigen::VectorXd xz = state_map(fb, chain);
    Eigen::VectorXd x = xz.head(spec.system.n());
    Eigen::VectorXd z = xz.tail(fb.p());
    FeedbackController controller(fb, options.seed);
    controller.set_hint(chain);
    for (int k = 0; k < options.horizon; ++k) {
      try {
        const Eigen::VectorXd v = k == 0 ? Eigen::VectorXd(jet0.tail(spec.m())) : draw_guarded_input(spec, chain, rng, options.sampling);
        const FeedbackOutput out = controller.evaluate(x, z, v);
        Eigen::VectorXd jet(N + spec.m());
        jet << chain, v;
        const Eigen::VectorXd u_flat = eval_rows(spec.f_u, bind_coords(spec, full, jet));
        result.max_residual = std::max(result.max_residual, (out.u - u_flat).lpNorm<Eigen::Infinity>());

        x = spec.system.eval_f(x, out.u);
        z = out.z_next;
        const Eigen::VectorXd predicted = shift_chain(spec, chain, v);
        Eigen::VectorXd guess = predicted;
        for (Eigen::Index i = 0; i < guess.size(); ++i) guess[i] += noise(rng);
        const Eigen::VectorXd recovered = invert_state_map(fb, x, z, guess);
        const double residual = (recovered - predicted).lpNorm<Eigen::Infinity>();
        result.max_residual = std::max(result.max_residual, residual);
        if (residual > options.tolerance) {
          if (result.notes.size() < 6)
            result.notes.push_back("sample " + std::to_string(s) + " step " + std::to_string(k + 1) +
                                   ": shift-chain residual " + format_csv_number(residual));
          break;
        }
        chain = predicted;
      } catch (const Error& e) {
        fail("sample " + std::to_string(s) + " step " + std::to_string(k + 1) + ": " + e.what());
        break;
      }
    }
  }
  result.pass = result.max_residual <= options.tolerance;
  return result;
}

CheckResult verify_deadbeat(const DynamicFeedback& fb, int targets, const BrunovskyOptions& options) {
  CheckResult result;
  result.check = "deadbeat";
  result.seed = options.seed;
  const FlatSpec& spec = fb.spec;
  const std::vector<int> r = spec.r();
  const int K = spec.r_max();
  const int m = spec.m();
  const Eigen::Index N = static_cast<Eigen::Index>(chain_coordinates(spec).size());
  const std::vector<VarRef> full = full_coordinates(spec);
  const std::vector<Expr> guards = spec.output_guards();
  const std::vector<double> y0 = spec.output_equilibrium();
  FullJetSampler sampler(spec, options.seed, options.sampling);
  std::mt19937_64 rng(options.seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1e-3);
  result.notes.push_back("steps " + std::to_string(K));

  for (int t = 0; t < targets; ++t) {
    ++result.samples;
    const Eigen::VectorXd start = sampler.next().head(N);
    // y^j(i) for i in [0, K + r_j]: start chain, free middle, target chain, one extra top.
    std::vector<std::vector<double>> y;
    std::vector<Eigen::VectorXd> v_seq;
    Eigen::VectorXd target(N);
    bool found = false;
    for (int attempt = 0; attempt < options.sampling.max_attempts && !found; ++attempt) {
      y.assign(m, {});
      Eigen::Index at = 0;
      for (int j = 0; j < m; ++j) {
        for (int i = 0; i <= K + r[j]; ++i) y[j].push_back(i < r[j] ? start[at + i] : y0[j] + options.sampling.radius * unit(rng));
        for (int i = 0; i < r[j]; ++i) target[at + i] = y[j][K + i];
        at += r[j];
      }
      found = true;
      for (int k = 0; k <= K && found; ++k) {
        Binding b = spec.system.parameter_binding();
        for (const VarRef& c : full) {
          const int j = static_cast<int>(std::find(spec.outputs.begin(), spec.outputs.end(), c.name) - spec.outputs.begin());
          b.set(c, y[j][k + c.shift]);
        }
        found = guards_hold(guards, b, options.sampling.guard_threshold);
      }
    }
    if (!found) {
      result.max_residual = std::numeric_limits<double>::infinity();
      result.notes.push_back("target " + std::to_string(t) + ": no guarded transfer found");
      continue;
    }
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd v(m);
      for (int j = 0; j < m; ++j) v[j] = y[j][k + r[j]];
      v_seq.push_back(v);
    }
    try {
      const Eigen::VectorXd xz = state_map(fb, start);
      const ClosedLoopTrajectory run =
          simulate_closed_loop(fb, xz.head(spec.system.n()), xz.tail(fb.p()), v_seq, start, options.seed);
      Eigen::VectorXd guess = target;
      for (Eigen::Index i = 0; i < guess.size(); ++i) guess[i] += noise(rng);
      const Eigen::VectorXd reached = invert_state_map(fb, run.x.back(), run.z.back(), guess);
      result.max_residual = std::max(result.max_residual, (reached - target).lpNorm<Eigen::Infinity>());
    } catch (const Error& e) {
      result.max_residual = std::numeric_limits<double>::infinity();
      result.notes.push_back("target " + std::to_string(t) + ": " + e.what());
    }
  }
  result.pass = result.max_residual <= options.tolerance;
  return result;
}

void write_closed_loop_csv(std::ostream& os, const DynamicFeedback& fb, const ClosedLoopTrajectory& t) {
  const SystemModel& sys = fb.spec.system;
  os << 'k';
  for (const auto& s : sys.states) os << ',' << s;
  for (const auto& s : fb.completion.names) os << ',' << s;
  for (const auto& s : fb.new_inputs) os << ',' << s;
  for (const auto& s : sys.inputs) os << ',' << s;
  os << '\n';
  auto row = [&](const Eigen::VectorXd* v, int width) {
    for (int i = 0; i < width; ++i) {
      os << ',';
      if (v) os << format_csv_number((*v)[i]);
    }
  };
  for (std::size_t k = 0; k < t.x.size(); ++k) {
    os << t.k_start + static_cast<int>(k);
    row(&t.x[k], sys.n());
    row(&t.z[k], fb.p());
    row(k < t.v.size() ? &t.v[k] : nullptr, fb.spec.m());
    row(k < t.u.size() ? &t.u[k] : nullptr, sys.m());
    os << '\n';
  }
}

}  // namespace flatdt
