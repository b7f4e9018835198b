#include "flatdt/flatness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "flatdt/errors.hpp"
#include "flatdt/numerics.hpp"

namespace flatdt {

// ---------------------------------------------------------------------------
// FlatSpec

namespace {

int output_index(const FlatSpec& spec, const std::string& name) {
  auto it = std::find(spec.outputs.begin(), spec.outputs.end(), name);
  return it == spec.outputs.end() ? -1 : static_cast<int>(it - spec.outputs.begin());
}

bool is_ext_output(const SystemModel& sys, const std::string& name) {
  return std::find(sys.ext_outputs.begin(), sys.ext_outputs.end(), name) != sys.ext_outputs.end();
}

bool is_input(const SystemModel& sys, const std::string& name) {
  return std::find(sys.inputs.begin(), sys.inputs.end(), name) != sys.inputs.end();
}

// Per component [min shift, max shift] over the output variables of exprs.
std::pair<std::vector<int>, std::vector<int>> output_extent(const FlatSpec& spec, std::span<const Expr> exprs) {
  std::vector<int> lo(spec.outputs.size(), std::numeric_limits<int>::max());
  std::vector<int> hi(spec.outputs.size(), std::numeric_limits<int>::min());
  for (const VarRef& v : variables_of(exprs)) {
    const int j = output_index(spec, v.name);
    if (j < 0) continue;
    lo[j] = std::min(lo[j], v.shift);
    hi[j] = std::max(hi[j], v.shift);
  }
  for (std::size_t j = 0; j < lo.size(); ++j)
    if (hi[j] < lo[j]) lo[j] = hi[j] = 0;
  return {lo, hi};
}

template <typename T>
std::vector<T> concat(std::vector<T> a, const std::vector<T>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Skips expressions free of variables: a parameter-only factor is either
// nonzero everywhere or zero everywhere, and neither is a locus to avoid.
void append_unique(std::vector<Expr>& out, const std::vector<Expr>& more) {
  for (const Expr& e : more) {
    if (variables_of(e).empty()) continue;
    const bool known = std::any_of(out.begin(), out.end(), [&](const Expr& k) { return structurally_equal(k, e); });
    if (!known) out.push_back(e);
  }
}

}  // namespace

std::vector<Expr> FlatSpec::parameterization() const { return concat(f_x, f_u); }

std::vector<int> FlatSpec::r() const {
  const std::vector<Expr> F = parameterization();
  return output_extent(*this, F).second;
}

std::vector<int> FlatSpec::lo() const {
  const std::vector<Expr> F = parameterization();
  std::vector<int> lo = output_extent(*this, F).first;
  for (int& l : lo) l = std::min(l, 0);
  return lo;
}

int FlatSpec::r_max() const {
  const std::vector<int> rs = r();
  return rs.empty() ? 0 : *std::max_element(rs.begin(), rs.end());
}

std::vector<int> FlatSpec::q1() const {
  std::vector<int> out;
  for (const Expr& p : phi) {
    int q = 0;
    for (const VarRef& v : variables_of(p))
      if (is_ext_output(system, v.name)) q = std::max(q, -v.shift);
    out.push_back(q);
  }
  return out;
}

std::vector<int> FlatSpec::q2() const {
  std::vector<int> out;
  for (const Expr& p : phi) {
    int q = 0;
    for (const VarRef& v : variables_of(p))
      if (is_input(system, v.name)) q = std::max(q, v.shift);
    out.push_back(q);
  }
  return out;
}

std::vector<double> FlatSpec::output_equilibrium() const {
  std::vector<double> out;
  Eigen::VectorXd zeta0 = Eigen::VectorXd::Zero(system.m());
  try {
    zeta0 = system.eval_g(system.x0, system.u0);
  } catch (const Error&) {
  }
  for (const Expr& p : phi) {
    Binding b = system.parameter_binding();
    for (const VarRef& v : variables_of(p)) {
      auto pos = [&](const std::vector<std::string>& names) {
        return static_cast<Eigen::Index>(std::find(names.begin(), names.end(), v.name) - names.begin());
      };
      if (is_ext_output(system, v.name))
        b.set(v, zeta0[pos(system.ext_outputs)]);
      else if (is_input(system, v.name))
        b.set(v, system.u0[pos(system.inputs)]);
      else
        b.set(v, system.x0[pos(system.states)]);
    }
    try {
      out.push_back(eval_expr(p, b));
    } catch (const Error&) {
      out.push_back(0.0);
    }
  }
  return out;
}

std::vector<Expr> FlatSpec::output_guards() const {
  std::vector<Expr> out;
  append_unique(out, guards);
  for (const Expr& e : parameterization()) append_unique(out, singular_factors(e));
  for (const Expr& e : f_x) append_unique(out, singular_factors(shift_output_by(e, 1, outputs)));
  return out;
}

// ---------------------------------------------------------------------------
// shift table

const Expr& ShiftTable::at(int component, int shift) const {
  if (component < 0 || component >= components() || shift < -alpha_ || shift > beta_)
    throw PreconditionError("shift table entry (" + std::to_string(component) + ", " + std::to_string(shift) +
                            ") out of range");
  return entries_[component][shift + alpha_];
}

ShiftTable build_shift_table(const FlatSpec& spec, int alpha, int beta) {
  if (alpha < 0 || beta < 0) throw PreconditionError("build_shift_table: negative depth");
  std::vector<std::vector<Expr>> entries;
  for (const Expr& p : spec.phi) {
    std::vector<Expr> row(static_cast<std::size_t>(alpha + beta + 1));
    row[alpha] = fold(p);
    for (int i = 1; i <= beta; ++i) row[alpha + i] = shift_forward(row[alpha + i - 1], spec.system);
    for (int i = 1; i <= alpha; ++i) row[alpha - i] = shift_backward(row[alpha - i + 1], spec.system);
    entries.push_back(std::move(row));
  }
  return ShiftTable(alpha, beta, std::move(entries));
}

// ---------------------------------------------------------------------------
// checks

namespace {

ShiftTable table_for_parameterization(const FlatSpec& spec) {
  const std::vector<int> lo = spec.lo();
  const int alpha = lo.empty() ? 0 : -*std::min_element(lo.begin(), lo.end());
  return build_shift_table(spec, alpha, std::max(spec.r_max(), 0));
}

Expr pull_back(const FlatSpec& spec, const ShiftTable& table, const Expr& e) {
  return substitute(e, VarMapper([&](const VarRef& v) -> std::optional<Expr> {
                      const int j = output_index(spec, v.name);
                      if (j < 0) return std::nullopt;
                      return table.at(j, v.shift);
                    }));
}

std::vector<Expr> system_guards_with(const FlatSpec& spec, const ShiftTable& table) {
  std::vector<Expr> y_guards;
  append_unique(y_guards, spec.guards);
  for (const Expr& e : spec.parameterization()) append_unique(y_guards, singular_factors(e));
  std::vector<Expr> out;
  for (const Expr& g : y_guards) append_unique(out, {pull_back(spec, table, g)});
  return out;
}

// Output-jet binding obtained by evaluating delta^k(phi^j) at a system point.
Binding compose_outputs(const FlatSpec& spec, const ShiftTable& table, const std::set<VarRef>& needed,
                        const Binding& system_point) {
  Binding b = spec.system.parameter_binding();
  for (const VarRef& v : needed) {
    const int j = output_index(spec, v.name);
    if (j >= 0) b.set(v, eval_expr(table.at(j, v.shift), system_point));
  }
  return b;
}

Eigen::VectorXd eval_rows(std::span<const Expr> rows, const Binding& b) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = eval_expr(rows[i], b);
  return out;
}

JetChart chart_for_outputs(const FlatSpec& spec, std::span<const Expr> exprs) {
  auto [lo, hi] = output_extent(spec, exprs);
  const std::vector<double> center = spec.output_equilibrium();
  return output_chart(spec.outputs, lo, hi, center);
}

CheckResult start_check(const char* name, const VerifyOptions& options) {
  CheckResult c;
  c.check = name;
  c.seed = options.seed;
  return c;
}

}  // namespace

std::vector<Expr> system_guards(const FlatSpec& spec) {
  return system_guards_with(spec, table_for_parameterization(spec));
}

CheckResult verify_parameterization_identity(const FlatSpec& spec, const VerifyOptions& options) {
  CheckResult result = start_check("parameterization_identity", options);
  const SystemModel& sys = spec.system;
  const ShiftTable table = table_for_parameterization(spec);
  const std::vector<Expr> F = spec.parameterization();
  const std::set<VarRef> needed = variables_of(F);
  const std::vector<Expr> guards = system_guards_with(spec, table);

  std::vector<Expr> used = guards;
  for (const VarRef& v : needed)
    if (int j = output_index(spec, v.name); j >= 0) used.push_back(table.at(j, v.shift));
  JetSampler sampler(system_chart_for(sys, used), guards, options.seed, sys.parameters, options.sampling);

  for (const Expr& g : guards) result.notes.push_back("guarded singular locus: " + to_string(g) + " = 0");
  for (int s = 0; s < options.samples; ++s) {
    const JetPoint point = sampler.next();
    const Binding b = point.binding(sys.parameters);
    Eigen::VectorXd coords(sys.n() + sys.m());
    for (int i = 0; i < sys.n(); ++i) coords[i] = point.at({sys.states[i], 0});
    for (int j = 0; j < sys.m(); ++j) coords[sys.n() + j] = point.at({sys.inputs[j], 0});
    try {
      const Eigen::VectorXd value = eval_rows(F, compose_outputs(spec, table, needed, b));
      const Eigen::Index rows = std::min(value.size(), coords.size());
      result.max_residual =
          std::max(result.max_residual, (value.head(rows) - coords.head(rows)).lpNorm<Eigen::Infinity>());
    } catch (const SingularEvaluationError& e) {
      result.max_residual = std::numeric_limits<double>::infinity();
      result.notes.push_back(std::string("singular evaluation: ") + e.what());
    }
    ++result.samples;
  }
  result.pass = static_cast<int>(F.size()) == sys.n() + sys.m() && result.max_residual <= options.tolerance;
  return result;
}

CheckResult verify_system_compatibility(const FlatSpec& spec, const VerifyOptions& options) {
  CheckResult result = start_check("system_compatibility", options);
  const SystemModel& sys = spec.system;
  std::vector<Expr> shifted;
  for (const Expr& e : spec.f_x) shifted.push_back(shift_output_by(e, 1, spec.outputs));
  const std::vector<Expr> guards = spec.output_guards();
  const std::vector<Expr> all = concat(concat(shifted, spec.parameterization()), guards);
  JetSampler sampler(chart_for_outputs(spec, all), guards, options.seed, sys.parameters, options.sampling);

  for (int s = 0; s < options.samples; ++s) {
    const Binding b = sampler.next().binding(sys.parameters);
    try {
      const Eigen::VectorXd x = eval_rows(spec.f_x, b);
      const Eigen::VectorXd u = eval_rows(spec.f_u, b);
      const Eigen::VectorXd lhs = eval_rows(shifted, b);
      result.max_residual = std::max(result.max_residual, (lhs - sys.eval_f(x, u)).lpNorm<Eigen::Infinity>());
    } catch (const SingularEvaluationError& e) {
      result.max_residual = std::numeric_limits<double>::infinity();
      result.notes.push_back(std::string("singular evaluation: ") + e.what());
    }
    ++result.samples;
  }
  result.pass = result.max_residual <= options.tolerance;
  return result;
}

CheckResult verify_independence_ranks(const FlatSpec& spec, int alpha, int beta, const VerifyOptions& options) {
  CheckResult result = start_check("independence_ranks", options);
  const SystemModel& sys = spec.system;
  if (alpha > 0 && !sys.psi) throw PreconditionError("independence ranks with backward shifts require psi");
  const ShiftTable table = build_shift_table(spec, alpha, beta);
  std::vector<Expr> rows;
  for (int j = 0; j < table.components(); ++j)
    for (int i = -alpha; i <= beta; ++i) rows.push_back(table.at(j, i));
  std::vector<Expr> guards = system_guards(spec);
  for (const Expr& r : rows) append_unique(guards, singular_factors(r));

  const JetChart chart = system_chart_for(sys, concat(rows, guards));
  JetSampler sampler(chart, guards, options.seed, sys.parameters, options.sampling);
  const int required = (alpha + beta + 1) * spec.m();
  int min_rank = std::numeric_limits<int>::max();
  for (int s = 0; s < options.samples; ++s) {
    const JetPoint point = sampler.next();
    min_rank = std::min(min_rank, numeric_rank(jacobian_at(rows, chart.coords, point.binding(sys.parameters))));
    ++result.samples;
  }
  if (result.samples == 0) min_rank = 0;
  result.min_rank = min_rank;
  result.notes.push_back("alpha=" + std::to_string(alpha) + " beta=" + std::to_string(beta) +
                         " required rank=" + std::to_string(required) + " chart dim=" + std::to_string(chart.size()));
  result.pass = result.samples > 0 && min_rank == required;
  return result;
}

CheckResult verify_submersion_and_structure(const FlatSpec& spec, const VerifyOptions& options) {
  CheckResult result = start_check("submersion_and_structure", options);
  const SystemModel& sys = spec.system;
  const std::vector<Expr> F = spec.parameterization();
  const std::vector<int> r = spec.r();

  bool structure_ok = true;
  for (std::size_t i = 0; i < spec.f_x.size(); ++i)
    for (const VarRef& v : variables_of(spec.f_x[i])) {
      const int j = output_index(spec, v.name);
      if (j >= 0 && v.shift >= r[j]) {
        structure_ok = false;
        result.notes.push_back("F_x row " + std::to_string(i + 1) + " depends on top shift " + to_string(v));
      }
    }

  const std::vector<Expr> guards = spec.output_guards();
  const JetChart chart = chart_for_outputs(spec, concat(F, guards));
  JetSampler sampler(chart, guards, options.seed, sys.parameters, options.sampling);
  const int required = sys.n() + sys.m();
  int min_rank = std::numeric_limits<int>::max();
  for (int s = 0; s < options.samples; ++s) {
    const JetPoint point = sampler.next();
    min_rank = std::min(min_rank, numeric_rank(jacobian_at(F, chart.coords, point.binding(sys.parameters))));
    ++result.samples;
  }
  if (result.samples == 0) min_rank = 0;
  result.min_rank = min_rank;
  result.pass = structure_ok && result.samples > 0 && min_rank == required;
  return result;
}

FlatOutputClass classify_flat_output(const FlatSpec& spec) {
  for (const Expr& p : spec.phi)
    for (const VarRef& v : variables_of(p))
      if (is_ext_output(spec.system, v.name)) return FlatOutputClass::GeneralFlatForm;
  return FlatOutputClass::ForwardFlatForm;
}

std::string_view to_string(FlatOutputClass c) {
  return c == FlatOutputClass::ForwardFlatForm ? "forward_flat_form" : "general_flat_form";
}

FlatSpec normalize_to_forward(const FlatSpec& spec, std::span<const int> offsets) {
  if (static_cast<int>(offsets.size()) != spec.m()) throw PreconditionError("normalize_to_forward: need one offset per output");
  FlatSpec out = spec;
  for (int j = 0; j < spec.m(); ++j) out.phi[j] = shift_by(spec.phi[j], spec.system, offsets[j]);

  const bool forward = std::any_of(offsets.begin(), offsets.end(), [](int s) { return s > 0; });
  if (forward) {
    for (int j = 0; j < spec.m(); ++j)
      for (const VarRef& v : variables_of(out.phi[j]))
        if (is_ext_output(spec.system, v.name))
          throw PreconditionError("flat output component " + spec.outputs[j] + " still depends on " + to_string(v) +
                                  " after shifting by " + std::to_string(offsets[j]));
  }

  auto reindex = [&](const Expr& e) {
    return substitute(e, VarMapper([&](const VarRef& v) -> std::optional<Expr> {
                        const int j = output_index(spec, v.name);
                        if (j < 0 || offsets[j] == 0) return std::nullopt;
                        return Expr::variable(v.name, v.shift - offsets[j]);
                      }));
  };
  for (Expr& e : out.f_x) e = reindex(e);
  for (Expr& e : out.f_u) e = reindex(e);
  for (Expr& e : out.guards) e = reindex(e);
  return out;
}

bool VerificationReport::certified() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

VerificationReport certify(const FlatSpec& spec, const VerifyOptions& options) {
  VerificationReport report;
  const SystemModel& sys = spec.system;

  ValidationOptions vopt;
  vopt.seed = options.seed;
  vopt.radius = options.sampling.radius;
  const ValidationReport validation = validate_system(sys, vopt);
  CheckResult sv = start_check("system_validation", options);
  sv.pass = validation.pass();
  sv.samples = validation.samples;
  sv.max_residual = std::max(validation.equilibrium_defect, validation.inverse_residual.value_or(0.0));
  if (!validation.equilibrium_ok)
    sv.notes.push_back("equilibrium defect " + format_csv_number(validation.equilibrium_defect));
  int min_rank_slack = std::numeric_limits<int>::max();
  for (const RankCheck& rc : validation.ranks) {
    std::string note = rc.name + ": min rank " + std::to_string(rc.min_rank);
    if (rc.informational) note += rc.pass ? " (informational)" : " < " + std::to_string(rc.required) + " (informational)";
    else if (!rc.pass) note += " < " + std::to_string(rc.required) + " (FAIL)";
    sv.notes.push_back(note);
    if (!rc.informational) min_rank_slack = std::min(min_rank_slack, rc.min_rank);
  }
  if (!validation.ranks.empty()) sv.min_rank = min_rank_slack;
  if (validation.inverse_residual && !validation.inverse_ok)
    sv.notes.push_back("psi is not the inverse of (f, g): residual " + format_csv_number(*validation.inverse_residual));
  report.checks.push_back(std::move(sv));

  report.checks.push_back(verify_parameterization_identity(spec, options));
  report.checks.push_back(verify_system_compatibility(spec, options));
  const std::vector<int> q1 = spec.q1();
  const int alpha = sys.psi ? (q1.empty() ? 0 : *std::max_element(q1.begin(), q1.end())) + 1 : 0;
  report.checks.push_back(verify_independence_ranks(spec, alpha, spec.r_max() + 1, options));
  report.checks.push_back(verify_submersion_and_structure(spec, options));
  report.classification = std::string(to_string(classify_flat_output(spec)));
  return report;
}

}  // namespace flatdt
