// flatdt: command-line front end (check, plan, feedback, simulate).

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flatdt/errors.hpp"
#include "flatdt/feedback.hpp"
#include "flatdt/flatness.hpp"
#include "flatdt/model_file.hpp"
#include "flatdt/planner.hpp"
#include "flatdt/report_json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace flatdt;

namespace {

enum Exit { kOk = 0, kVerificationFailed = 1, kInvalidInput = 2, kNoConvergence = 3 };

struct CommonOptions {
  std::string model;
  std::uint64_t seed = 42;
  int samples = -1;
  double radius = 2.0;
  std::string output;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("model", o.model, "model file (.fdt)")->required();
  cmd->add_option("--seed", o.seed, "seed for every randomized procedure")->capture_default_str();
  cmd->add_option("--radius", o.radius, "half-width of the sampling box")->capture_default_str();
  cmd->add_option("-o,--output", o.output, "output file (default: stdout)");
}

SamplingOptions sampling(const CommonOptions& o) {
  SamplingOptions s;
  s.radius = o.radius;
  return s;
}

Eigen::VectorXd parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw PreconditionError("empty number in " + what);
    item = item.substr(b, e - b + 1);
    double v = 0.0;
    auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || end != item.data() + item.size())
      throw PreconditionError("'" + item + "' is not a number in " + what);
    values.push_back(v);
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<Eigen::VectorXd> parse_rows(const std::string& text, const std::string& what) {
  std::vector<Eigen::VectorXd> rows;
  std::stringstream in(text);
  std::string row;
  while (std::getline(in, row, ';')) rows.push_back(parse_numbers(row, what));
  return rows;
}

BoundaryPair parse_pair(const std::string& text, const SystemModel& sys, const std::string& what) {
  const std::vector<Eigen::VectorXd> rows = parse_rows(text, what);
  if (rows.size() != 2 || rows[0].size() != sys.n() || rows[1].size() != sys.m())
    throw PreconditionError(what + " must be \"x1,..,x" + std::to_string(sys.n()) + ";u1,..,u" + std::to_string(sys.m()) +
                            "\"");
  return {rows[0], rows[1]};
}

// Writes to the named file, or stdout when the name is empty.
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw PreconditionError("cannot write '" + path + "'");
  write(out);
}

void report_failures(const std::vector<CheckResult>& checks) {
  for (const CheckResult& c : checks)
    if (!c.pass) std::cerr << "FAIL " << c.check << '\n';
}

int run_check(const CommonOptions& o) {
  const Model model = load_model(o.model);
  VerifyOptions opt;
  opt.seed = o.seed;
  opt.sampling = sampling(o);
  if (o.samples > 0) opt.samples = o.samples;
  const VerificationReport report = certify(model.spec, opt);
  ordered_json j;
  j["model"] = model.spec.system.name;
  j["seed"] = o.seed;
  j["samples"] = opt.samples;
  const ordered_json body = to_json(report);
  for (const auto& [k, v] : body.items()) j[k] = v;
  emit(o.output, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  report_failures(report.checks);
  return report.certified() ? kOk : kVerificationFailed;
}

struct PlanArgs {
  std::string from;
  std::string to;
  int ki = 0;
  int kf = 0;
  std::string y_output;
};

int run_plan(const CommonOptions& o, const PlanArgs& a) {
  const Model model = load_model(o.model);
  const SystemModel& sys = model.spec.system;
  PlanningProblem problem;
  problem.k_i = a.ki;
  problem.k_f = a.kf;
  problem.initial = parse_pair(a.from, sys, "--from");
  problem.final = parse_pair(a.to, sys, "--to");
  PlanOptions opt;
  opt.seed = o.seed;
  opt.sampling = sampling(o);
  const OutputTrajectory y = plan_trajectory(model.spec, problem, opt);
  const Trajectory t = synthesize_xu(model.spec, y);
  const TrajectoryReport report = validate_trajectory(sys, t, problem);

  emit(o.output, [&](std::ostream& os) { write_trajectory_csv(os, sys, t); });
  std::string y_path = a.y_output;
  if (y_path.empty() && !o.output.empty()) {
    fs::path p(o.output);
    y_path = (p.parent_path() / (p.stem().string() + "_y" + p.extension().string())).string();
  }
  if (!y_path.empty()) emit(y_path, [&](std::ostream& os) { write_output_csv(os, model.spec, y); });

  ordered_json j;
  j["seed"] = o.seed;
  j["attempts"] = y.attempts;
  j["boundary_residual"] = report.boundary_residual;
  j["max_defect"] = report.max_defect;
  j["simulation_deviation"] = report.simulation_deviation;
  j["min_guard_margin"] = y.min_guard_margin;
  j["valid"] = report.pass;
  (o.output.empty() ? std::cerr : std::cout) << j.dump() << '\n';
  return report.pass ? kOk : kVerificationFailed;
}

struct FeedbackArgs {
  bool numeric = false;
  bool complete_at_sample = false;
  int horizon = 15;
  int targets = 10;
};

DynamicFeedback make_feedback(const Model& model, const CommonOptions& o, bool numeric, bool complete_at_sample) {
  CompletionOptions copt;
  copt.seed = o.seed;
  copt.sampling = sampling(o);
  copt.at_equilibrium = !complete_at_sample;
  const bool user = !model.f_z.empty();
  StateCompletion completion;
  if (user) {
    completion = user_completion(model.spec, model.compensator_states, model.f_z, copt);
  } else {
    try {
      completion = complete_state_map(model.spec, copt);
    } catch (const PreconditionError& e) {
      if (complete_at_sample) throw;
      throw PreconditionError(std::string(e.what()) + " (--complete-at-sample)");
    }
  }
  // phi_hat is written for the user's compensator states only.
  const auto phi_hat = (numeric || !user) ? std::nullopt : model.phi_hat;
  return build_feedback(model.spec, completion, phi_hat);
}

int run_feedback(const CommonOptions& o, const FeedbackArgs& a) {
  const Model model = load_model(o.model);
  const DynamicFeedback fb = make_feedback(model, o, a.numeric, a.complete_at_sample);
  BrunovskyOptions bopt;
  bopt.seed = o.seed;
  bopt.horizon = a.horizon;
  bopt.sampling = sampling(o);
  if (o.samples > 0) bopt.samples = o.samples;
  const std::vector<CheckResult> checks = {verify_brunovsky(fb, bopt), verify_deadbeat(fb, a.targets, bopt)};
  ordered_json j = to_json(fb);
  j["seed"] = o.seed;
  j["checks"] = ordered_json::array();
  bool pass = true;
  for (const CheckResult& c : checks) {
    j["checks"].push_back(to_json(c));
    pass = pass && c.pass;
  }
  emit(o.output, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  report_failures(checks);
  return pass ? kOk : kVerificationFailed;
}

struct SimulateArgs {
  bool closed_loop = false;
  bool numeric = false;
  bool complete_at_sample = false;
  std::string x0;
  std::string z0;
  std::string inputs;
  std::string v;
  int steps = 30;
};

int run_simulate(const CommonOptions& o, const SimulateArgs& a) {
  const Model model = load_model(o.model);
  const SystemModel& sys = model.spec.system;
  if (!a.closed_loop) {
    const Eigen::VectorXd x0 = a.x0.empty() ? sys.x0 : parse_numbers(a.x0, "--x0");
    if (x0.size() != sys.n()) throw PreconditionError("--x0 needs " + std::to_string(sys.n()) + " values");
    const std::vector<Eigen::VectorXd> u = parse_rows(a.inputs, "--inputs");
    for (const Eigen::VectorXd& row : u)
      if (row.size() != sys.m()) throw PreconditionError("every --inputs row needs " + std::to_string(sys.m()) + " values");
    const Trajectory t = simulate_forward(sys, x0, u);
    emit(o.output, [&](std::ostream& os) { write_trajectory_csv(os, sys, t); });
    return kOk;
  }

  const DynamicFeedback fb = make_feedback(model, o, a.numeric, a.complete_at_sample);
  const GuardedRun sampled = sample_guarded_run(fb, a.steps, o.seed, sampling(o));
  Eigen::VectorXd x0 = sampled.x0;
  Eigen::VectorXd z0 = sampled.z0;
  std::optional<Eigen::VectorXd> hint = sampled.chain0;
  if (!a.x0.empty() || !a.z0.empty()) {
    if (a.x0.empty() || a.z0.empty()) throw PreconditionError("--x0 and --z0 go together in closed loop");
    x0 = parse_numbers(a.x0, "--x0");
    z0 = parse_numbers(a.z0, "--z0");
    hint.reset();
  }
  const std::vector<Eigen::VectorXd> v = a.v.empty() ? sampled.v : parse_rows(a.v, "--v");
  const ClosedLoopTrajectory t = simulate_closed_loop(fb, x0, z0, v, hint, o.seed);
  emit(o.output, [&](std::ostream& os) { write_closed_loop_csv(os, fb, t); });
  std::cerr << "{\"seed\":" << o.seed << "}\n";
  return kOk;
}

int fail(int code, const std::string& message, ordered_json location = nullptr) {
  ordered_json j;
  j["code"] = code;
  j["message"] = message;
  j["location"] = std::move(location);
  std::cerr << j.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-time flatness toolkit"};
  app.require_subcommand(1);

  CommonOptions common;
  PlanArgs plan;
  FeedbackArgs feedback;
  SimulateArgs simulate;

  CLI::App* check = app.add_subcommand("check", "verify the flatness certificate of a model");
  add_common(check, common);
  check->add_option("--samples", common.samples, "sample points per check (default 200)");

  CLI::App* plan_cmd = app.add_subcommand("plan", "plan a point-to-point transfer through the flat output");
  add_common(plan_cmd, common);
  plan_cmd->add_option("--from", plan.from, "initial pair \"x1,..,xn;u1,..,um\"")->required();
  plan_cmd->add_option("--to", plan.to, "final pair \"x1,..,xn;u1,..,um\"")->required();
  plan_cmd->add_option("--ki", plan.ki, "initial step")->required();
  plan_cmd->add_option("--kf", plan.kf, "final step")->required();
  plan_cmd->add_option("--y-output", plan.y_output, "flat output CSV (default: <output>_y.csv)");

  CLI::App* fb_cmd = app.add_subcommand("feedback", "build the linearizing feedback and verify the closed loop");
  add_common(fb_cmd, common);
  fb_cmd->add_option("--samples", common.samples, "closed-loop runs (default 20)");
  fb_cmd->add_option("--horizon", feedback.horizon, "steps per run")->capture_default_str();
  fb_cmd->add_option("--targets", feedback.targets, "dead-beat targets")->capture_default_str();
  fb_cmd->add_flag("--numeric", feedback.numeric, "invert the state map numerically even if phi_hat is given");
  fb_cmd->add_flag("--complete-at-sample", feedback.complete_at_sample,
                   "auto-complete the state map at a sampled jet instead of the equilibrium");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "open- or closed-loop simulation");
  add_common(sim_cmd, common);
  sim_cmd->add_flag("--closed-loop", simulate.closed_loop, "simulate the feedback loop");
  sim_cmd->add_option("--x0", simulate.x0, "initial state \"x1,..,xn\"");
  sim_cmd->add_option("--z0", simulate.z0, "initial compensator state (closed loop)");
  sim_cmd->add_option("--inputs", simulate.inputs, "open-loop inputs \"u;u;...\"");
  sim_cmd->add_option("--v", simulate.v, "closed-loop new inputs \"v;v;...\" (default: random guarded)");
  sim_cmd->add_option("--steps", simulate.steps, "closed-loop steps with random v")->capture_default_str();
  sim_cmd->add_flag("--numeric", simulate.numeric, "numeric state-map inversion");
  sim_cmd->add_flag("--complete-at-sample", simulate.complete_at_sample, "auto-complete at a sampled jet");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kInvalidInput, e.what());
  }

  try {
    if (check->parsed()) return run_check(common);
    if (plan_cmd->parsed()) return run_plan(common, plan);
    if (fb_cmd->parsed()) return run_feedback(common, feedback);
    return run_simulate(common, simulate);
  } catch (const ParseError& e) {
    return fail(kInvalidInput, e.bare_message(), {{"file", common.model}, {"line", e.line()}, {"column", e.column()}});
  } catch (const ModelError& e) {
    ordered_json location = {{"file", common.model}};
    if (e.line() > 0) location["line"] = e.line();
    return fail(kInvalidInput, e.what(), location);
  } catch (const PreconditionError& e) {
    return fail(kInvalidInput, e.what());
  } catch (const UnboundSymbolError& e) {
    return fail(kInvalidInput, e.what());
  } catch (const Error& e) {
    // convergence, guard and singular-evaluation failures
    return fail(kNoConvergence, e.what());
  } catch (const std::exception& e) {
    return fail(kInvalidInput, e.what());
  }
}
