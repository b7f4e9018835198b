#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flatdt/flatness.hpp"

namespace flatdt {

/// Chain coordinates y^j[k], k < r_j, component-major. These are the
/// coordinates of the Brunovsky state; F_xz maps them to (x, z).
std::vector<VarRef> chain_coordinates(const FlatSpec& spec);
/// y^j[r_j], one per component: the positions taken by the new inputs v.
std::vector<VarRef> chain_tops(const FlatSpec& spec);

/// Compensator state map z = F_z(y, ..., y[R-1]).
struct StateCompletion {
  std::vector<std::string> names;
  std::vector<Expr> f_z;
  /// Coordinates picked by the automatic strategy (empty for user maps).
  std::vector<VarRef> selected;
};

struct CompletionOptions {
  /// Complete at the equilibrium output jet; otherwise at a guarded sample.
  bool at_equilibrium = true;
  std::uint64_t seed = 42;
  int samples = 20;  // points at which a user map's rank is confirmed
  SamplingOptions sampling;
};

/// Greedy completion by coordinate projections: scans y^j[k] (k < r_j, by j
/// then k) and keeps those that raise the rank of [dF_x; dF_z] until it
/// reaches sum r_j. Compensator states are named z1, z2, ...
StateCompletion complete_state_map(const FlatSpec& spec, const CompletionOptions& options = {});

/// Checks a user-supplied F_z: p = sum r_j - n rows over chain coordinates
/// only, and a square full-rank [dF_x; dF_z] at guarded sample points.
StateCompletion user_completion(const FlatSpec& spec, std::vector<std::string> names, std::vector<Expr> f_z,
                                const CompletionOptions& options = {});

/// Compensator z+ = alpha(x, z, v), u = beta(x, z, v).
struct DynamicFeedback {
  FlatSpec spec;
  StateCompletion completion;
  std::vector<std::string> new_inputs;  // v1..vm
  bool symbolic = false;
  /// Closed forms over (x, z, v); empty in numeric mode.
  std::vector<Expr> alpha;
  std::vector<Expr> beta;
  /// delta_y(F_z) over the full jet (chain coordinates and tops).
  std::vector<Expr> shifted_f_z;
  /// Closed-form inverse of F_xz when known (output coordinate -> expr in x, z).
  std::optional<std::map<VarRef, Expr>> phi_hat;

  int p() const { return static_cast<int>(completion.names.size()); }
};

/// Symbolic when phi_hat is given (alpha = delta_y(F_z) o phi_hat,
/// beta = F_u o phi_hat with y^j[r_j] -> v^j); numeric otherwise.
DynamicFeedback build_feedback(const FlatSpec& spec, const StateCompletion& completion,
                               const std::optional<std::map<VarRef, Expr>>& phi_hat = std::nullopt);

/// F_xz at a chain point (values ordered as chain_coordinates).
Eigen::VectorXd state_map(const DynamicFeedback& fb, const Eigen::VectorXd& chain);

/// Numeric inverse of F_xz by damped Newton from `guess`. Throws
/// ConvergenceError when the residual stays above 1e-10.
Eigen::VectorXd invert_state_map(const DynamicFeedback& fb, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& guess);

struct FeedbackOutput {
  Eigen::VectorXd z_next;
  Eigen::VectorXd u;
  /// Output jet behind (x, z, v): chain coordinates followed by v.
  Eigen::VectorXd jet;
};

/// Evaluates the feedback. The numeric path keeps a warm start (the last
/// jet shifted by one step), so one controller serves one run.
class FeedbackController {
 public:
  explicit FeedbackController(const DynamicFeedback& fb, std::uint64_t seed = 42);

  /// Hint for the next numeric inversion (chain coordinates).
  void set_hint(Eigen::VectorXd chain) { hint_ = std::move(chain); }
  FeedbackOutput evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& v);

 private:
  Eigen::VectorXd recover_chain(const Eigen::VectorXd& x, const Eigen::VectorXd& z);

  const DynamicFeedback& fb_;
  std::uint64_t seed_;
  std::optional<Eigen::VectorXd> hint_;
};

struct ClosedLoopTrajectory {
  int k_start = 0;
  std::vector<Eigen::VectorXd> x;  // |v| + 1 entries
  std::vector<Eigen::VectorXd> z;  // |v| + 1 entries
  std::vector<Eigen::VectorXd> v;
  std::vector<Eigen::VectorXd> u;
  std::vector<Eigen::VectorXd> jets;  // jet behind each step
};

/// x+ = f(x, beta(x, z, v)), z+ = alpha(x, z, v). Throws ConvergenceError
/// naming the step and the last good jet when the inversion fails.
ClosedLoopTrajectory simulate_closed_loop(const DynamicFeedback& fb, const Eigen::VectorXd& x0, const Eigen::VectorXd& z0,
                                          const std::vector<Eigen::VectorXd>& v_seq,
                                          std::optional<Eigen::VectorXd> chain_hint = std::nullopt,
                                          std::uint64_t seed = 42);

/// Transformed equilibrium (x0, z0, v0) of the closed loop.
struct TransformedEquilibrium {
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  Eigen::VectorXd v;
};
TransformedEquilibrium transformed_equilibrium(const DynamicFeedback& fb);

/// A closed-loop experiment: start (x0, z0) = F_xz(chain0) for a random
/// guarded jet and a random v sequence keeping every window guarded.
struct GuardedRun {
  Eigen::VectorXd chain0;
  Eigen::VectorXd x0;
  Eigen::VectorXd z0;
  std::vector<Eigen::VectorXd> v;
};
GuardedRun sample_guarded_run(const DynamicFeedback& fb, int steps, std::uint64_t seed,
                              const SamplingOptions& sampling = {});

struct BrunovskyOptions {
  int samples = 20;
  int horizon = 15;
  std::uint64_t seed = 42;
  double tolerance = 1e-8;
  SamplingOptions sampling;
};

/// Closed-loop runs from F_xz(random guarded jets) with random guarded v:
/// at every step the jet recovered by an independent inversion must equal
/// the previous one shifted along each chain with v^j on top, and u must
/// equal F_u at the jet.
CheckResult verify_brunovsky(const DynamicFeedback& fb, const BrunovskyOptions& options = {});

/// Dead-beat transfer: for random targets, the chain state reaches the target
/// after max(R) steps when the last r_j inputs of chain j are the target.
CheckResult verify_deadbeat(const DynamicFeedback& fb, int targets = 10, const BrunovskyOptions& options = {});

/// Chain lengths r_j realised by the feedback.
std::vector<int> chain_lengths(const DynamicFeedback& fb);

void write_closed_loop_csv(std::ostream& os, const DynamicFeedback& fb, const ClosedLoopTrajectory& t);

}  // namespace flatdt
