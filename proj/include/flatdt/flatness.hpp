#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flatdt/expr.hpp"
#include "flatdt/jet.hpp"
#include "flatdt/system.hpp"

namespace flatdt {

/// A flatness certificate: candidate flat output phi (over system jet
/// coordinates) and the parameterisation F = (F_x, F_u) over the output jet.
struct FlatSpec {
  SystemModel system;
  std::vector<std::string> outputs;  // y^1..y^m
  std::vector<Expr> phi;             // m rows
  std::vector<Expr> f_x;             // n rows
  std::vector<Expr> f_u;             // m rows
  std::vector<Expr> guards;          // declared denominators, over the output jet

  int m() const { return static_cast<int>(outputs.size()); }

  /// F_x followed by F_u.
  std::vector<Expr> parameterization() const;

  /// r_j: highest shift of y^j appearing in F (0 if absent).
  std::vector<int> r() const;
  /// Lowest shift of y^j appearing in F, capped at 0.
  std::vector<int> lo() const;
  int r_max() const;
  /// Backward depth of zeta in each phi^j.
  std::vector<int> q1() const;
  /// Highest input shift in each phi^j.
  std::vector<int> q2() const;

  /// Value of each y^j along the constant equilibrium trajectory.
  std::vector<double> output_equilibrium() const;

  /// User guards plus the singular factors of F and of delta_y(F_x).
  std::vector<Expr> output_guards() const;
};

/// delta^i(phi^j) for i in [-alpha, beta].
class ShiftTable {
 public:
  ShiftTable(int alpha, int beta, std::vector<std::vector<Expr>> entries)
      : alpha_(alpha), beta_(beta), entries_(std::move(entries)) {}

  int alpha() const { return alpha_; }
  int beta() const { return beta_; }
  int components() const { return static_cast<int>(entries_.size()); }
  const Expr& at(int component, int shift) const;

 private:
  int alpha_;
  int beta_;
  std::vector<std::vector<Expr>> entries_;
};

ShiftTable build_shift_table(const FlatSpec& spec, int alpha, int beta);

struct CheckResult {
  std::string check;
  bool pass = false;
  double max_residual = 0.0;
  std::optional<int> min_rank;
  int samples = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> notes;
};

struct VerificationReport {
  std::vector<CheckResult> checks;
  std::string classification;
  bool certified() const;
};

struct VerifyOptions {
  int samples = 200;
  std::uint64_t seed = 42;
  double tolerance = 1e-9;
  SamplingOptions sampling;
};

/// Guards of the parameterisation pulled back to system jet coordinates.
std::vector<Expr> system_guards(const FlatSpec& spec);

/// x - F_x(phi, ..., delta^r phi) and u - F_u(...) at guarded system jet points.
CheckResult verify_parameterization_identity(const FlatSpec& spec, const VerifyOptions& options = {});

/// delta_y(F_x) - f(F_x, F_u) at guarded output jet points.
CheckResult verify_system_compatibility(const FlatSpec& spec, const VerifyOptions& options = {});

/// Rank of the stacked Jacobian of delta^i(phi), i in [-alpha, beta], must be
/// (alpha + beta + 1) m at every sample.
CheckResult verify_independence_ranks(const FlatSpec& spec, int alpha, int beta, const VerifyOptions& options = {});

/// F must be a submersion (rank n + m) and F_x must not use y^j[r_j].
CheckResult verify_submersion_and_structure(const FlatSpec& spec, const VerifyOptions& options = {});

enum class FlatOutputClass { ForwardFlatForm, GeneralFlatForm };
FlatOutputClass classify_flat_output(const FlatSpec& spec);
std::string_view to_string(FlatOutputClass c);

/// phi'^j = delta^{s_j}(phi^j) with F re-indexed y^j[k] -> y^j[k - s_j].
/// When any offset is positive the result must be free of zeta; otherwise a
/// PreconditionError names the offending component.
FlatSpec normalize_to_forward(const FlatSpec& spec, std::span<const int> offsets);

/// System validation followed by the four certificate checks. Independence
/// depths default to alpha = max q1 + 1 (0 without psi), beta = r + 1.
VerificationReport certify(const FlatSpec& spec, const VerifyOptions& options = {});

}  // namespace flatdt
