#pragma once

#include <compare>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace flatdt {

/// A shift-indexed coordinate such as `x1`, `zeta1[-1]` or `y2[3]`.
struct VarRef {
  std::string name;
  int shift = 0;

  auto operator<=>(const VarRef&) const = default;
  bool operator==(const VarRef&) const = default;
};

struct VarRefHash {
  std::size_t operator()(const VarRef& v) const noexcept {
    return std::hash<std::string>{}(v.name) * 31u + std::hash<int>{}(v.shift);
  }
};

std::string to_string(const VarRef& v);

enum class Op { Constant, Variable, Parameter, Negate, Add, Sub, Mul, Div, Pow, Call };
enum class Func { Sin, Cos, Exp, Log, Sqrt };

std::string_view function_name(Func f);
std::optional<Func> function_from_name(std::string_view name);

/// Immutable expression tree. Copies share structure.
///
/// Construction through the static builders performs no simplification
/// except that negating a literal yields a negative literal, so the tree
/// you build is the tree you print. Use fold() for constant folding.
class Expr {
 public:
  struct Node;

  Expr();  // the constant 0

  static Expr constant(double value);
  static Expr variable(VarRef ref);
  static Expr variable(std::string name, int shift = 0);
  static Expr parameter(std::string name);
  static Expr negate(Expr operand);
  static Expr add(Expr lhs, Expr rhs);
  static Expr sub(Expr lhs, Expr rhs);
  static Expr mul(Expr lhs, Expr rhs);
  static Expr div(Expr lhs, Expr rhs);
  static Expr pow(Expr base, int exponent);
  static Expr call(Func f, Expr argument);

  Op op() const;
  double value() const;
  const VarRef& var() const;
  const std::string& parameter_name() const;
  int exponent() const;
  Func func() const;
  std::span<const Expr> children() const;
  const Expr& child(std::size_t i) const { return children()[i]; }

  bool is_constant() const { return op() == Op::Constant; }
  bool is_constant(double v) const { return is_constant() && value() == v; }

  /// Node address; stable identity for memoisation over shared subtrees.
  const Node* id() const { return node_.get(); }

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

bool structurally_equal(const Expr& a, const Expr& b);

/// Prints in the DSL grammar; parse_expr(to_string(e)) rebuilds the same tree.
std::string to_string(const Expr& e);
std::ostream& operator<<(std::ostream& os, const Expr& e);

struct ParseOptions {
  /// Identifiers that denote parameters rather than variables.
  std::set<std::string, std::less<>> parameters;
};

Expr parse_expr(std::string_view text, const ParseOptions& options = {});

/// Numeric values for variables and parameters.
class Binding {
 public:
  Binding& set(const VarRef& v, double value);
  Binding& set(const std::string& name, int shift, double value) { return set(VarRef{name, shift}, value); }
  Binding& set_parameter(const std::string& name, double value);

  std::optional<double> lookup(const VarRef& v) const;
  std::optional<double> parameter(const std::string& name) const;
  const std::map<std::string, double>& parameters() const { return parameters_; }

 private:
  std::unordered_map<VarRef, double, VarRefHash> vars_;
  std::map<std::string, double> parameters_;
};

double eval_expr(const Expr& e, const Binding& b);

using Rules = std::map<VarRef, Expr>;
using VarMapper = std::function<std::optional<Expr>(const VarRef&)>;

/// Simultaneous substitution; variables without a rule stay. The result is
/// folded, except that `e` itself is returned when no rule fired.
Expr substitute(const Expr& e, const Rules& rules);
/// Same, with the rule given as a function (nullopt = keep the variable).
Expr substitute(const Expr& e, const VarMapper& mapper);

/// Constant folding: numeric subtrees, neutral elements, and cancellation of
/// syntactically identical terms of opposite sign within one sum.
/// Never changes the value of the expression wherever it is defined.
Expr fold(const Expr& e);

/// Jacobian d exprs_i / d vars_j by forward-mode dual numbers.
Eigen::MatrixXd jacobian_at(std::span<const Expr> exprs, std::span<const VarRef> vars, const Binding& b);

std::set<VarRef> variables_of(const Expr& e);
std::set<VarRef> variables_of(std::span<const Expr> es);
std::set<std::string> parameters_of(const Expr& e);

/// Subexpressions that must stay away from zero for `e` to evaluate:
/// divisors, bases of negative powers, arguments of log and sqrt.
std::vector<Expr> singular_factors(const Expr& e);

/// True when the two expressions denote the same rational function of their
/// symbols (transcendental calls are compared as opaque atoms). Decided by
/// exact polynomial cross-multiplication, not by sampling.
bool symbolically_equal(const Expr& a, const Expr& b);

}  // namespace flatdt
