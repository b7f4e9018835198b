#include "flatdt/expr.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

#include "flatdt/errors.hpp"

namespace flatdt {

struct Expr::Node {
  Op op = Op::Constant;
  double value = 0.0;
  VarRef var;
  std::string parameter;
  int exponent = 0;
  Func func = Func::Sin;
  std::vector<Expr> children;
};

namespace {

constexpr std::array<std::pair<Func, std::string_view>, 5> kFunctions{{
    {Func::Sin, "sin"},
    {Func::Cos, "cos"},
    {Func::Exp, "exp"},
    {Func::Log, "log"},
    {Func::Sqrt, "sqrt"},
}};

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

}  // namespace

std::string to_string(const VarRef& v) {
  if (v.shift == 0) return v.name;
  return v.name + "[" + std::to_string(v.shift) + "]";
}

std::string_view function_name(Func f) {
  for (const auto& [fn, name] : kFunctions)
    if (fn == f) return name;
  return "?";
}

std::optional<Func> function_from_name(std::string_view name) {
  for (const auto& [fn, fname] : kFunctions)
    if (fname == name) return fn;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// construction

Expr::Expr() : Expr(constant(0.0)) {}

Expr Expr::constant(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::Constant;
  n->value = value;
  return Expr(std::move(n));
}

Expr Expr::variable(VarRef ref) {
  auto n = std::make_shared<Node>();
  n->op = Op::Variable;
  n->var = std::move(ref);
  return Expr(std::move(n));
}

Expr Expr::variable(std::string name, int shift) { return variable(VarRef{std::move(name), shift}); }

Expr Expr::parameter(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Parameter;
  n->parameter = std::move(name);
  return Expr(std::move(n));
}

Expr Expr::negate(Expr operand) {
  if (operand.is_constant()) return constant(-operand.value());
  auto n = std::make_shared<Node>();
  n->op = Op::Negate;
  n->children = {std::move(operand)};
  return Expr(std::move(n));
}

namespace {
std::shared_ptr<Expr::Node> binary(Op op, Expr a, Expr b) {
  auto n = std::make_shared<Expr::Node>();
  n->op = op;
  n->children = {std::move(a), std::move(b)};
  return n;
}
}  // namespace

Expr Expr::add(Expr lhs, Expr rhs) { return Expr(binary(Op::Add, std::move(lhs), std::move(rhs))); }
Expr Expr::sub(Expr lhs, Expr rhs) { return Expr(binary(Op::Sub, std::move(lhs), std::move(rhs))); }
Expr Expr::mul(Expr lhs, Expr rhs) { return Expr(binary(Op::Mul, std::move(lhs), std::move(rhs))); }
Expr Expr::div(Expr lhs, Expr rhs) { return Expr(binary(Op::Div, std::move(lhs), std::move(rhs))); }

Expr Expr::pow(Expr base, int exponent) {
  auto n = std::make_shared<Node>();
  n->op = Op::Pow;
  n->exponent = exponent;
  n->children = {std::move(base)};
  return Expr(std::move(n));
}

Expr Expr::call(Func f, Expr argument) {
  auto n = std::make_shared<Node>();
  n->op = Op::Call;
  n->func = f;
  n->children = {std::move(argument)};
  return Expr(std::move(n));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
const VarRef& Expr::var() const { return node_->var; }
const std::string& Expr::parameter_name() const { return node_->parameter; }
int Expr::exponent() const { return node_->exponent; }
Func Expr::func() const { return node_->func; }
std::span<const Expr> Expr::children() const { return node_->children; }

Expr operator+(const Expr& a, const Expr& b) { return Expr::add(a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::sub(a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::mul(a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::div(a, b); }
Expr operator-(const Expr& a) { return Expr::negate(a); }

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.id() == b.id()) return true;
  if (a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::Constant:
      return a.value() == b.value();
    case Op::Variable:
      return a.var() == b.var();
    case Op::Parameter:
      return a.parameter_name() == b.parameter_name();
    case Op::Pow:
      if (a.exponent() != b.exponent()) return false;
      break;
    case Op::Call:
      if (a.func() != b.func()) return false;
      break;
    default:
      break;
  }
  auto ca = a.children();
  auto cb = b.children();
  if (ca.size() != cb.size()) return false;
  for (std::size_t i = 0; i < ca.size(); ++i)
    if (!structurally_equal(ca[i], cb[i])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// printing

namespace {

int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Negate:
      return 3;
    case Op::Constant:
      return std::signbit(e.value()) ? 3 : 5;
    case Op::Pow:
      return 4;
    default:
      return 5;
  }
}

void print(std::ostream& os, const Expr& e, int min_prec) {
  const bool parens = precedence(e) < min_prec;
  if (parens) os << '(';
  switch (e.op()) {
    case Op::Constant:
      if (std::signbit(e.value()))
        os << '-' << format_number(-e.value());
      else
        os << format_number(e.value());
      break;
    case Op::Variable:
      os << to_string(e.var());
      break;
    case Op::Parameter:
      os << e.parameter_name();
      break;
    case Op::Negate:
      os << '-';
      print(os, e.child(0), 3);
      break;
    case Op::Add:
    case Op::Sub:
      print(os, e.child(0), 1);
      os << (e.op() == Op::Add ? " + " : " - ");
      print(os, e.child(1), 2);
      break;
    case Op::Mul:
    case Op::Div:
      print(os, e.child(0), 2);
      os << (e.op() == Op::Mul ? '*' : '/');
      print(os, e.child(1), 3);
      break;
    case Op::Pow:
      print(os, e.child(0), 5);
      os << '^' << e.exponent();
      break;
    case Op::Call:
      os << function_name(e.func()) << '(';
      print(os, e.child(0), 0);
      os << ')';
      break;
  }
  if (parens) os << ')';
}

}  // namespace

std::string to_string(const Expr& e) {
  std::ostringstream os;
  print(os, e, 0);
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Expr& e) {
  print(os, e, 0);
  return os;
}

// ---------------------------------------------------------------------------
// binding and evaluation

Binding& Binding::set(const VarRef& v, double value) {
  vars_[v] = value;
  return *this;
}

Binding& Binding::set_parameter(const std::string& name, double value) {
  parameters_[name] = value;
  return *this;
}

std::optional<double> Binding::lookup(const VarRef& v) const {
  auto it = vars_.find(v);
  if (it == vars_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> Binding::parameter(const std::string& name) const {
  auto it = parameters_.find(name);
  if (it == parameters_.end()) return std::nullopt;
  return it->second;
}

namespace {

[[noreturn]] void singular(const char* what, const Expr& e) { throw SingularEvaluationError(what, to_string(e)); }

double checked_pow(double base, int k, const Expr& e) {
  if (k < 0 && base == 0.0) singular("division by zero", e);
  return std::pow(base, k);
}

double apply(Func f, double x, const Expr& e) {
  switch (f) {
    case Func::Sin:
      return std::sin(x);
    case Func::Cos:
      return std::cos(x);
    case Func::Exp:
      return std::exp(x);
    case Func::Log:
      if (!(x > 0.0)) singular("log of non-positive value", e);
      return std::log(x);
    case Func::Sqrt:
      if (x < 0.0) singular("sqrt of negative value", e);
      return std::sqrt(x);
  }
  return 0.0;
}

class Evaluator {
 public:
  explicit Evaluator(const Binding& b) : b_(b) {}

  double operator()(const Expr& e) {
    switch (e.op()) {
      case Op::Constant:
        return e.value();
      case Op::Variable: {
        auto v = b_.lookup(e.var());
        if (!v) throw UnboundSymbolError(to_string(e.var()));
        return *v;
      }
      case Op::Parameter: {
        auto v = b_.parameter(e.parameter_name());
        if (!v) throw UnboundSymbolError(e.parameter_name());
        return *v;
      }
      default:
        break;
    }
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    double r = 0.0;
    switch (e.op()) {
      case Op::Negate:
        r = -(*this)(e.child(0));
        break;
      case Op::Add:
        r = (*this)(e.child(0)) + (*this)(e.child(1));
        break;
      case Op::Sub:
        r = (*this)(e.child(0)) - (*this)(e.child(1));
        break;
      case Op::Mul:
        r = (*this)(e.child(0)) * (*this)(e.child(1));
        break;
      case Op::Div: {
        const double num = (*this)(e.child(0));
        const double den = (*this)(e.child(1));
        if (den == 0.0) singular("division by zero", e);
        r = num / den;
        break;
      }
      case Op::Pow:
        r = checked_pow((*this)(e.child(0)), e.exponent(), e);
        break;
      case Op::Call:
        r = apply(e.func(), (*this)(e.child(0)), e);
        break;
      default:
        break;
    }
    memo_.emplace(e.id(), r);
    return r;
  }

 private:
  const Binding& b_;
  std::unordered_map<const Expr::Node*, double> memo_;
};

struct Dual {
  double v = 0.0;
  Eigen::VectorXd d;
};

class DualEvaluator {
 public:
  DualEvaluator(const Binding& b, std::span<const VarRef> vars) : b_(b), n_(static_cast<Eigen::Index>(vars.size())) {
    for (std::size_t j = 0; j < vars.size(); ++j) index_.emplace(vars[j], static_cast<Eigen::Index>(j));
  }

  const Dual& operator()(const Expr& e) {
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    Dual r;
    r.d = Eigen::VectorXd::Zero(n_);
    switch (e.op()) {
      case Op::Constant:
        r.v = e.value();
        break;
      case Op::Variable: {
        auto v = b_.lookup(e.var());
        if (!v) throw UnboundSymbolError(to_string(e.var()));
        r.v = *v;
        if (auto it = index_.find(e.var()); it != index_.end()) r.d[it->second] = 1.0;
        break;
      }
      case Op::Parameter: {
        auto v = b_.parameter(e.parameter_name());
        if (!v) throw UnboundSymbolError(e.parameter_name());
        r.v = *v;
        break;
      }
      case Op::Negate: {
        const Dual& a = (*this)(e.child(0));
        r.v = -a.v;
        r.d = -a.d;
        break;
      }
      case Op::Add:
      case Op::Sub: {
        const Dual a = (*this)(e.child(0));
        const Dual& b = (*this)(e.child(1));
        const double s = e.op() == Op::Add ? 1.0 : -1.0;
        r.v = a.v + s * b.v;
        r.d = a.d + s * b.d;
        break;
      }
      case Op::Mul: {
        const Dual a = (*this)(e.child(0));
        const Dual& b = (*this)(e.child(1));
        r.v = a.v * b.v;
        r.d = a.d * b.v + b.d * a.v;
        break;
      }
      case Op::Div: {
        const Dual a = (*this)(e.child(0));
        const Dual& b = (*this)(e.child(1));
        if (b.v == 0.0) singular("division by zero", e);
        r.v = a.v / b.v;
        r.d = (a.d - r.v * b.d) / b.v;
        break;
      }
      case Op::Pow: {
        const Dual& a = (*this)(e.child(0));
        const int k = e.exponent();
        r.v = checked_pow(a.v, k, e);
        r.d = k == 0 ? Eigen::VectorXd::Zero(n_) : Eigen::VectorXd(k * checked_pow(a.v, k - 1, e) * a.d);
        break;
      }
      case Op::Call: {
        const Dual& a = (*this)(e.child(0));
        r.v = apply(e.func(), a.v, e);
        double slope = 0.0;
        switch (e.func()) {
          case Func::Sin:
            slope = std::cos(a.v);
            break;
          case Func::Cos:
            slope = -std::sin(a.v);
            break;
          case Func::Exp:
            slope = r.v;
            break;
          case Func::Log:
            slope = 1.0 / a.v;
            break;
          case Func::Sqrt:
            if (r.v == 0.0) singular("sqrt not differentiable at zero", e);
            slope = 0.5 / r.v;
            break;
        }
        r.d = slope * a.d;
        break;
      }
    }
    return memo_.emplace(e.id(), std::move(r)).first->second;
  }

 private:
  const Binding& b_;
  Eigen::Index n_;
  std::unordered_map<VarRef, Eigen::Index, VarRefHash> index_;
  std::unordered_map<const Expr::Node*, Dual> memo_;
};

}  // namespace

double eval_expr(const Expr& e, const Binding& b) { return Evaluator(b)(e); }

Eigen::MatrixXd jacobian_at(std::span<const Expr> exprs, std::span<const VarRef> vars, const Binding& b) {
  DualEvaluator eval(b, vars);
  Eigen::MatrixXd J(static_cast<Eigen::Index>(exprs.size()), static_cast<Eigen::Index>(vars.size()));
  for (std::size_t i = 0; i < exprs.size(); ++i) J.row(static_cast<Eigen::Index>(i)) = eval(exprs[i]).d.transpose();
  return J;
}

// ---------------------------------------------------------------------------
// structural queries

namespace {

template <typename Visit>
void walk(const Expr& e, Visit&& visit, std::unordered_map<const Expr::Node*, bool>& seen) {
  if (!seen.emplace(e.id(), true).second) return;
  visit(e);
  for (const Expr& c : e.children()) walk(c, visit, seen);
}

}  // namespace

std::set<VarRef> variables_of(const Expr& e) {
  std::set<VarRef> out;
  std::unordered_map<const Expr::Node*, bool> seen;
  walk(
      e,
      [&](const Expr& n) {
        if (n.op() == Op::Variable) out.insert(n.var());
      },
      seen);
  return out;
}

std::set<VarRef> variables_of(std::span<const Expr> es) {
  std::set<VarRef> out;
  for (const Expr& e : es) out.merge(variables_of(e));
  return out;
}

std::set<std::string> parameters_of(const Expr& e) {
  std::set<std::string> out;
  std::unordered_map<const Expr::Node*, bool> seen;
  walk(
      e,
      [&](const Expr& n) {
        if (n.op() == Op::Parameter) out.insert(n.parameter_name());
      },
      seen);
  return out;
}

std::vector<Expr> singular_factors(const Expr& e) {
  std::vector<Expr> out;
  std::unordered_map<const Expr::Node*, bool> seen;
  walk(
      e,
      [&](const Expr& n) {
        const Expr* factor = nullptr;
        if (n.op() == Op::Div) factor = &n.child(1);
        if (n.op() == Op::Pow && n.exponent() < 0) factor = &n.child(0);
        if (n.op() == Op::Call && (n.func() == Func::Log || n.func() == Func::Sqrt)) factor = &n.child(0);
        if (factor == nullptr || factor->is_constant()) return;
        for (const Expr& known : out)
          if (structurally_equal(known, *factor)) return;
        out.push_back(*factor);
      },
      seen);
  return out;
}

}  // namespace flatdt
