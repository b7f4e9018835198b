#include <cmath>
#include <unordered_map>

#include "flatdt/expr.hpp"

namespace flatdt {

namespace {

// Evaluates without any risk of a domain error.
bool is_total(const Expr& e) {
  switch (e.op()) {
    case Op::Div:
      return false;
    case Op::Pow:
      if (e.exponent() < 0) return false;
      break;
    case Op::Call:
      if (e.func() == Func::Log || e.func() == Func::Sqrt) return false;
      break;
    default:
      break;
  }
  for (const Expr& c : e.children())
    if (!is_total(c)) return false;
  return true;
}

struct Term {
  bool negative;
  Expr expr;
};

void collect_terms(const Expr& e, bool negative, std::vector<Term>& out) {
  switch (e.op()) {
    case Op::Add:
      collect_terms(e.child(0), negative, out);
      collect_terms(e.child(1), negative, out);
      return;
    case Op::Sub:
      collect_terms(e.child(0), negative, out);
      collect_terms(e.child(1), !negative, out);
      return;
    case Op::Negate:
      collect_terms(e.child(0), !negative, out);
      return;
    default:
      out.push_back({negative, e});
  }
}

class Folder {
 public:
  Expr operator()(const Expr& e) {
    if (e.children().empty()) return e;
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    Expr r = fold_node(e);
    memo_.emplace(e.id(), r);
    return r;
  }

 private:
  Expr fold_node(const Expr& e) {
    std::vector<Expr> kids;
    kids.reserve(e.children().size());
    bool changed = false;
    for (const Expr& c : e.children()) {
      kids.push_back((*this)(c));
      changed = changed || kids.back().id() != c.id();
    }
    auto rebuilt = [&]() -> Expr {
      if (!changed) return e;
      switch (e.op()) {
        case Op::Negate:
          return Expr::negate(kids[0]);
        case Op::Add:
          return Expr::add(kids[0], kids[1]);
        case Op::Sub:
          return Expr::sub(kids[0], kids[1]);
        case Op::Mul:
          return Expr::mul(kids[0], kids[1]);
        case Op::Div:
          return Expr::div(kids[0], kids[1]);
        case Op::Pow:
          return Expr::pow(kids[0], e.exponent());
        case Op::Call:
          return Expr::call(e.func(), kids[0]);
        default:
          return e;
      }
    };

    switch (e.op()) {
      case Op::Negate:
        if (kids[0].op() == Op::Negate) return kids[0].child(0);
        return rebuilt();
      case Op::Add:
      case Op::Sub:
        return fold_sum(rebuilt());
      case Op::Mul: {
        const Expr& a = kids[0];
        const Expr& b = kids[1];
        if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
        if (a.is_constant(1.0)) return b;
        if (b.is_constant(1.0)) return a;
        if ((a.is_constant(0.0) && is_total(b)) || (b.is_constant(0.0) && is_total(a))) return Expr::constant(0.0);
        if (a.is_constant(-1.0)) return Expr::negate(b);
        if (b.is_constant(-1.0)) return Expr::negate(a);
        return rebuilt();
      }
      case Op::Div: {
        const Expr& a = kids[0];
        const Expr& b = kids[1];
        if (a.is_constant() && b.is_constant() && b.value() != 0.0) return Expr::constant(a.value() / b.value());
        if (b.is_constant(1.0)) return a;
        if (a.is_constant(0.0) && b.is_constant() && b.value() != 0.0) return Expr::constant(0.0);
        return rebuilt();
      }
      case Op::Pow: {
        const Expr& a = kids[0];
        const int k = e.exponent();
        if (k == 1) return a;
        if (k == 0) return Expr::constant(1.0);
        if (a.is_constant() && (k > 0 || a.value() != 0.0)) return Expr::constant(std::pow(a.value(), k));
        return rebuilt();
      }
      case Op::Call: {
        const Expr& a = kids[0];
        if (a.is_constant()) {
          const double x = a.value();
          switch (e.func()) {
            case Func::Sin:
              return Expr::constant(std::sin(x));
            case Func::Cos:
              return Expr::constant(std::cos(x));
            case Func::Exp:
              return Expr::constant(std::exp(x));
            case Func::Log:
              if (x > 0.0) return Expr::constant(std::log(x));
              break;
            case Func::Sqrt:
              if (x >= 0.0) return Expr::constant(std::sqrt(x));
              break;
          }
        }
        return rebuilt();
      }
      default:
        return rebuilt();
    }
  }

  // Flattens a sum, merges its constants and cancels identical terms of
  // opposite sign. Returns the input untouched when none of that applies.
  static Expr fold_sum(const Expr& e) {
    std::vector<Term> terms;
    collect_terms(e, false, terms);

    bool changed = false;
    double constant = 0.0;
    int constant_count = 0;
    std::vector<Term> kept;
    for (Term& t : terms) {
      if (t.expr.is_constant()) {
        constant += t.negative ? -t.expr.value() : t.expr.value();
        ++constant_count;
        continue;
      }
      bool cancelled = false;
      for (auto it = kept.begin(); it != kept.end(); ++it) {
        if (it->negative != t.negative && structurally_equal(it->expr, t.expr)) {
          kept.erase(it);
          cancelled = true;
          break;
        }
      }
      if (cancelled)
        changed = true;
      else
        kept.push_back(std::move(t));
    }
    if (constant_count > 1 || (constant_count == 1 && constant == 0.0)) changed = true;
    if (!changed) {
      // Only neutral-element cleanup of a plain binary node.
      if (e.op() == Op::Add || e.op() == Op::Sub) {
        const Expr& a = e.child(0);
        const Expr& b = e.child(1);
        if (a.is_constant() && b.is_constant())
          return Expr::constant(e.op() == Op::Add ? a.value() + b.value() : a.value() - b.value());
      }
      return e;
    }

    if (constant != 0.0) kept.push_back({constant < 0.0, Expr::constant(std::abs(constant))});
    if (kept.empty()) return Expr::constant(0.0);
    Expr acc = kept.front().negative ? Expr::negate(kept.front().expr) : kept.front().expr;
    for (std::size_t i = 1; i < kept.size(); ++i)
      acc = kept[i].negative ? Expr::sub(acc, kept[i].expr) : Expr::add(acc, kept[i].expr);
    return acc;
  }

  std::unordered_map<const Expr::Node*, Expr> memo_;
};

class Substituter {
 public:
  explicit Substituter(const VarMapper& mapper) : mapper_(mapper) {}

  Expr operator()(const Expr& e) {
    if (e.op() == Op::Variable) {
      if (auto r = mapper_(e.var())) {
        replaced_ = true;
        return *r;
      }
      return e;
    }
    if (e.children().empty()) return e;
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    std::vector<Expr> kids;
    bool changed = false;
    for (const Expr& c : e.children()) {
      kids.push_back((*this)(c));
      changed = changed || kids.back().id() != c.id();
    }
    Expr r = e;
    if (changed) {
      switch (e.op()) {
        case Op::Negate:
          r = Expr::negate(kids[0]);
          break;
        case Op::Add:
          r = Expr::add(kids[0], kids[1]);
          break;
        case Op::Sub:
          r = Expr::sub(kids[0], kids[1]);
          break;
        case Op::Mul:
          r = Expr::mul(kids[0], kids[1]);
          break;
        case Op::Div:
          r = Expr::div(kids[0], kids[1]);
          break;
        case Op::Pow:
          r = Expr::pow(kids[0], e.exponent());
          break;
        case Op::Call:
          r = Expr::call(e.func(), kids[0]);
          break;
        default:
          break;
      }
    }
    memo_.emplace(e.id(), r);
    return r;
  }

  bool replaced() const { return replaced_; }

 private:
  const VarMapper& mapper_;
  bool replaced_ = false;
  std::unordered_map<const Expr::Node*, Expr> memo_;
};

}  // namespace

Expr fold(const Expr& e) { return Folder{}(e); }

Expr substitute(const Expr& e, const VarMapper& mapper) {
  Substituter sub(mapper);
  Expr r = sub(e);
  if (!sub.replaced()) return e;
  return fold(r);
}

Expr substitute(const Expr& e, const Rules& rules) {
  if (rules.empty()) return e;
  return substitute(e, VarMapper([&rules](const VarRef& v) -> std::optional<Expr> {
                      auto it = rules.find(v);
                      if (it == rules.end()) return std::nullopt;
                      return it->second;
                    }));
}

}  // namespace flatdt
