// Exact identity test for rational expressions: both sides are brought to
// numerator/denominator form over sparse multivariate polynomials and
// compared by cross-multiplication.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include "flatdt/expr.hpp"

namespace flatdt {

namespace {

// Sorted (atom, power) pairs with power > 0.
using Monomial = std::vector<std::pair<std::string, int>>;

class Poly {
 public:
  Poly() = default;
  static Poly constant(double c) {
    Poly p;
    if (c != 0.0) p.terms_[{}] = c;
    return p;
  }
  static Poly atom(const std::string& key) {
    Poly p;
    p.terms_[{{key, 1}}] = 1.0;
    return p;
  }

  Poly operator+(const Poly& o) const {
    Poly r = *this;
    for (const auto& [m, c] : o.terms_) r.terms_[m] += c;
    r.prune();
    return r;
  }
  Poly operator-() const {
    Poly r = *this;
    for (auto& [m, c] : r.terms_) c = -c;
    return r;
  }
  Poly operator-(const Poly& o) const { return *this + (-o); }
  Poly operator*(const Poly& o) const {
    Poly r;
    for (const auto& [ma, ca] : terms_)
      for (const auto& [mb, cb] : o.terms_) r.terms_[multiply(ma, mb)] += ca * cb;
    r.prune();
    return r;
  }

  bool operator==(const Poly& o) const { return terms_ == o.terms_; }
  bool is_one() const { return terms_.size() == 1 && terms_.begin()->first.empty() && terms_.begin()->second == 1.0; }

  double max_abs() const {
    double m = 0.0;
    for (const auto& [mono, c] : terms_) m = std::max(m, std::abs(c));
    return m;
  }

  std::string key() const {
    std::ostringstream os;
    os.precision(17);
    for (const auto& [m, c] : terms_) {
      os << c;
      for (const auto& [a, k] : m) os << '*' << a << '^' << k;
      os << ';';
    }
    return os.str();
  }

 private:
  static Monomial multiply(const Monomial& a, const Monomial& b) {
    Monomial r;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() || j < b.size()) {
      if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
        r.push_back(a[i++]);
      } else if (i == a.size() || b[j].first < a[i].first) {
        r.push_back(b[j++]);
      } else {
        r.emplace_back(a[i].first, a[i].second + b[j].second);
        ++i;
        ++j;
      }
    }
    return r;
  }

  void prune() {
    std::erase_if(terms_, [](const auto& kv) { return kv.second == 0.0; });
  }

  std::map<Monomial, double> terms_;
};

struct Rational {
  Poly num;
  Poly den = Poly::constant(1.0);
};

Poly power(const Poly& p, int k) {
  Poly r = Poly::constant(1.0);
  for (int i = 0; i < k; ++i) r = r * p;
  return r;
}

class Rationalizer {
 public:
  Rational operator()(const Expr& e) {
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    Rational r = convert(e);
    memo_.emplace(e.id(), r);
    return r;
  }

 private:
  Rational convert(const Expr& e) {
    switch (e.op()) {
      case Op::Constant:
        return {Poly::constant(e.value())};
      case Op::Variable:
        return {Poly::atom("v:" + to_string(e.var()))};
      case Op::Parameter:
        return {Poly::atom("p:" + e.parameter_name())};
      case Op::Negate: {
        Rational a = (*this)(e.child(0));
        return {-a.num, a.den};
      }
      case Op::Add:
      case Op::Sub: {
        Rational a = (*this)(e.child(0));
        Rational b = (*this)(e.child(1));
        if (e.op() == Op::Sub) b.num = -b.num;
        if (a.den == b.den) return {a.num + b.num, a.den};
        return {a.num * b.den + b.num * a.den, a.den * b.den};
      }
      case Op::Mul: {
        Rational a = (*this)(e.child(0));
        Rational b = (*this)(e.child(1));
        return {a.num * b.num, a.den * b.den};
      }
      case Op::Div: {
        Rational a = (*this)(e.child(0));
        Rational b = (*this)(e.child(1));
        return {a.num * b.den, a.den * b.num};
      }
      case Op::Pow: {
        Rational a = (*this)(e.child(0));
        const int k = e.exponent();
        if (k >= 0) return {power(a.num, k), power(a.den, k)};
        return {power(a.den, -k), power(a.num, -k)};
      }
      case Op::Call: {
        Rational a = (*this)(e.child(0));
        std::string key = std::string(function_name(e.func())) + "(" + a.num.key() + "/" + a.den.key() + ")";
        return {Poly::atom("f:" + key)};
      }
    }
    return {};
  }

  std::unordered_map<const Expr::Node*, Rational> memo_;
};

}  // namespace

bool symbolically_equal(const Expr& a, const Expr& b) {
  Rationalizer rat;
  const Rational ra = rat(a);
  const Rational rb = rat(b);
  const Poly lhs = ra.num * rb.den;
  const Poly rhs = rb.num * ra.den;
  const Poly diff = lhs - rhs;
  const double scale = std::max({1.0, lhs.max_abs(), rhs.max_abs()});
  return diff.max_abs() <= 1e-12 * scale;
}

}  // namespace flatdt
