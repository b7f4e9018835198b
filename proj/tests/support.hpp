#pragma once

#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flatdt/expr.hpp"
#include "flatdt/model_file.hpp"

namespace flatdt::test {

inline std::string model_path(const std::string& file) { return std::string(FLATDT_MODELS_DIR) + "/" + file; }
inline Model product() { return load_model(model_path("product.fdt")); }
inline Model brocket() { return load_model(model_path("brocket.fdt")); }

inline Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double d : values) v[i++] = d;
  return v;
}

// Parses with T declared as a parameter.
inline Expr ex(const std::string& text) {
  ParseOptions o;
  o.parameters.insert("T");
  return parse_expr(text, o);
}

// Random expression trees over the given variables. `smooth` leaves out
// division, negative powers, log and sqrt.
class ExprGen {
 public:
  ExprGen(std::uint64_t seed, std::vector<VarRef> vars, bool smooth = false)
      : rng_(seed), vars_(std::move(vars)), smooth_(smooth) {}

  Expr operator()(int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 10);
    switch (pick(rng_)) {
      case 0: return Expr::constant(std::uniform_int_distribution<int>(-4, 4)(rng_) * 0.5);
      case 1: return Expr::parameter("T");
      case 2: return Expr::variable(vars_[std::uniform_int_distribution<std::size_t>(0, vars_.size() - 1)(rng_)]);
      case 3: return Expr::negate((*this)(depth - 1));
      case 4: return Expr::add((*this)(depth - 1), (*this)(depth - 1));
      case 5: return Expr::sub((*this)(depth - 1), (*this)(depth - 1));
      case 6: return Expr::mul((*this)(depth - 1), (*this)(depth - 1));
      case 7:
        if (smooth_) return Expr::mul((*this)(depth - 1), (*this)(depth - 1));
        return Expr::div((*this)(depth - 1), (*this)(depth - 1));
      case 8: {
        const int k = std::uniform_int_distribution<int>(smooth_ ? 0 : -2, 3)(rng_);
        return Expr::pow((*this)(depth - 1), k);
      }
      case 9: {
        const Func smooth_funcs[] = {Func::Sin, Func::Cos, Func::Exp};
        const Func all_funcs[] = {Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt};
        const Func f = smooth_ ? smooth_funcs[std::uniform_int_distribution<int>(0, 2)(rng_)]
                               : all_funcs[std::uniform_int_distribution<int>(0, 4)(rng_)];
        return Expr::call(f, (*this)(depth - 1));
      }
      default: return Expr::variable(vars_[std::uniform_int_distribution<std::size_t>(0, vars_.size() - 1)(rng_)]);
    }
  }

  Binding binding(double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Binding b;
    for (const VarRef& v : vars_) b.set(v, d(rng_));
    b.set_parameter("T", 0.5 + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng_));
    return b;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::vector<VarRef> vars_;
  bool smooth_;
};

}  // namespace flatdt::test
