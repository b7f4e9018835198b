#include <doctest.h>

#include <cmath>

#include "flatdt/errors.hpp"
#include "flatdt/expr.hpp"
#include "flatdt/numerics.hpp"
#include "support.hpp"

using namespace flatdt;
using flatdt::test::ex;
using flatdt::test::ExprGen;

namespace {

const std::vector<VarRef> kVars = {{"x1", 0}, {"x2", 0}, {"u1", 0}, {"u1", 1}, {"z1", -1}};

Expr var(const std::string& n, int s = 0) { return Expr::variable(n, s); }

}  // namespace

TEST_SUITE("parse_expr") {
  TEST_CASE("sum with parameter product") {
    const Expr expected = Expr::add(var("x1"), Expr::mul(Expr::parameter("T"), var("u1")));
    CHECK(structurally_equal(ex("x1 + T*u1"), expected));
  }

  TEST_CASE("shifted coordinate") {
    const Expr expected = Expr::sub(var("x3"), Expr::mul(var("x2"), var("z1", -1)));
    CHECK(structurally_equal(ex("x3 - x2*z1[-1]"), expected));
  }

  TEST_CASE("literal zero") { CHECK(structurally_equal(parse_expr("0"), Expr::constant(0))); }

  TEST_CASE("explicit positive shift and whitespace") {
    CHECK(structurally_equal(parse_expr(" y1 [ +2 ] "), var("y1", 2)));
  }

  TEST_CASE("power binds tighter than unary minus") {
    CHECK(structurally_equal(parse_expr("-x^2"), Expr::negate(Expr::pow(var("x"), 2))));
    CHECK(structurally_equal(parse_expr("(-x)^2"), Expr::pow(Expr::negate(var("x")), 2)));
  }

  TEST_CASE("unary minus binds tighter than product") {
    CHECK(structurally_equal(parse_expr("-a*b"), Expr::mul(Expr::negate(var("a")), var("b"))));
  }

  TEST_CASE("left associativity") {
    CHECK(structurally_equal(parse_expr("a - b - c"), Expr::sub(Expr::sub(var("a"), var("b")), var("c"))));
    CHECK(structurally_equal(parse_expr("a / b / c"), Expr::div(Expr::div(var("a"), var("b")), var("c"))));
  }

  TEST_CASE("negative integer exponent") {
    CHECK(structurally_equal(parse_expr("x^-2"), Expr::pow(var("x"), -2)));
  }

  TEST_CASE("function call") {
    CHECK(structurally_equal(parse_expr("sin(x + 1)"), Expr::call(Func::Sin, Expr::add(var("x"), Expr::constant(1)))));
  }

  TEST_CASE("unknown function") {
    try {
      parse_expr("x + foo(y)");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(e.column() == 5);
      CHECK(std::string(e.what()).find("foo") != std::string::npos);
    }
  }

  TEST_CASE("non-integer exponent") {
    CHECK_THROWS_AS(parse_expr("x^1.5"), ParseError);
    CHECK_THROWS_AS(parse_expr("x^y"), ParseError);
  }

  TEST_CASE("syntax errors carry line and column") {
    try {
      parse_expr("a +\n  * b");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(e.column() == 3);
    }
    CHECK_THROWS_AS(parse_expr("(a + b"), ParseError);
    CHECK_THROWS_AS(parse_expr("a b"), ParseError);
    CHECK_THROWS_AS(parse_expr(""), ParseError);
    CHECK_THROWS_AS(parse_expr("x[1.5]"), ParseError);
  }

  TEST_CASE("parameters cannot be shifted") { CHECK_THROWS_AS(ex("T[1]"), ParseError); }

  TEST_CASE("round trip on random trees") {
    ExprGen gen(11, kVars);
    for (int i = 0; i < 500; ++i) {
      const Expr e = gen(5);
      const std::string printed = to_string(e);
      const Expr back = ex(printed);
      INFO(printed);
      REQUIRE(structurally_equal(back, e));
    }
  }
}

TEST_SUITE("eval_expr") {
  TEST_CASE("direct arithmetic") {
    Binding b;
    b.set("x1", 0, 2).set("u1", 0, 5).set_parameter("T", 1);
    CHECK(eval_expr(ex("x1 + T*u1"), b) == 7.0);
  }

  TEST_CASE("shifted coordinates are distinct") {
    Binding b;
    b.set("y1", 1, 2).set("y1", 0, 1);
    CHECK(eval_expr(parse_expr("y1[1] - y1[0]"), b) == 1.0);
  }

  TEST_CASE("division by zero names the subexpression") {
    Binding b;
    b.set("x1", 0, 1).set("x2", 0, 0);
    try {
      eval_expr(parse_expr("3 + x1/x2"), b);
      FAIL("expected singular evaluation");
    } catch (const SingularEvaluationError& e) {
      CHECK(e.subexpression() == "x1/x2");
    }
  }

  TEST_CASE("domain errors") {
    Binding b;
    b.set("x", 0, -1.0);
    CHECK_THROWS_AS(eval_expr(parse_expr("log(x)"), b), SingularEvaluationError);
    CHECK_THROWS_AS(eval_expr(parse_expr("sqrt(x)"), b), SingularEvaluationError);
    CHECK_THROWS_AS(eval_expr(parse_expr("(x + 1)^-1"), b), SingularEvaluationError);
    CHECK(eval_expr(parse_expr("x^-2"), b) == doctest::Approx(1.0));
  }

  TEST_CASE("unbound symbols") {
    CHECK_THROWS_AS(eval_expr(parse_expr("x + 1"), Binding{}), UnboundSymbolError);
    CHECK_THROWS_AS(eval_expr(ex("T"), Binding{}), UnboundSymbolError);
    Binding b;
    b.set("x", 0, 1.0);
    CHECK_THROWS_AS(eval_expr(parse_expr("x[1]"), b), UnboundSymbolError);
  }

  TEST_CASE("functions") {
    Binding b;
    b.set("x", 0, 0.25);
    CHECK(eval_expr(parse_expr("sin(x)^2 + cos(x)^2"), b) == doctest::Approx(1.0));
    CHECK(eval_expr(parse_expr("log(exp(x))"), b) == doctest::Approx(0.25));
    CHECK(eval_expr(parse_expr("sqrt(x)"), b) == doctest::Approx(0.5));
  }
}

TEST_SUITE("substitute") {
  TEST_CASE("forward shift of the first product flat output") {
    Rules rules;
    rules[{"z1", -1}] = ex("u1");
    rules[{"x1", 0}] = ex("x1 + T*u1");
    const Expr r = substitute(ex("x1 - T*z1[-1]"), rules);
    CHECK(structurally_equal(r, var("x1")));
  }

  TEST_CASE("empty rules return the input") {
    const Expr e = ex("x1*(u1 + 0)");
    CHECK(substitute(e, Rules{}).id() == e.id());
  }

  TEST_CASE("substitution is simultaneous") {
    Rules rules;
    rules[{"a", 0}] = var("b");
    rules[{"b", 0}] = var("a");
    CHECK(to_string(substitute(parse_expr("a*b"), rules)) == "b*a");
  }

  TEST_CASE("shift index is part of the key") {
    Rules rules;
    rules[{"u1", 1}] = var("w");
    CHECK(to_string(substitute(parse_expr("u1 + u1[1]"), rules)) == "u1 + w");
  }

  TEST_CASE("homomorphism on random trees") {
    ExprGen gen(23, kVars);
    int checked = 0;
    for (int i = 0; i < 300; ++i) {
      const Expr e = gen(4);
      Rules rules;
      rules[{"x1", 0}] = gen(2);
      rules[{"u1", 1}] = gen(2);
      const Binding b = gen.binding();
      Binding replaced = b;
      try {
        replaced.set({"x1", 0}, eval_expr(rules[{"x1", 0}], b));
        replaced.set({"u1", 1}, eval_expr(rules[{"u1", 1}], b));
        const double expected = eval_expr(e, replaced);
        const double got = eval_expr(substitute(e, rules), b);
        if (!std::isfinite(expected) || std::abs(expected) > 1e8) continue;
        CHECK(got == doctest::Approx(expected).epsilon(1e-9));
        ++checked;
      } catch (const SingularEvaluationError&) {
      }
    }
    CHECK(checked > 100);
  }
}

TEST_SUITE("fold") {
  TEST_CASE("neutral elements and constants") {
    CHECK(to_string(fold(parse_expr("x*1 + 0"))) == "x");
    CHECK(to_string(fold(parse_expr("2*3 + x"))) == "6 + x");
    CHECK(to_string(fold(parse_expr("x - x"))) == "0");
    CHECK(to_string(fold(parse_expr("a + b - a"))) == "b");
    CHECK(to_string(fold(parse_expr("--x"))) == "x");
    CHECK(to_string(fold(parse_expr("x^1"))) == "x");
    CHECK(to_string(fold(parse_expr("x^0"))) == "1");
    CHECK(to_string(fold(parse_expr("x*-1"))) == "-x");
  }

  TEST_CASE("multiplication by zero keeps partial subtrees") {
    CHECK(to_string(fold(parse_expr("0*x"))) == "0");
    CHECK(to_string(fold(parse_expr("0*(1/x)"))) == "0*(1/x)");
  }

  TEST_CASE("no division by a zero constant") { CHECK(to_string(fold(parse_expr("1/(2 - 2)"))) == "1/0"); }

  TEST_CASE("folding never changes values") {
    ExprGen gen(5, kVars);
    int checked = 0;
    for (int i = 0; i < 500; ++i) {
      const Expr e = gen(5);
      const Binding b = gen.binding();
      double expected = 0.0;
      try {
        expected = eval_expr(e, b);
      } catch (const SingularEvaluationError&) {
        continue;
      }
      if (!std::isfinite(expected)) continue;
      const double got = eval_expr(fold(e), b);
      CHECK(got == doctest::Approx(expected).epsilon(1e-12));
      ++checked;
    }
    CHECK(checked > 200);
  }
}

TEST_SUITE("jacobian_at") {
  TEST_CASE("product system dynamics") {
    const std::vector<Expr> f = {ex("x1 + T*u1"), ex("x2 + T*u2"), ex("x3 + T*u1*u2")};
    const std::vector<VarRef> vars = {{"x1", 0}, {"x2", 0}, {"x3", 0}, {"u1", 0}, {"u2", 0}};
    Binding b;
    b.set("x1", 0, 0.3).set("x2", 0, -1).set("x3", 0, 2).set("u1", 0, 5).set("u2", 0, 7).set_parameter("T", 1);
    Eigen::MatrixXd expected(3, 5);
    expected << 1, 0, 0, 1, 0,  //
        0, 1, 0, 0, 1,          //
        0, 0, 1, 7, 5;
    const Eigen::MatrixXd J = jacobian_at(f, vars, b);
    CHECK((J - expected).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(numeric_rank(J) == 3);
  }

  TEST_CASE("identity") {
    const std::vector<Expr> e = {parse_expr("x1")};
    const std::vector<VarRef> v = {{"x1", 0}};
    Binding b;
    b.set("x1", 0, 4.0);
    CHECK(jacobian_at(e, v, b)(0, 0) == 1.0);
  }

  TEST_CASE("product rule") {
    const std::vector<Expr> e = {parse_expr("x2*u1")};
    const std::vector<VarRef> v = {{"x2", 0}, {"u1", 0}};
    Binding b;
    b.set("x2", 0, 3).set("u1", 0, 5);
    const Eigen::MatrixXd J = jacobian_at(e, v, b);
    CHECK(J(0, 0) == 5.0);
    CHECK(J(0, 1) == 3.0);
  }

  TEST_CASE("singular entries propagate") {
    const std::vector<Expr> e = {parse_expr("1/x")};
    const std::vector<VarRef> v = {{"x", 0}};
    Binding b;
    b.set("x", 0, 0.0);
    CHECK_THROWS_AS(jacobian_at(e, v, b), SingularEvaluationError);
  }

  TEST_CASE("agrees with central differences") {
    ExprGen gen(99, kVars, true);
    int checked = 0;
    for (int i = 0; i < 200; ++i) {
      const std::vector<Expr> e = {gen(4)};
      Binding b = gen.binding();
      const Eigen::MatrixXd J = jacobian_at(e, kVars, b);
      for (std::size_t j = 0; j < kVars.size(); ++j) {
        const double x = *b.lookup(kVars[j]);
        const double h = 1e-6;
        Binding plus = b;
        Binding minus = b;
        plus.set(kVars[j], x + h);
        minus.set(kVars[j], x - h);
        const double fd = (eval_expr(e[0], plus) - eval_expr(e[0], minus)) / (2 * h);
        const double exact = J(0, static_cast<Eigen::Index>(j));
        if (std::abs(exact) > 1e6) continue;
        CHECK(std::abs(fd - exact) <= 1e-6 * std::max(1.0, std::abs(exact)) + 1e-6);
        ++checked;
      }
    }
    CHECK(checked > 500);
  }
}

TEST_SUITE("symbol queries") {
  TEST_CASE("variables and parameters") {
    const Expr e = ex("x1 + T*z1[-1] - x1*u1[2]");
    const std::set<VarRef> vars = variables_of(e);
    CHECK(vars == std::set<VarRef>{{"x1", 0}, {"z1", -1}, {"u1", 2}});
    CHECK(parameters_of(e) == std::set<std::string>{"T"});
  }

  TEST_CASE("singular factors") {
    const std::vector<Expr> f = singular_factors(parse_expr("a/(b - c) + d^-2 + log(e) + 1/2"));
    std::set<std::string> printed;
    for (const Expr& e : f) printed.insert(to_string(e));
    CHECK(printed == std::set<std::string>{"b - c", "d", "e"});
  }

  TEST_CASE("symbolic identity") {
    CHECK(symbolically_equal(parse_expr("(x + 1)^2"), parse_expr("x^2 + 2*x + 1")));
    CHECK(symbolically_equal(parse_expr("a/b + c/b"), parse_expr("(a + c)/b")));
    CHECK(symbolically_equal(parse_expr("x*u - u*x"), parse_expr("0")));
    CHECK_FALSE(symbolically_equal(parse_expr("x + 1"), parse_expr("x")));
    CHECK_FALSE(symbolically_equal(parse_expr("sin(x)"), parse_expr("sin(y)")));
  }
}
