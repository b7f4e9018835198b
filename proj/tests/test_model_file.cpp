#include <doctest.h>

#include <fstream>
#include <sstream>

#include "flatdt/errors.hpp"
#include "flatdt/model_file.hpp"
#include "support.hpp"

using namespace flatdt;
using flatdt::test::model_path;

namespace {

std::string product_text() {
  std::ifstream in(model_path("product.fdt"));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int line_of(const std::string& text, const std::string& needle) {
  const auto pos = text.find(needle);
  REQUIRE(pos != std::string::npos);
  int line = 1;
  for (std::size_t i = 0; i < pos; ++i)
    if (text[i] == '\n') ++line;
  return line;
}

std::string replaced(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

int model_error_line(const std::string& text) {
  try {
    parse_model(text);
  } catch (const ModelError& e) {
    return e.line();
  }
  FAIL("expected a model error");
  return -1;
}

}  // namespace

TEST_SUITE("parse_model") {
  TEST_CASE("product fixture") {
    const Model m = parse_model(product_text(), "product.fdt");
    const SystemModel& sys = m.spec.system;
    CHECK(sys.name == "product");
    CHECK(sys.parameters.at("T") == 1.0);
    CHECK(sys.states == std::vector<std::string>{"x1", "x2", "x3"});
    CHECK(sys.ext_outputs == std::vector<std::string>{"zeta1", "zeta2"});
    CHECK(to_string(sys.f[2]) == "x3 + T*u1*u2");
    REQUIRE(sys.psi.has_value());
    CHECK(sys.psi->size() == 5);
    CHECK(to_string(m.spec.phi[1]) == "x3 - x2*zeta1[-1]");
    CHECK(m.spec.guards.size() == 2);
    CHECK(m.compensator_states == std::vector<std::string>{"z1", "z2"});
    REQUIRE(m.phi_hat.has_value());
    CHECK(to_string(m.phi_hat->at({"y1", 1})) == "x1");
  }

  TEST_CASE("brocket fixture has no parameters or completion") {
    const Model m = flatdt::test::brocket();
    CHECK(m.spec.system.parameters.empty());
    CHECK(m.f_z.empty());
    CHECK_FALSE(m.phi_hat.has_value());
  }

  TEST_CASE("rows follow declaration order") {
    const std::string text = replaced(replaced(product_text(), "  x1 = x1 + T*u1\n", ""), "  x3 = x3 + T*u1*u2\n",
                                      "  x3 = x3 + T*u1*u2\n  x1 = x1 + T*u1\n");
    const Model m = parse_model(text);
    CHECK(to_string(m.spec.system.f[0]) == "x1 + T*u1");
  }

  TEST_CASE("expression errors point into the file") {
    const std::string text = replaced(product_text(), "x2 = x2 + T*u2", "x2 = x2 + T*)u2");
    try {
      parse_model(text, "bad.fdt");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == line_of(text, "x2 = x2 + T*)u2"));
      CHECK(e.column() == 15);
    }
  }

  TEST_CASE("undeclared symbol") {
    const std::string text = replaced(product_text(), "x2 = x2 + T*u2", "x2 = x2 + T*w");
    CHECK(model_error_line(text) == line_of(text, "x2 = x2 + T*w"));
  }

  TEST_CASE("namespace rules per section") {
    const std::string dyn = replaced(product_text(), "x2 = x2 + T*u2", "x2 = x2 + T*u2[1]");
    CHECK(model_error_line(dyn) == line_of(dyn, "T*u2[1]"));
    const std::string param = replaced(product_text(), "x1 = y1[1]", "x1 = y1[1] + x1");
    CHECK(model_error_line(param) == line_of(param, "x1 = y1[1] + x1"));
  }

  TEST_CASE("missing equation") {
    const std::string text = replaced(product_text(), "  x2 = x2 + T*u2\n", "");
    CHECK_THROWS_AS(parse_model(text), ModelError);
  }

  TEST_CASE("duplicate equation") {
    const std::string text = replaced(product_text(), "  x2 = x2 + T*u2\n", "  x2 = x2 + T*u2\n  x2 = x2\n");
    CHECK(model_error_line(text) == line_of(text, "  x2 = x2\n"));
  }

  TEST_CASE("sections out of order") {
    const std::string text = replaced(product_text(), "params\n  T = 1\n", "") + "params\n  T = 1\n";
    CHECK_THROWS_AS(parse_model(text), ModelError);
  }

  TEST_CASE("unknown section") {
    const std::string text = replaced(product_text(), "guards\n", "gaurds\n");
    CHECK_THROWS_AS(parse_model(text), ModelError);
  }

  TEST_CASE("missing required section") {
    const std::string text = replaced(product_text(), "equilibrium\n  x1 = 0\n  x2 = 0\n  x3 = 0\n  u1 = 0\n  u2 = 0\n", "");
    CHECK_THROWS_AS(parse_model(text), ModelError);
  }

  TEST_CASE("names are declared once and avoid function names") {
    const std::string twice = replaced(product_text(), "x1, x2, x3", "x1, x2, x1");
    CHECK(model_error_line(twice) == line_of(twice, "x1, x2, x1"));
    const std::string func = replaced(product_text(), "x1, x2, x3", "x1, x2, sin");
    CHECK(model_error_line(func) == line_of(func, "x1, x2, sin"));
  }

  TEST_CASE("equilibrium must be numeric") {
    const std::string text = replaced(product_text(), "  x3 = 0\n  u1 = 0", "  x3 = x1\n  u1 = 0");
    CHECK(model_error_line(text) == line_of(text, "  x3 = x1\n"));
  }

  TEST_CASE("phi_hat needs a completion") {
    const std::string text = replaced(product_text(), "state_completion\n  z1 = y1\n  z2 = y1[2]\n", "");
    CHECK_THROWS_AS(parse_model(text), ModelError);
  }

  TEST_CASE("missing file") { CHECK_THROWS_AS(load_model(model_path("missing.fdt")), ModelError); }
}
