#include <doctest.h>

#include <algorithm>

#include "flatdt/errors.hpp"
#include "flatdt/flatness.hpp"
#include "support.hpp"

using namespace flatdt;
using flatdt::test::ex;

namespace {

const FlatSpec& product_spec() {
  static const FlatSpec spec = flatdt::test::product().spec;
  return spec;
}
const FlatSpec& brocket_spec() {
  static const FlatSpec spec = flatdt::test::brocket().spec;
  return spec;
}

VerifyOptions quick(int samples = 50) {
  VerifyOptions o;
  o.samples = samples;
  return o;
}

const CheckResult& check_named(const VerificationReport& r, const std::string& name) {
  for (const CheckResult& c : r.checks)
    if (c.check == name) return c;
  throw std::runtime_error("no check " + name);
}

bool has_note(const CheckResult& c, const std::string& fragment) {
  return std::any_of(c.notes.begin(), c.notes.end(),
                     [&](const std::string& n) { return n.find(fragment) != std::string::npos; });
}

}  // namespace

TEST_SUITE("spec metadata") {
  TEST_CASE("shift extents") {
    CHECK(product_spec().r() == std::vector<int>{3, 2});
    CHECK(brocket_spec().r() == std::vector<int>{3, 2});
    CHECK(product_spec().lo() == std::vector<int>{0, 0});
    CHECK(product_spec().r_max() == 3);
    CHECK(product_spec().q1() == std::vector<int>{1, 1});
    CHECK(product_spec().q2() == std::vector<int>{0, 0});
  }

  TEST_CASE("output at the equilibrium") {
    CHECK(product_spec().output_equilibrium() == std::vector<double>{0, 0});
  }

  TEST_CASE("guards include the declared denominators") {
    std::vector<std::string> printed;
    for (const Expr& g : product_spec().output_guards()) printed.push_back(to_string(g));
    CHECK(std::find(printed.begin(), printed.end(), "y1 - 2*y1[1] + y1[2]") != printed.end());
    CHECK(std::find(printed.begin(), printed.end(), "T") == printed.end());
  }
}

TEST_SUITE("shift table") {
  TEST_CASE("product outputs") {
    const ShiftTable t = build_shift_table(product_spec(), 0, 3);
    const char* y1[] = {"x1 - T*zeta1[-1]", "x1", "x1 + T*u1", "x1 + T*(u1 + u1[1])"};
    const char* y2[] = {"x3 - x2*zeta1[-1]", "x3 - u1*x2", "x3 + T*u1*u2 - u1[1]*(x2 + T*u2)"};
    for (int i = 0; i < 4; ++i) CHECK(symbolically_equal(t.at(0, i), ex(y1[i])));
    for (int i = 0; i < 3; ++i) CHECK(symbolically_equal(t.at(1, i), ex(y2[i])));
    CHECK(to_string(t.at(0, 1)) == "x1");
    CHECK_FALSE(symbolically_equal(t.at(1, 2), ex("x3 + T*u1*u2 - u1[1]*x2")));
  }

  TEST_CASE("brocket outputs") {
    const ShiftTable t = build_shift_table(brocket_spec(), 0, 3);
    const char* y1[] = {"zeta1[-1]", "x1", "u1", "u1[1]"};
    const char* y2[] = {"x3 - x2*zeta1[-1]", "x3 + x2*u1", "x3 + x2*u1 + u2*(x1 + u1[1])"};
    for (int i = 0; i < 4; ++i) CHECK(to_string(t.at(0, i)) == y1[i]);
    for (int i = 0; i < 3; ++i) CHECK(symbolically_equal(t.at(1, i), ex(y2[i])));
  }

  TEST_CASE("backward entries and bounds") {
    const ShiftTable t = build_shift_table(product_spec(), 1, 1);
    CHECK(to_string(t.at(0, -1)) == "x1 - T*zeta1[-1] - T*zeta1[-2]");
    CHECK_THROWS_AS(t.at(0, 2), PreconditionError);
    CHECK_THROWS_AS(build_shift_table(product_spec(), -1, 0), PreconditionError);
  }
}

TEST_SUITE("certificate checks") {
  TEST_CASE("both examples certify") {
    for (const FlatSpec* spec : {&product_spec(), &brocket_spec()}) {
      const VerificationReport r = certify(*spec);
      CHECK(r.certified());
      REQUIRE(r.checks.size() == 5);
      for (const CheckResult& c : r.checks) {
        INFO(c.check);
        CHECK(c.pass);
        CHECK(c.max_residual <= 1e-9);
      }
      CHECK(check_named(r, "parameterization_identity").samples == 200);
      CHECK(check_named(r, "submersion_and_structure").min_rank == 5);
    }
  }

  TEST_CASE("brocket reports the state rank") {
    const VerificationReport r = certify(brocket_spec(), quick());
    CHECK(has_note(check_named(r, "system_validation"), "rank d(x) f = n: min rank 1 < 3 (informational)"));
  }

  TEST_CASE("product reports its singular locus") {
    const CheckResult c = verify_parameterization_identity(product_spec(), quick());
    CHECK(has_note(c, "guarded singular locus"));
  }

  TEST_CASE("perturbed state row fails the identity") {
    FlatSpec spec = product_spec();
    spec.f_x[1] = ex("T*(y2 - y2[1] + 0.01)/(y1 - 2*y1[1] + y1[2])");
    const CheckResult c = verify_parameterization_identity(spec);
    CHECK_FALSE(c.pass);
    CHECK(c.max_residual >= 1e-3);
    CHECK_FALSE(certify(spec, quick()).certified());
  }

  TEST_CASE("zeroed input row breaks compatibility") {
    FlatSpec spec = product_spec();
    spec.f_u[0] = Expr::constant(0);
    const CheckResult c = verify_system_compatibility(spec, quick());
    CHECK_FALSE(c.pass);
    CHECK(c.max_residual > 1e-3);
  }

  TEST_CASE("independence at depth one and three") {
    for (const FlatSpec* spec : {&product_spec(), &brocket_spec()}) {
      const CheckResult c = verify_independence_ranks(*spec, 1, 3, quick());
      CHECK(c.pass);
      CHECK(c.min_rank == 10);
    }
  }

  TEST_CASE("duplicated output component loses rank") {
    FlatSpec spec = product_spec();
    spec.phi[1] = spec.phi[0];
    const CheckResult c = verify_independence_ranks(spec, 1, 3, quick());
    CHECK_FALSE(c.pass);
    CHECK(c.min_rank < 10);
  }

  TEST_CASE("dropping an input row loses submersivity") {
    FlatSpec spec = product_spec();
    spec.f_u[1] = Expr::constant(0);
    const CheckResult c = verify_submersion_and_structure(spec, quick());
    CHECK_FALSE(c.pass);
    CHECK(c.min_rank == 4);
  }

  TEST_CASE("state rows must not use the top shift") {
    FlatSpec spec = brocket_spec();
    spec.f_x[0] = ex("y1[1] + 0*y1[3]");
    const CheckResult c = verify_submersion_and_structure(spec, quick());
    CHECK_FALSE(c.pass);
    CHECK(has_note(c, "F_x row 1 depends on top shift y1[3]"));
  }

  TEST_CASE("runs are reproducible") {
    const CheckResult a = verify_parameterization_identity(brocket_spec(), quick());
    const CheckResult b = verify_parameterization_identity(brocket_spec(), quick());
    CHECK(a.max_residual == b.max_residual);
  }
}

TEST_SUITE("classification and normalization") {
  TEST_CASE("both outputs use backward shifts") {
    CHECK(to_string(classify_flat_output(product_spec())) == "general_flat_form");
    CHECK(to_string(classify_flat_output(brocket_spec())) == "general_flat_form");
  }

  TEST_CASE("shifting once gives forward outputs") {
    const std::vector<int> s = {1, 1};
    const FlatSpec p = normalize_to_forward(product_spec(), s);
    CHECK(to_string(p.phi[0]) == "x1");
    CHECK(symbolically_equal(p.phi[1], ex("x3 - u1*x2")));
    CHECK(p.lo() == std::vector<int>{-1, -1});
    CHECK(p.r() == std::vector<int>{2, 1});
    CHECK(to_string(classify_flat_output(p)) == "forward_flat_form");

    const FlatSpec b = normalize_to_forward(brocket_spec(), s);
    CHECK(to_string(b.phi[0]) == "x1");
    CHECK(symbolically_equal(b.phi[1], ex("x3 + x2*u1")));
    CHECK(to_string(classify_flat_output(b)) == "forward_flat_form");

    for (const FlatSpec* spec : {&p, &b}) {
      const VerificationReport r = certify(*spec);
      CHECK(r.certified());
      for (const CheckResult& c : r.checks) CHECK(c.max_residual <= 1e-9);
    }
  }

  TEST_CASE("partial shift keeps a backward dependence") {
    const std::vector<int> s = {1, 0};
    CHECK_THROWS_AS(normalize_to_forward(product_spec(), s), PreconditionError);
    const std::vector<int> wrong = {1};
    CHECK_THROWS_AS(normalize_to_forward(product_spec(), wrong), PreconditionError);
  }
}
