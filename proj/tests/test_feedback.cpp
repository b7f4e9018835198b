#include <doctest.h>

#include <cmath>
#include <sstream>

#include "flatdt/errors.hpp"
#include "flatdt/feedback.hpp"
#include "support.hpp"

using namespace flatdt;
using flatdt::test::ex;
using flatdt::test::vec;

namespace {

const Model& product_model() {
  static const Model m = flatdt::test::product();
  return m;
}

StateCompletion model_completion() {
  const Model& m = product_model();
  return user_completion(m.spec, m.compensator_states, m.f_z);
}

const DynamicFeedback& symbolic_fb() {
  static const DynamicFeedback fb = build_feedback(product_model().spec, model_completion(), product_model().phi_hat);
  return fb;
}

const DynamicFeedback& numeric_fb() {
  static const DynamicFeedback fb = build_feedback(product_model().spec, model_completion());
  return fb;
}

// The brocket model moved to the equilibrium x = (1, 0, 0), u = (1, 0), where
// the output jet is regular.
FlatSpec shifted_brocket() {
  FlatSpec spec = flatdt::test::brocket().spec;
  spec.system.x0 = vec({1, 0, 0});
  spec.system.u0 = vec({1, 0});
  return spec;
}

double inf_dist(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).lpNorm<Eigen::Infinity>(); }

std::string joined(const std::vector<std::string>& notes) {
  std::string out;
  for (const auto& n : notes) out += n + "\n";
  return out;
}

}  // namespace

TEST_SUITE("state completion") {
  TEST_CASE("user map from the model file") {
    const StateCompletion c = model_completion();
    CHECK(c.names == std::vector<std::string>{"z1", "z2"});
    CHECK(c.selected.empty());
    CHECK(chain_coordinates(product_model().spec).size() == 5);
    CHECK(chain_tops(product_model().spec) == std::vector<VarRef>{{"y1", 3}, {"y2", 2}});
  }

  TEST_CASE("wrong row count") {
    const Model& m = product_model();
    CHECK_THROWS_AS(user_completion(m.spec, {"z1"}, {ex("y1")}), PreconditionError);
  }

  TEST_CASE("rows may not use chain tops") {
    const Model& m = product_model();
    CHECK_THROWS_AS(user_completion(m.spec, {"z1", "z2"}, {ex("y1"), ex("y1[3]")}), PreconditionError);
  }

  TEST_CASE("rank deficient user map") {
    const Model& m = product_model();
    CHECK_THROWS_AS(user_completion(m.spec, {"z1", "z2"}, {ex("y1[1]"), ex("y1[2]")}), PreconditionError);
  }

  TEST_CASE("product equilibrium is singular") {
    try {
      complete_state_map(product_model().spec);
      FAIL("expected a precondition error");
    } catch (const PreconditionError& e) {
      CHECK(std::string(e.what()).find("singular") != std::string::npos);
    }
  }

  TEST_CASE("automatic completion at a guarded sample") {
    CompletionOptions o;
    o.at_equilibrium = false;
    const StateCompletion c = complete_state_map(product_model().spec, o);
    CHECK(c.names.size() == 2);
    CHECK(c.selected.size() == 2);
    const DynamicFeedback fb = build_feedback(product_model().spec, c);
    CHECK(verify_brunovsky(fb, {5, 10}).pass);
  }

  TEST_CASE("automatic completion at a regular equilibrium") {
    const StateCompletion c = complete_state_map(shifted_brocket());
    CHECK(c.names.size() == 2);
  }
}

TEST_SUITE("feedback construction") {
  TEST_CASE("closed forms of the product feedback") {
    const DynamicFeedback& fb = symbolic_fb();
    REQUIRE(fb.symbolic);
    REQUIRE(fb.alpha.size() == 2);
    REQUIRE(fb.beta.size() == 2);
    CHECK(fb.new_inputs == std::vector<std::string>{"v1", "v2"});
    CHECK(symbolically_equal(fb.alpha[0], ex("x1")));
    CHECK(symbolically_equal(fb.alpha[1], ex("v1")));
    CHECK(symbolically_equal(fb.beta[0], ex("(z2 - x1)/T")));
    CHECK(symbolically_equal(fb.beta[1], ex("((x3 - v2)*T - x2*(v1 - z2))/((x1 - 2*z2 + v1)*T)")));
    CHECK_FALSE(symbolically_equal(fb.beta[1], ex("((x3 - v2)*T - x2*(v1 - z2))/((x1 - 2*z2 + v1))")));
  }

  TEST_CASE("numeric mode has no closed forms") {
    CHECK_FALSE(numeric_fb().symbolic);
    CHECK(numeric_fb().alpha.empty());
  }

  TEST_CASE("closed-form inverse undoes the state map") {
    const DynamicFeedback& fb = symbolic_fb();
    const std::vector<VarRef> chain = chain_coordinates(fb.spec);
    const GuardedRun run = sample_guarded_run(fb, 1, 3);
    const Eigen::VectorXd xz = state_map(fb, run.chain0);
    Binding b = fb.spec.system.parameter_binding();
    for (int i = 0; i < 3; ++i) b.set(fb.spec.system.states[i], 0, xz[i]);
    for (int i = 0; i < 2; ++i) b.set(fb.completion.names[i], 0, xz[3 + i]);
    for (std::size_t i = 0; i < chain.size(); ++i)
      CHECK(eval_expr(fb.phi_hat->at(chain[i]), b) ==
            doctest::Approx(run.chain0[static_cast<Eigen::Index>(i)]).epsilon(1e-12));
  }

  TEST_CASE("numeric inversion of the state map") {
    const DynamicFeedback& fb = numeric_fb();
    const GuardedRun run = sample_guarded_run(fb, 1, 5);
    const Eigen::VectorXd chain = invert_state_map(fb, run.x0, run.z0, run.chain0 + Eigen::VectorXd::Constant(5, 1e-3));
    CHECK(inf_dist(chain, run.chain0) <= 1e-9);
  }

  TEST_CASE("symbolic and numeric feedback agree") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const GuardedRun run = sample_guarded_run(symbolic_fb(), 1, 100 + seed);
      FeedbackController sym(symbolic_fb());
      FeedbackController num(numeric_fb());
      num.set_hint(run.chain0);
      const FeedbackOutput a = sym.evaluate(run.x0, run.z0, run.v[0]);
      const FeedbackOutput b = num.evaluate(run.x0, run.z0, run.v[0]);
      CHECK(inf_dist(a.u, b.u) <= 1e-8);
      CHECK(inf_dist(a.z_next, b.z_next) <= 1e-8);
    }
  }

  TEST_CASE("equilibrium input is reproduced") {
    const FlatSpec spec = shifted_brocket();
    const DynamicFeedback fb = build_feedback(spec, complete_state_map(spec));
    const TransformedEquilibrium eq = transformed_equilibrium(fb);
    CHECK(inf_dist(eq.x, spec.system.x0) <= 1e-12);
    FeedbackController ctl(fb);
    const FeedbackOutput out = ctl.evaluate(eq.x, eq.z, eq.v);
    CHECK(inf_dist(out.u, spec.system.u0) <= 1e-10);
    CHECK(inf_dist(out.z_next, eq.z) <= 1e-10);

    const ClosedLoopTrajectory t = simulate_closed_loop(fb, eq.x, eq.z, std::vector<Eigen::VectorXd>(10, eq.v));
    for (std::size_t k = 0; k < t.x.size(); ++k) {
      CHECK(inf_dist(t.x[k], eq.x) <= 1e-10);
      CHECK(inf_dist(t.z[k], eq.z) <= 1e-10);
    }
  }
}

TEST_SUITE("closed loop") {
  TEST_CASE("thirty guarded steps") {
    for (const DynamicFeedback* fb : {&symbolic_fb(), &numeric_fb()}) {
      const GuardedRun run = sample_guarded_run(*fb, 30, 77);
      const ClosedLoopTrajectory t = simulate_closed_loop(*fb, run.x0, run.z0, run.v, run.chain0);
      REQUIRE(t.u.size() == 30);
      for (const auto& u : t.u) CHECK(u.allFinite());
    }
  }

  TEST_CASE("closed loop states follow the open loop system") {
    const DynamicFeedback& fb = symbolic_fb();
    const GuardedRun run = sample_guarded_run(fb, 12, 8);
    const ClosedLoopTrajectory t = simulate_closed_loop(fb, run.x0, run.z0, run.v, run.chain0);
    const Trajectory open = simulate_forward(fb.spec.system, run.x0, t.u);
    for (std::size_t k = 0; k < t.x.size(); ++k) CHECK(inf_dist(open.states[k], t.x[k]) <= 1e-9);
  }

  TEST_CASE("jets shift along the chains") {
    const DynamicFeedback& fb = symbolic_fb();
    const GuardedRun run = sample_guarded_run(fb, 6, 12);
    const ClosedLoopTrajectory t = simulate_closed_loop(fb, run.x0, run.z0, run.v, run.chain0);
    // chain layout: y1, y1[1], y1[2], y2, y2[1]; jets append v.
    for (std::size_t k = 0; k + 1 < t.jets.size(); ++k) {
      const Eigen::VectorXd& a = t.jets[k];
      const Eigen::VectorXd& b = t.jets[k + 1];
      CHECK(std::abs(b[0] - a[1]) <= 1e-9);
      CHECK(std::abs(b[1] - a[2]) <= 1e-9);
      CHECK(std::abs(b[2] - t.v[k][0]) <= 1e-9);
      CHECK(std::abs(b[3] - a[4]) <= 1e-9);
      CHECK(std::abs(b[4] - t.v[k][1]) <= 1e-9);
    }
  }

  TEST_CASE("wrong dimensions") {
    CHECK_THROWS_AS(simulate_closed_loop(symbolic_fb(), vec({0, 0}), vec({0, 0}), {}), PreconditionError);
  }

  TEST_CASE("csv export") {
    const DynamicFeedback& fb = symbolic_fb();
    const GuardedRun run = sample_guarded_run(fb, 2, 4);
    std::ostringstream os;
    write_closed_loop_csv(os, fb, simulate_closed_loop(fb, run.x0, run.z0, run.v, run.chain0));
    std::istringstream lines(os.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "k,x1,x2,x3,z1,z2,v1,v2,u1,u2");
    int rows = 0;
    for (std::string line; std::getline(lines, line);) ++rows;
    CHECK(rows == 3);
  }
}

TEST_SUITE("normal form") {
  TEST_CASE("brunovsky chains for the product feedback") {
    for (const DynamicFeedback* fb : {&symbolic_fb(), &numeric_fb()}) {
      const CheckResult c = verify_brunovsky(*fb);
      INFO(joined(c.notes));
      CHECK(c.pass);
      CHECK(c.max_residual <= 1e-8);
      CHECK(c.samples == 20);
      CHECK(joined(c.notes).find("chains (3, 2)") != std::string::npos);
    }
    CHECK(chain_lengths(symbolic_fb()) == std::vector<int>{3, 2});
  }

  TEST_CASE("dead-beat transfer") {
    for (const DynamicFeedback* fb : {&symbolic_fb(), &numeric_fb()}) {
      const CheckResult c = verify_deadbeat(*fb, 10);
      INFO(joined(c.notes));
      CHECK(c.pass);
      CHECK(c.max_residual <= 1e-8);
    }
  }

  TEST_CASE("corrupted compensator fails") {
    DynamicFeedback fb = symbolic_fb();
    fb.alpha[0] = Expr::constant(0);
    CHECK_FALSE(verify_brunovsky(fb).pass);
  }

  TEST_CASE("brocket feedback") {
    const FlatSpec spec = shifted_brocket();
    const DynamicFeedback fb = build_feedback(spec, complete_state_map(spec));
    CHECK(verify_brunovsky(fb).pass);
    CHECK(verify_deadbeat(fb).pass);
  }
}
