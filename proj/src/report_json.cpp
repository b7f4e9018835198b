#include "flatdt/report_json.hpp"

#include <cmath>

namespace flatdt {

using nlohmann::ordered_json;

namespace {

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json printed(const std::vector<Expr>& rows) {
  ordered_json out = ordered_json::array();
  for (const Expr& e : rows) out.push_back(to_string(e));
  return out;
}

}  // namespace

ordered_json to_json(const CheckResult& c) {
  ordered_json j;
  j["check"] = c.check;
  j["pass"] = c.pass;
  j["max_residual"] = number_or_null(c.max_residual);
  j["min_rank"] = c.min_rank ? ordered_json(*c.min_rank) : ordered_json(nullptr);
  j["samples"] = c.samples;
  j["seed"] = c.seed;
  if (!c.notes.empty()) j["notes"] = c.notes;
  return j;
}

ordered_json to_json(const VerificationReport& r) {
  ordered_json j;
  j["certified"] = r.certified();
  j["classification"] = r.classification;
  j["checks"] = ordered_json::array();
  for (const CheckResult& c : r.checks) j["checks"].push_back(to_json(c));
  return j;
}

ordered_json to_json(const DynamicFeedback& fb) {
  ordered_json j;
  j["p"] = fb.p();
  j["compensator_states"] = fb.completion.names;
  j["new_inputs"] = fb.new_inputs;
  if (fb.symbolic) {
    j["alpha"] = printed(fb.alpha);
    j["beta"] = printed(fb.beta);
  } else {
    j["alpha"] = "numeric";
    j["beta"] = "numeric";
  }
  ordered_json completion = ordered_json::array();
  for (std::size_t i = 0; i < fb.completion.f_z.size(); ++i)
    completion.push_back(fb.completion.names[i] + " = " + to_string(fb.completion.f_z[i]));
  j["completion"] = completion;
  j["chains"] = chain_lengths(fb);
  return j;
}

}  // namespace flatdt
