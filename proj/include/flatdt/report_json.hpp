#pragma once

#include <json.hpp>

#include "flatdt/feedback.hpp"
#include "flatdt/flatness.hpp"
#include "flatdt/system.hpp"

namespace flatdt {

nlohmann::ordered_json to_json(const CheckResult& c);
/// `{certified, classification, checks: [...]}`.
nlohmann::ordered_json to_json(const VerificationReport& r);
/// `{p, alpha, beta, completion, ...}`; alpha and beta are the string
/// "numeric" when the feedback has no closed form.
nlohmann::ordered_json to_json(const DynamicFeedback& fb);

}  // namespace flatdt
