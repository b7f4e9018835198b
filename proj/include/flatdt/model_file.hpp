#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flatdt/expr.hpp"
#include "flatdt/flatness.hpp"

namespace flatdt {

/// Contents of a `.fdt` model file: the system, its flatness certificate and
/// the optional pieces used by the feedback builder.
struct Model {
  FlatSpec spec;
  /// Compensator state names and their maps F_z over the output jet
  /// (empty when no state_completion section is present).
  std::vector<std::string> compensator_states;
  std::vector<Expr> f_z;
  /// Closed-form inverse of (F_x, F_z): output-jet coordinate -> expression
  /// over (x, z).
  std::optional<std::map<VarRef, Expr>> phi_hat;
};

/// Parses a model document. `source` names the document in error messages.
/// Throws ParseError (malformed expression, with file line/column) or
/// ModelError (unknown section, bad order, undeclared symbol, ...).
Model parse_model(std::string_view text, const std::string& source = "<model>");

Model load_model(const std::filesystem::path& path);

}  // namespace flatdt
