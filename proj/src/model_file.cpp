#include "flatdt/model_file.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "flatdt/errors.hpp"

namespace flatdt {

namespace {

constexpr std::array<std::string_view, 14> kSections = {
    "system",     "params",      "states",           "inputs",          "ext_outputs", "dynamics",       "ext_map",
    "inverse",    "equilibrium", "flat_output",      "parameterization", "guards",      "state_completion", "phi_hat"};

constexpr std::array<std::string_view, 9> kRequired = {"system",  "states",      "inputs",      "ext_outputs",
                                                       "dynamics", "ext_map",    "equilibrium", "flat_output",
                                                       "parameterization"};

struct Line {
  int number;
  std::string text;  // comment stripped, not trimmed
};

struct Section {
  std::string name;
  int header_line = 0;
  std::string argument;
  std::vector<Line> body;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

int section_rank(std::string_view name) {
  auto it = std::find(kSections.begin(), kSections.end(), name);
  return it == kSections.end() ? -1 : static_cast<int>(it - kSections.begin());
}

std::vector<Section> split_sections(std::string_view text) {
  std::vector<Section> sections;
  std::istringstream in{std::string(text)};
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    const auto space = line.find_first_of(" \t");
    const std::string head = line.substr(0, space);
    const int rank = section_rank(head);
    const bool header = rank >= 0 && line.find('=') == std::string::npos;
    if (header) {
      if (!sections.empty() && section_rank(sections.back().name) >= rank)
        throw ModelError("section '" + head + "' out of order or repeated", number);
      Section s{head, number, space == std::string::npos ? "" : trim(line.substr(space)), {}};
      if (head != "system" && !s.argument.empty())
        throw ModelError("unexpected text after section keyword '" + head + "'", number);
      sections.push_back(std::move(s));
      continue;
    }
    if (sections.empty()) throw ModelError("expected 'system <name>' before any content", number);
    sections.back().body.push_back({number, raw});
  }
  if (sections.empty() || sections.front().name != "system") throw ModelError("missing 'system' section");
  for (std::string_view req : kRequired)
    if (std::none_of(sections.begin(), sections.end(), [&](const Section& s) { return s.name == req; }))
      throw ModelError("missing required section '" + std::string(req) + "'");
  return sections;
}

std::vector<std::pair<std::string, int>> name_list(const Section& s) {
  std::vector<std::pair<std::string, int>> names;
  for (const Line& l : s.body) {
    std::string text = l.text;
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream in(text);
    std::string name;
    while (in >> name) {
      if (!is_identifier(name)) throw ModelError("'" + name + "' is not a valid name in section '" + s.name + "'", l.number);
      names.emplace_back(name, l.number);
    }
  }
  return names;
}

struct Equation {
  int line;
  std::string lhs;
  Expr rhs;
};

class Loader {
 public:
  explicit Loader(std::string source) : source_(std::move(source)) {}

  Model load(std::string_view text) {
    const std::vector<Section> sections = split_sections(text);
    auto find = [&](std::string_view name) -> const Section* {
      for (const Section& s : sections)
        if (s.name == name) return &s;
      return nullptr;
    };

    Model model;
    SystemModel& sys = model.spec.system;
    sys.name = find("system")->argument;
    if (!is_identifier(sys.name)) throw ModelError("system name must be an identifier", find("system")->header_line);

    if (const Section* s = find("params")) {
      for (const Line& l : s->body) {
        auto [lhs, rhs_text, column] = split_equation(l);
        if (!is_identifier(lhs)) throw ModelError("parameter name '" + lhs + "' is invalid", l.number);
        if (sys.parameters.count(lhs)) throw ModelError("parameter '" + lhs + "' declared twice", l.number);
        declare(lhs, l.number);
        options_.parameters.insert(lhs);
        const Expr value = parse_at(rhs_text, l.number, column);
        sys.parameters[lhs] = constant_value(value, sys, l.number);
      }
    }

    sys.states = declare_all(*find("states"));
    sys.inputs = declare_all(*find("inputs"));
    sys.ext_outputs = declare_all(*find("ext_outputs"));
    if (sys.states.empty() || sys.inputs.empty()) throw ModelError("a model needs at least one state and one input");
    if (sys.ext_outputs.size() != sys.inputs.size())
      throw ModelError("ext_outputs must declare exactly one name per input", find("ext_outputs")->header_line);

    const std::set<std::string> xu = names_of(sys.states, sys.inputs);
    sys.f = rows_for(*find("dynamics"), sys.states, [&](const VarRef& v) { return xu.count(v.name) && v.shift == 0; },
                     "dynamics may only use x and u without shifts");
    sys.g = rows_for(*find("ext_map"), sys.ext_outputs,
                     [&](const VarRef& v) { return xu.count(v.name) && v.shift == 0; },
                     "ext_map may only use x and u without shifts");

    if (const Section* s = find("inverse")) {
      const std::set<std::string> zeta(sys.ext_outputs.begin(), sys.ext_outputs.end());
      const std::set<std::string> x(sys.states.begin(), sys.states.end());
      std::vector<std::string> lhs = sys.states;
      lhs.insert(lhs.end(), sys.inputs.begin(), sys.inputs.end());
      sys.psi = rows_for(
          *s, lhs, [&](const VarRef& v) { return (x.count(v.name) && v.shift == 0) || (zeta.count(v.name) && v.shift == -1); },
          "inverse rows may only use x and the extension outputs at shift -1");
    }

    {
      const Section& s = *find("equilibrium");
      std::vector<std::string> lhs = sys.states;
      lhs.insert(lhs.end(), sys.inputs.begin(), sys.inputs.end());
      const std::vector<Expr> rows = rows_for(s, lhs, [](const VarRef&) { return false; }, "equilibrium values must be numbers");
      sys.x0.resize(sys.n());
      sys.u0.resize(sys.m());
      for (int i = 0; i < sys.n(); ++i) sys.x0[i] = constant_value(rows[i], sys, s.header_line);
      for (int j = 0; j < sys.m(); ++j) sys.u0[j] = constant_value(rows[sys.n() + j], sys, s.header_line);
    }

    FlatSpec& spec = model.spec;
    {
      const Section& s = *find("flat_output");
      const std::set<std::string> x(sys.states.begin(), sys.states.end());
      const std::set<std::string> u(sys.inputs.begin(), sys.inputs.end());
      const std::set<std::string> zeta(sys.ext_outputs.begin(), sys.ext_outputs.end());
      for (const Equation& e : equations(s)) {
        if (!is_identifier(e.lhs)) throw ModelError("flat output name '" + e.lhs + "' is invalid", e.line);
        declare(e.lhs, e.line);
        check_vars(e, [&](const VarRef& v) {
          return (x.count(v.name) && v.shift == 0) || (u.count(v.name) && v.shift >= 0) ||
                 (zeta.count(v.name) && v.shift < 0);
        }, "a flat output may use x, u and forward shifts of u, and backward shifts of the extension outputs");
        spec.outputs.push_back(e.lhs);
        spec.phi.push_back(e.rhs);
      }
      if (spec.m() != sys.m())
        throw ModelError("flat_output must define " + std::to_string(sys.m()) + " components", s.header_line);
    }

    const std::set<std::string> y(spec.outputs.begin(), spec.outputs.end());
    auto over_outputs = [&](const VarRef& v) { return y.count(v.name) > 0; };
    {
      std::vector<std::string> lhs = sys.states;
      lhs.insert(lhs.end(), sys.inputs.begin(), sys.inputs.end());
      std::vector<Expr> F = rows_for(*find("parameterization"), lhs, over_outputs,
                                     "the parameterization may only use flat output coordinates");
      spec.f_x.assign(F.begin(), F.begin() + sys.n());
      spec.f_u.assign(F.begin() + sys.n(), F.end());
    }

    if (const Section* s = find("guards")) {
      for (const Line& l : s->body) {
        const Expr g = parse_at(l.text, l.number, 1);
        check_vars({l.number, "", g}, over_outputs, "guards may only use flat output coordinates");
        spec.guards.push_back(g);
      }
    }

    if (const Section* s = find("state_completion")) {
      for (const Equation& e : equations(*s)) {
        if (!is_identifier(e.lhs)) throw ModelError("compensator state name '" + e.lhs + "' is invalid", e.line);
        declare(e.lhs, e.line);
        check_vars(e, over_outputs, "state_completion may only use flat output coordinates");
        model.compensator_states.push_back(e.lhs);
        model.f_z.push_back(e.rhs);
      }
    }

    if (const Section* s = find("phi_hat")) {
      if (model.compensator_states.empty() && s->body.size() > 0 && !find("state_completion"))
        throw ModelError("phi_hat requires a state_completion section", s->header_line);
      const std::set<std::string> xz = names_of(sys.states, model.compensator_states);
      std::map<VarRef, Expr> rules;
      for (const Line& l : s->body) {
        auto [lhs_text, rhs_text, column] = split_equation(l);
        const Expr lhs = parse_at(lhs_text, l.number, 1);
        if (lhs.op() != Op::Variable || !y.count(lhs.var().name))
          throw ModelError("phi_hat left-hand side must be a flat output coordinate", l.number);
        const Expr rhs = parse_at(rhs_text, l.number, column);
        check_vars({l.number, lhs_text, rhs},
                   [&](const VarRef& v) { return xz.count(v.name) && v.shift == 0; },
                   "phi_hat rows may only use x and the compensator states");
        if (!rules.emplace(lhs.var(), rhs).second)
          throw ModelError("phi_hat defines " + to_string(lhs.var()) + " twice", l.number);
      }
      model.phi_hat = std::move(rules);
    }
    return model;
  }

 private:
  std::tuple<std::string, std::string, int> split_equation(const Line& l) const {
    const auto eq = l.text.find('=');
    if (eq == std::string::npos) throw ModelError("expected 'name = expression'", l.number);
    std::string lhs = trim(std::string_view(l.text).substr(0, eq));
    if (lhs.empty()) throw ModelError("missing left-hand side", l.number);
    return {lhs, l.text.substr(eq + 1), static_cast<int>(eq) + 2};
  }

  Expr parse_at(const std::string& text, int line, int column) const {
    try {
      return parse_expr(text, options_);
    } catch (const ParseError& e) {
      throw ParseError(e.bare_message(), line, column + e.column() - 1);
    }
  }

  std::vector<Equation> equations(const Section& s) const {
    std::vector<Equation> out;
    for (const Line& l : s.body) {
      auto [lhs, rhs, column] = split_equation(l);
      out.push_back({l.number, lhs, parse_at(rhs, l.number, column)});
    }
    return out;
  }

  template <typename Pred>
  void check_vars(const Equation& e, Pred ok, const std::string& rule) const {
    for (const VarRef& v : variables_of(e.rhs)) {
      if (!declared_.count(v.name)) throw ModelError("undeclared symbol '" + v.name + "'", e.line);
      if (!ok(v)) throw ModelError("'" + to_string(v) + "' not allowed here: " + rule, e.line);
    }
  }

  // One equation per name in `order`, returned in that order.
  template <typename Pred>
  std::vector<Expr> rows_for(const Section& s, const std::vector<std::string>& order, Pred ok,
                             const std::string& rule) const {
    std::map<std::string, Expr> by_name;
    for (const Equation& e : equations(s)) {
      if (std::find(order.begin(), order.end(), e.lhs) == order.end())
        throw ModelError("'" + e.lhs + "' is not a valid left-hand side in section '" + s.name + "'", e.line);
      check_vars(e, ok, rule);
      if (!by_name.emplace(e.lhs, e.rhs).second)
        throw ModelError("'" + e.lhs + "' defined twice in section '" + s.name + "'", e.line);
    }
    std::vector<Expr> rows;
    for (const std::string& name : order) {
      auto it = by_name.find(name);
      if (it == by_name.end()) throw ModelError("section '" + s.name + "' has no equation for '" + name + "'", s.header_line);
      rows.push_back(it->second);
    }
    return rows;
  }

  double constant_value(const Expr& e, const SystemModel& sys, int line) const {
    if (!variables_of(e).empty()) throw ModelError("expected a numeric value", line);
    try {
      return eval_expr(e, sys.parameter_binding());
    } catch (const Error& err) {
      throw ModelError(std::string("cannot evaluate value: ") + err.what(), line);
    }
  }

  void declare(const std::string& name, int line) {
    if (function_from_name(name)) throw ModelError("'" + name + "' is a function name", line);
    if (!declared_.insert(name).second) throw ModelError("name '" + name + "' declared twice", line);
  }

  std::vector<std::string> declare_all(const Section& s) {
    std::vector<std::string> names;
    for (const auto& [name, line] : name_list(s)) {
      declare(name, line);
      names.push_back(name);
    }
    return names;
  }

  static std::set<std::string> names_of(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> out(a.begin(), a.end());
    out.insert(b.begin(), b.end());
    return out;
  }

  std::string source_;
  ParseOptions options_;
  std::set<std::string> declared_;
};

}  // namespace

Model parse_model(std::string_view text, const std::string& source) { return Loader(source).load(text); }

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_model(buffer.str(), path.string());
}

}  // namespace flatdt
