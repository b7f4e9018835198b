#include <cctype>
#include <charconv>
#include <limits>

#include "flatdt/errors.hpp"
#include "flatdt/expr.hpp"

namespace flatdt {

namespace {

// Grammar (whitespace insignificant):
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | base ('^' int)?
//   base   := number | ident shift? | ident '(' expr ')' | '(' expr ')'
//   shift  := '[' signedint ']'
// Unary minus binds looser than '^', so -x^2 is -(x^2).
class Parser {
 public:
  Parser(std::string_view text, const ParseOptions& options) : text_(text), options_(options) {}

  Expr parse() {
    Expr e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const { fail_at(message, pos_); }

  [[noreturn]] void fail_at(const std::string& message, std::size_t at) const {
    int line = 1;
    int column = 1;
    for (std::size_t i = 0; i < at && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(message, line, column);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = Expr::add(lhs, term());
      else if (accept('-'))
        lhs = Expr::sub(lhs, term());
      else
        return lhs;
    }
  }

  Expr term() {
    Expr lhs = factor();
    for (;;) {
      if (accept('*'))
        lhs = Expr::mul(lhs, factor());
      else if (accept('/'))
        lhs = Expr::div(lhs, factor());
      else
        return lhs;
    }
  }

  Expr factor() {
    if (accept('-')) return Expr::negate(factor());
    Expr b = base();
    if (accept('^')) {
      skip_ws();
      const std::size_t at = pos_;
      bool negative = false;
      if (accept('-')) negative = true;
      skip_ws();
      const std::string_view tok = number_token();
      if (tok.empty()) fail_at("expected integer exponent", at);
      if (tok.find_first_of(".eE") != std::string_view::npos) fail_at("non-integer exponent '" + std::string(tok) + "'", at);
      int k = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), k);
      if (ec != std::errc{}) fail_at("exponent out of range", at);
      b = Expr::pow(b, negative ? -k : k);
    }
    return b;
  }

  // Scans [0-9]*(.[0-9]*)?([eE][+-]?[0-9]+)? starting at pos_.
  std::string_view number_token() {
    const std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ > start && pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      const std::size_t exp_start = pos_;
      digits();
      if (pos_ == exp_start) pos_ = save;
    }
    return text_.substr(start, pos_ - start);
  }

  Expr base() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::size_t at = pos_;
      const std::string_view tok = number_token();
      double v = 0.0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || p != tok.data() + tok.size()) fail_at("malformed number '" + std::string(tok) + "'", at);
      return Expr::constant(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    if (accept('(')) {
      Expr inner = expr();
      expect(')');
      return inner;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
    std::string name(text_.substr(start, pos_ - start));
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      auto f = function_from_name(name);
      if (!f) fail_at("unknown function '" + name + "'", start);
      ++pos_;
      Expr arg = expr();
      expect(')');
      return Expr::call(*f, arg);
    }
    const bool is_parameter = options_.parameters.contains(name);
    if (accept('[')) {
      if (is_parameter) fail_at("parameter '" + name + "' cannot be shifted", start);
      skip_ws();
      bool negative = false;
      if (accept('-'))
        negative = true;
      else
        accept('+');
      skip_ws();
      const std::size_t at = pos_;
      const std::string_view tok = number_token();
      int k = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), k);
      if (tok.empty() || ec != std::errc{} || p != tok.data() + tok.size()) fail_at("expected integer shift", at);
      expect(']');
      return Expr::variable(std::move(name), negative ? -k : k);
    }
    if (is_parameter) return Expr::parameter(std::move(name));
    return Expr::variable(std::move(name), 0);
  }

  std::string_view text_;
  const ParseOptions& options_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(std::string_view text, const ParseOptions& options) { return Parser(text, options).parse(); }

}  // namespace flatdt
