#pragma once

// Recursive-descent parser for the Lagrangian DSL.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          exponent: constant k or k/2
//   primary := number | ident | func '(' expr ')' | '(' expr ')'
//   func    := 'sin' | 'cos' | 'exp' | 'sqrt'
//   ident   := q<i> | v<i> (1 <= i <= n_dof) | 't' | <parameter> | constant
//
// The full grammar is documented in docs/dsl.md.

#include <cctype>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "noether/expr.hpp"

namespace noether {

class ParseError : public ExprError {
 public:
  ParseError(const std::string& msg, std::size_t pos)
      : ExprError(msg + " at position " + std::to_string(pos)), position_(pos) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

struct ParseOptions {
  /// Identifier bound to the group parameter.
  std::string parameter = "s";
  /// When set, identifiers outside this set (and not q/v/t/parameter) are
  /// rejected as unknown instead of becoming named constants.
  std::optional<std::set<std::string>> constants;
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, int n_dof, const ParseOptions& opt) : s_(text), n_(n_dof), opt_(opt) {}

  Expr run() {
    Expr e = expr();
    skip_ws();
    if (pos_ != s_.size()) fail(std::string("unexpected '") + s_[pos_] + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) { ++pos_; return true; }
    return false;
  }

  Expr expr() {
    Expr acc = term();
    for (;;) {
      if (accept('+')) acc = acc + term();
      else if (accept('-')) acc = acc - term();
      else return acc;
    }
  }

  Expr term() {
    Expr acc = unary();
    for (;;) {
      if (accept('*')) acc = acc * unary();
      else if (accept('/')) acc = acc / unary();
      else return acc;
    }
  }

  Expr unary() {
    if (accept('-')) return -unary();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (!accept('^')) return base;
    const std::size_t at = pos_;
    Expr ex = unary();
    if (!ex.is_number() || !ex.number().exact || (ex.number().exact->den != 1 && ex.number().exact->den != 2))
      throw ParseError("exponent must be a constant integer or half-integer", at);
    return pow(base, *ex.number().exact);
  }

  Expr primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail(std::string("unexpected '") + c + "'");
  }

  Expr number() {
    const std::size_t start = pos_;
    __int128 mant = 0;
    int scale = 0;
    bool overflow = false, digits = false;
    auto take_digit = [&](char d, bool frac) {
      digits = true;
      if (mant < static_cast<__int128>(1e30)) {
        mant = mant * 10 + (d - '0');
        if (frac) --scale;
      } else if (!frac) {
        ++scale;
        overflow = true;
      }
    };
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) take_digit(s_[pos_++], false);
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) take_digit(s_[pos_++], true);
    }
    if (!digits) throw ParseError("malformed number", start);
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      int sign = 1;
      if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) { sign = s_[p] == '-' ? -1 : 1; ++p; }
      if (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) {
        int ex = 0;
        while (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) ex = std::min(ex * 10 + (s_[p++] - '0'), 400);
        scale += sign * ex;
        pos_ = p;
      }
    }
    const std::string text(s_.substr(start, pos_ - start));
    if (!overflow && scale >= -18 && scale <= 18) {
      __int128 p10 = 1;
      for (int i = 0; i < std::abs(scale); ++i) p10 *= 10;
      auto r = scale >= 0 ? Rational::make(mant * p10, 1) : Rational::make(mant, p10);
      if (r) return Expr(*r);
    }
    return Expr(std::stod(text));
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    const std::string id(s_.substr(start, pos_ - start));
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      ++pos_;
      Expr a = expr();
      if (!accept(')')) fail("expected ')'");
      if (id == "sin") return sin(a);
      if (id == "cos") return cos(a);
      if (id == "exp") return exp(a);
      if (id == "sqrt") return sqrt(a);
      throw ParseError("unknown function '" + id + "'", start);
    }
    if (id == "t") return t();
    if (id == opt_.parameter) return Expr(Symbol::parameter(id));
    if ((id[0] == 'q' || id[0] == 'v') && id.size() > 1 &&
        id.find_first_not_of("0123456789", 1) == std::string::npos) {
      const int i = std::stoi(id.substr(1));
      if (i < 1 || i > n_)
        throw ParseError(std::string(id[0] == 'q' ? "coordinate" : "velocity") + " index out of range in '" + id + "'",
                         start);
      return id[0] == 'q' ? q(i - 1) : v(i - 1);
    }
    if (opt_.constants && !opt_.constants->contains(id)) throw ParseError("unknown identifier '" + id + "'", start);
    return constant(id);
  }

  std::string_view s_;
  int n_;
  const ParseOptions& opt_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse_expr(std::string_view text, int n_dof, const ParseOptions& opt = {}) {
  return detail::Parser(text, n_dof, opt).run();
}

}  // namespace noether
