#pragma once

// Immutable symbolic expression trees over coordinates q_i, velocities v_i,
// time t, a group parameter and named constants.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace noether {

class ExprError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a binding is missing during evaluation.
class EvalError : public ExprError {
 public:
  using ExprError::ExprError;
};

/// Raised when evaluation leaves the real domain (sqrt of a negative,
/// division by (near) zero, non-finite result).
class DomainError : public EvalError {
 public:
  using EvalError::EvalError;
};

enum class SymbolKind { coordinate, velocity, time, parameter, constant };

/// A leaf symbol. Coordinates and velocities carry a 0-based index; the
/// printed names are 1-based (q1, v1, ...).
struct Symbol {
  SymbolKind kind = SymbolKind::constant;
  int index = 0;
  std::string name;

  static Symbol coordinate(int i) { return {SymbolKind::coordinate, i, "q" + std::to_string(i + 1)}; }
  static Symbol velocity(int i) { return {SymbolKind::velocity, i, "v" + std::to_string(i + 1)}; }
  static Symbol time() { return {SymbolKind::time, 0, "t"}; }
  static Symbol parameter(std::string n = "s") { return {SymbolKind::parameter, 0, std::move(n)}; }
  static Symbol constant(std::string n) { return {SymbolKind::constant, 0, std::move(n)}; }

  bool is_variable() const {
    return kind == SymbolKind::coordinate || kind == SymbolKind::velocity || kind == SymbolKind::time;
  }

  friend bool operator==(const Symbol& a, const Symbol& b) {
    return a.kind == b.kind && a.index == b.index && a.name == b.name;
  }
  friend bool operator<(const Symbol& a, const Symbol& b) {
    return std::tie(a.kind, a.index, a.name) < std::tie(b.kind, b.index, b.name);
  }
};

using Bindings = std::map<Symbol, double>;

/// Exact rational with 64-bit parts; arithmetic reports overflow through
/// std::nullopt so callers can fall back to doubles.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static std::optional<Rational> make(__int128 n, __int128 d) {
    if (d == 0) return std::nullopt;
    if (d < 0) { n = -n; d = -d; }
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) { __int128 r = a % b; a = b; b = r; }
    if (a > 1) { n /= a; d /= a; }
    constexpr __int128 lim = INT64_MAX;
    if (n > lim || n < -lim || d > lim) return std::nullopt;
    return Rational{static_cast<std::int64_t>(n), static_cast<std::int64_t>(d)};
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool is_integer() const { return den == 1; }

  friend std::optional<Rational> operator+(Rational a, Rational b) {
    return make(static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den,
                static_cast<__int128>(a.den) * b.den);
  }
  friend std::optional<Rational> operator*(Rational a, Rational b) {
    return make(static_cast<__int128>(a.num) * b.num, static_cast<__int128>(a.den) * b.den);
  }
  friend bool operator==(const Rational&, const Rational&) = default;
};

/// Numeric literal: exact when representable as a Rational.
struct Number {
  double value = 0.0;
  std::optional<Rational> exact = Rational{0, 1};

  static Number of(Rational r) { return {r.value(), r}; }
  static Number of(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.0e15)
      return {v, Rational{static_cast<std::int64_t>(v), 1}};
    return {v, std::nullopt};
  }
};

enum class Op { number, symbol, add, mul, pow, sin, cos, exp, sqrt };

struct ExprNode;

/// Value-semantic handle to an immutable expression node. Copies share the
/// node; expressions can be read concurrently.
class Expr {
 public:
  Expr();
  Expr(double v);  // NOLINT(google-explicit-constructor)
  Expr(int v) : Expr(static_cast<double>(v)) {}  // NOLINT(google-explicit-constructor)
  explicit Expr(Rational r);
  explicit Expr(Symbol s);

  Op op() const;
  const Number& number() const;
  const Symbol& symbol() const;
  std::span<const Expr> args() const;
  const Rational& exponent() const;

  bool is_number() const { return op() == Op::number; }
  bool is_number(double v) const { return is_number() && number().value == v; }
  bool is_zero() const { return is_number(0.0); }
  bool is_one() const { return is_number(1.0); }

  const ExprNode* node() const { return node_.get(); }

 private:
  friend Expr make_node(ExprNode);
  explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}
  std::shared_ptr<const ExprNode> node_;
};

struct ExprNode {
  Op op = Op::number;
  Number num;
  Symbol sym;
  std::vector<Expr> args;
  Rational exponent{1, 1};
};

inline Expr make_node(ExprNode n) { return Expr(std::make_shared<const ExprNode>(std::move(n))); }

inline Expr::Expr() : Expr(0.0) {}
inline Expr::Expr(double v) : node_(std::make_shared<const ExprNode>(ExprNode{Op::number, Number::of(v), {}, {}, {}})) {}
inline Expr::Expr(Rational r) : node_(std::make_shared<const ExprNode>(ExprNode{Op::number, Number::of(r), {}, {}, {}})) {}
inline Expr::Expr(Symbol s) : node_(std::make_shared<const ExprNode>(ExprNode{Op::symbol, {}, std::move(s), {}, {}})) {}

inline Op Expr::op() const { return node_->op; }
inline const Number& Expr::number() const { return node_->num; }
inline const Symbol& Expr::symbol() const { return node_->sym; }
inline std::span<const Expr> Expr::args() const { return node_->args; }
inline const Rational& Expr::exponent() const { return node_->exponent; }

// ---------------------------------------------------------------------------
// Construction with light normalization: flattening, numeric folding, and
// removal of additive zeros / multiplicative ones. No like-term collection.

namespace detail {

inline Number add_numbers(const Number& a, const Number& b) {
  if (a.exact && b.exact)
    if (auto r = *a.exact + *b.exact) return Number::of(*r);
  return {a.value + b.value, std::nullopt};
}

inline Number mul_numbers(const Number& a, const Number& b) {
  if (a.exact && b.exact)
    if (auto r = *a.exact * *b.exact) return Number::of(*r);
  return {a.value * b.value, std::nullopt};
}

inline std::optional<Number> pow_number(const Number& base, Rational e) {
  if (e.is_integer() && base.exact && std::abs(e.num) <= 64) {
    Rational acc{1, 1};
    Rational b = *base.exact;
    if (e.num < 0) {
      if (b.num == 0) return std::nullopt;
      auto inv = Rational::make(b.den, b.num);
      if (!inv) return std::nullopt;
      b = *inv;
    }
    bool ok = true;
    for (std::int64_t i = 0; i < std::abs(e.num) && ok; ++i) {
      auto r = acc * b;
      if (r) acc = *r; else ok = false;
    }
    if (ok) return Number::of(acc);
  }
  if (base.value < 0.0 && !e.is_integer()) return std::nullopt;
  if (base.value == 0.0 && e.num < 0) return std::nullopt;
  return Number::of(std::pow(base.value, e.value()));
}

}  // namespace detail

inline Expr make_number(const Number& n) {
  if (n.exact) return Expr(*n.exact);
  return Expr(n.value);
}

inline Expr add(std::vector<Expr> terms) {
  std::vector<Expr> out;
  Number acc = Number::of(Rational{0, 1});
  bool has_number = false;
  for (auto& t : terms) {
    if (t.op() == Op::add) {
      for (const auto& u : t.args()) {
        if (u.is_number()) { acc = detail::add_numbers(acc, u.number()); has_number = true; }
        else out.push_back(u);
      }
    } else if (t.is_number()) {
      acc = detail::add_numbers(acc, t.number());
      has_number = true;
    } else {
      out.push_back(std::move(t));
    }
  }
  if (has_number && acc.value != 0.0) out.insert(out.begin(), make_number(acc));
  if (out.empty()) return make_number(has_number ? acc : Number::of(Rational{0, 1}));
  if (out.size() == 1) return out.front();
  return make_node(ExprNode{Op::add, {}, {}, std::move(out), {}});
}

inline bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.node() == b.node()) return true;
  if (a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::number: return a.number().value == b.number().value;
    case Op::symbol: return a.symbol() == b.symbol();
    case Op::pow:
      if (!(a.exponent() == b.exponent())) return false;
      break;
    default: break;
  }
  if (a.args().size() != b.args().size()) return false;
  for (std::size_t i = 0; i < a.args().size(); ++i)
    if (!structurally_equal(a.args()[i], b.args()[i])) return false;
  return true;
}

Expr pow(const Expr& base, Rational e);

inline Expr mul(std::vector<Expr> factors) {
  // Factors are kept as (base, exponent) so repeated bases merge.
  std::vector<std::pair<Expr, Rational>> out;
  Number coef = Number::of(Rational{1, 1});
  auto absorb = [&](const Expr& f) {
    if (f.is_number()) {
      coef = detail::mul_numbers(coef, f.number());
      return;
    }
    const Expr base = f.op() == Op::pow ? f.args()[0] : f;
    const Rational ex = f.op() == Op::pow ? f.exponent() : Rational{1, 1};
    for (auto& [b, e] : out) {
      if (structurally_equal(b, base)) {
        // Merge only integer exponents; half powers need sign care.
        if (auto sum = e + ex; sum && e.is_integer() && ex.is_integer()) {
          e = *sum;
          return;
        }
      }
    }
    out.emplace_back(base, ex);
  };
  for (const auto& f : factors) {
    if (f.op() == Op::mul) for (const auto& g : f.args()) absorb(g);
    else absorb(f);
  }
  if (coef.value == 0.0) return Expr(0);
  std::vector<Expr> args;
  for (const auto& [b, e] : out) {
    Expr f = pow(b, e);
    if (f.is_number()) coef = detail::mul_numbers(coef, f.number());
    else if (f.op() == Op::mul) for (const auto& g : f.args()) args.push_back(g);
    else args.push_back(std::move(f));
  }
  if (coef.value == 0.0) return Expr(0);
  if (args.empty()) return make_number(coef);
  if (coef.value != 1.0) args.insert(args.begin(), make_number(coef));
  if (args.size() == 1) return args.front();
  return make_node(ExprNode{Op::mul, {}, {}, std::move(args), {}});
}

inline Expr pow(const Expr& base, Rational e) {
  if (e.num == 0) return Expr(1);
  if (e == Rational{1, 1}) return base;
  if (base.is_number())
    if (auto n = detail::pow_number(base.number(), e)) return make_number(*n);
  if (e.is_integer() && e.num % 2 == 0 && base.op() == Op::mul && base.args()[0].is_number() &&
      base.args()[0].number().value == -1.0) {
    std::vector<Expr> rest(base.args().begin() + 1, base.args().end());
    return pow(mul(std::move(rest)), e);
  }
  if (base.op() == Op::pow) {
    // (b^a)^e = b^(a e) is valid for integer e.
    if (e.is_integer())
      if (auto r = base.exponent() * e) return pow(base.args()[0], *r);
  }
  return make_node(ExprNode{Op::pow, {}, {}, {base}, e});
}

inline Expr pow(const Expr& base, int e) { return pow(base, Rational{e, 1}); }

namespace detail {
inline Expr unary(Op op, const Expr& a) { return make_node(ExprNode{op, {}, {}, {a}, {}}); }
}  // namespace detail

inline Expr sin(const Expr& a) {
  if (a.is_zero()) return Expr(0);
  if (a.is_number()) return Expr(std::sin(a.number().value));
  return detail::unary(Op::sin, a);
}
inline Expr cos(const Expr& a) {
  if (a.is_zero()) return Expr(1);
  if (a.is_number()) return Expr(std::cos(a.number().value));
  return detail::unary(Op::cos, a);
}
inline Expr exp(const Expr& a) {
  if (a.is_zero()) return Expr(1);
  if (a.is_number()) return Expr(std::exp(a.number().value));
  return detail::unary(Op::exp, a);
}
inline Expr sqrt(const Expr& a) {
  if (a.is_number()) {
    const double v = a.number().value;
    if (v >= 0.0) {
      const double r = std::sqrt(v);
      if (a.number().exact) {
        const Rational q = *a.number().exact;
        const auto rn = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(q.num))));
        const auto rd = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(q.den))));
        if (rn * rn == q.num && rd * rd == q.den) return Expr(Rational{rn, rd});
      }
      return Expr(r);
    }
  }
  return detail::unary(Op::sqrt, a);
}

inline Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
inline Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
inline Expr operator-(const Expr& a) { return mul({Expr(-1), a}); }
inline Expr operator-(const Expr& a, const Expr& b) { return add({a, -b}); }
inline Expr operator/(const Expr& a, const Expr& b) { return mul({a, pow(b, -1)}); }
inline Expr& operator+=(Expr& a, const Expr& b) { return a = a + b; }

inline Expr sym(Symbol s) { return Expr(std::move(s)); }
inline Expr q(int i) { return Expr(Symbol::coordinate(i)); }
inline Expr v(int i) { return Expr(Symbol::velocity(i)); }
inline Expr t() { return Expr(Symbol::time()); }
inline Expr constant(std::string name) { return Expr(Symbol::constant(std::move(name))); }
inline Expr half() { return Expr(Rational{1, 2}); }

// ---------------------------------------------------------------------------
// Structural queries

inline bool depends_on(const Expr& e, const Symbol& s) {
  if (e.op() == Op::symbol) return e.symbol() == s;
  for (const auto& a : e.args())
    if (depends_on(a, s)) return true;
  return false;
}

template <class Pred>
bool depends_on_any(const Expr& e, Pred&& pred) {
  if (e.op() == Op::symbol) return pred(e.symbol());
  for (const auto& a : e.args())
    if (depends_on_any(a, pred)) return true;
  return false;
}

inline void collect_symbols(const Expr& e, std::set<Symbol>& out) {
  if (e.op() == Op::symbol) out.insert(e.symbol());
  for (const auto& a : e.args()) collect_symbols(a, out);
}

inline std::set<Symbol> free_symbols(const Expr& e) {
  std::set<Symbol> out;
  collect_symbols(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Differentiation: exact partial derivative, every symbol independent.

inline Expr diff(const Expr& e, const Symbol& s) {
  if (!depends_on(e, s)) return Expr(0);
  switch (e.op()) {
    case Op::number:
      return Expr(0);
    case Op::symbol:
      return Expr(1);
    case Op::add: {
      std::vector<Expr> terms;
      for (const auto& a : e.args()) terms.push_back(diff(a, s));
      return add(std::move(terms));
    }
    case Op::mul: {
      std::vector<Expr> terms;
      const auto args = e.args();
      for (std::size_t i = 0; i < args.size(); ++i) {
        Expr d = diff(args[i], s);
        if (d.is_zero()) continue;
        std::vector<Expr> f;
        for (std::size_t j = 0; j < args.size(); ++j) f.push_back(j == i ? d : args[j]);
        terms.push_back(mul(std::move(f)));
      }
      return add(std::move(terms));
    }
    case Op::pow: {
      const Rational r = e.exponent();
      const auto rm1 = r + Rational{-1, 1};
      const Expr base = e.args()[0];
      return mul({Expr(r), pow(base, *rm1), diff(base, s)});
    }
    case Op::sin: {
      const Expr a = e.args()[0];
      return mul({cos(a), diff(a, s)});
    }
    case Op::cos: {
      const Expr a = e.args()[0];
      return mul({Expr(-1), sin(a), diff(a, s)});
    }
    case Op::exp: {
      const Expr a = e.args()[0];
      return mul({e, diff(a, s)});
    }
    case Op::sqrt: {
      const Expr a = e.args()[0];
      return mul({half(), diff(a, s), pow(e, -1)});
    }
  }
  return Expr(0);
}

// ---------------------------------------------------------------------------
// Simultaneous substitution: replacements are not re-substituted.

using Substitution = std::map<Symbol, Expr>;

inline Expr rebuild(const Expr& e, std::vector<Expr> args) {
  switch (e.op()) {
    case Op::add: return add(std::move(args));
    case Op::mul: return mul(std::move(args));
    case Op::pow: return pow(args[0], e.exponent());
    case Op::sin: return sin(args[0]);
    case Op::cos: return cos(args[0]);
    case Op::exp: return exp(args[0]);
    case Op::sqrt: return sqrt(args[0]);
    default: return e;
  }
}

inline Expr substitute(const Expr& e, const Substitution& map) {
  if (map.empty()) return e;
  if (e.op() == Op::symbol) {
    auto it = map.find(e.symbol());
    return it == map.end() ? e : it->second;
  }
  if (e.op() == Op::number) return e;
  std::vector<Expr> args;
  args.reserve(e.args().size());
  for (const auto& a : e.args()) args.push_back(substitute(a, map));
  return rebuild(e, std::move(args));
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
  /// Negative powers and sqrt arguments with magnitude at or below this
  /// threshold raise DomainError. Zero only rejects exact singularities.
  double singular_guard = 0.0;
};

inline double eval(const Expr& e, const Bindings& b, const EvalOptions& opt = {}) {
  switch (e.op()) {
    case Op::number:
      return e.number().value;
    case Op::symbol: {
      auto it = b.find(e.symbol());
      if (it == b.end()) throw EvalError("missing binding for '" + e.symbol().name + "'");
      return it->second;
    }
    case Op::add: {
      double s = 0.0;
      for (const auto& a : e.args()) s += eval(a, b, opt);
      return s;
    }
    case Op::mul: {
      double p = 1.0;
      for (const auto& a : e.args()) p *= eval(a, b, opt);
      return p;
    }
    case Op::pow: {
      const double x = eval(e.args()[0], b, opt);
      const Rational r = e.exponent();
      if (r.num < 0 && std::abs(x) <= opt.singular_guard) throw DomainError("division by zero");
      double out = 0.0;
      if (r.is_integer()) {
        out = std::pow(x, static_cast<double>(r.num));
      } else {
        if (x < 0.0) throw DomainError("fractional power of a negative number");
        out = std::pow(x, r.value());
      }
      if (!std::isfinite(out)) throw DomainError("non-finite power");
      return out;
    }
    case Op::sin: return std::sin(eval(e.args()[0], b, opt));
    case Op::cos: return std::cos(eval(e.args()[0], b, opt));
    case Op::exp: {
      const double out = std::exp(eval(e.args()[0], b, opt));
      if (!std::isfinite(out)) throw DomainError("exp overflow");
      return out;
    }
    case Op::sqrt: {
      const double x = eval(e.args()[0], b, opt);
      if (x < 0.0) throw DomainError("sqrt of a negative number");
      return std::sqrt(x);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Printing. Output is valid input for parse_expr.

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  // Bare exponent forms like 1e-05 parse fine; keep as is.
  return s;
}

inline std::string format_number(const Number& n) {
  if (n.exact) {
    if (n.exact->den == 1) return std::to_string(n.exact->num);
    return std::to_string(n.exact->num) + "/" + std::to_string(n.exact->den);
  }
  return format_double(n.value);
}

// Precedence levels: 1 sum, 2 product, 3 power operand, 4 atom.
inline int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::add: return 1;
    case Op::mul: return 2;
    case Op::pow: return 3;
    case Op::number: {
      if (e.number().value < 0.0) return 1;
      if (e.number().exact && e.number().exact->den != 1) return 2;
      return 4;
    }
    default: return 4;
  }
}

std::string print_impl(const Expr& e);

inline std::string wrap(const Expr& e, int min_prec) {
  std::string s = print_impl(e);
  return precedence(e) < min_prec ? "(" + s + ")" : s;
}

inline bool is_negative_term(const Expr& e) {
  if (e.is_number()) return e.number().value < 0.0;
  return e.op() == Op::mul && e.args()[0].is_number() && e.args()[0].number().value < 0.0;
}

inline std::string print_product(const Expr& e) {
  std::vector<std::string> num, den;
  std::string sign;
  for (const auto& f : e.args()) {
    if (f.is_number()) {
      Number n = f.number();
      if (n.value < 0.0) {
        sign = "-";
        n = detail::mul_numbers(n, Number::of(Rational{-1, 1}));
      }
      if (n.value == 1.0) continue;
      if (n.exact && n.exact->den != 1) {
        if (n.exact->num != 1) num.push_back(std::to_string(n.exact->num));
        den.push_back(std::to_string(n.exact->den));
      } else {
        num.push_back(format_number(n));
      }
    } else if (f.op() == Op::pow && f.exponent().num < 0) {
      Rational r{-f.exponent().num, f.exponent().den};
      den.push_back(wrap(pow(f.args()[0], r), 3));
    } else {
      num.push_back(wrap(f, 2));
    }
  }
  std::string out = sign;
  if (num.empty()) out += "1";
  for (std::size_t i = 0; i < num.size(); ++i) out += (i ? "*" : "") + num[i];
  if (!den.empty()) {
    if (den.size() == 1) {
      out += "/" + den[0];
    } else {
      out += "/(";
      for (std::size_t i = 0; i < den.size(); ++i) out += (i ? "*" : "") + den[i];
      out += ")";
    }
  }
  return out;
}

inline std::string print_impl(const Expr& e) {
  switch (e.op()) {
    case Op::number: return format_number(e.number());
    case Op::symbol: return e.symbol().name;
    case Op::add: {
      std::string out;
      bool first = true;
      for (const auto& a : e.args()) {
        if (first) {
          out = print_impl(a);
        } else if (is_negative_term(a)) {
          out += " - " + wrap(-a, 2);
        } else {
          out += " + " + print_impl(a);
        }
        first = false;
      }
      return out;
    }
    case Op::mul: return print_product(e);
    case Op::pow: {
      const Rational r = e.exponent();
      std::string ex = r.den == 1 && r.num >= 0 ? std::to_string(r.num)
                                                : "(" + std::to_string(r.num) + (r.den == 1 ? "" : "/" + std::to_string(r.den)) + ")";
      return wrap(e.args()[0], 4) + "^" + ex;
    }
    case Op::sin: return "sin(" + print_impl(e.args()[0]) + ")";
    case Op::cos: return "cos(" + print_impl(e.args()[0]) + ")";
    case Op::exp: return "exp(" + print_impl(e.args()[0]) + ")";
    case Op::sqrt: return "sqrt(" + print_impl(e.args()[0]) + ")";
  }
  return {};
}

}  // namespace detail

inline std::string to_string(const Expr& e) { return detail::print_impl(e); }

}  // namespace noether
