#pragma once

// Probabilistic identity testing and polynomial coefficient extraction.
//
// Two expressions are treated as equal when they agree at a number of
// pseudo-random points. Every free symbol not held in Probe::fixed is drawn
// uniformly from [lo, hi] with a seeded mt19937_64, in Symbol order. Points
// where evaluation hits a (near-)singularity are rejected and redrawn.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "noether/expr.hpp"

namespace noether {

struct Probe {
  std::uint64_t seed = 20240917;
  int trials = 16;
  double tol = 1e-10;
  double lo = -2.0;
  double hi = 2.0;
  int max_rejections = 500;
  double singular_guard = 1e-3;
  /// Symbols held at these values instead of being sampled.
  Bindings fixed;
};

/// Calls fn(bindings) at probe.trials random points covering `universe`.
/// fn may throw DomainError to reject a point. Returns the number of
/// accepted samples.
template <class Fn>
int for_each_sample(const std::set<Symbol>& universe, const Probe& probe, Fn&& fn) {
  std::mt19937_64 rng(probe.seed);
  std::uniform_real_distribution<double> dist(probe.lo, probe.hi);
  int accepted = 0, rejected = 0;
  while (accepted < probe.trials) {
    Bindings b = probe.fixed;
    for (const auto& s : universe)
      if (!probe.fixed.contains(s)) b[s] = dist(rng);
    try {
      fn(static_cast<const Bindings&>(b));
      ++accepted;
    } catch (const DomainError& e) {
      if (++rejected > probe.max_rejections)
        throw DomainError(std::string("evaluation failed after max rejections: ") + e.what());
    }
  }
  return accepted;
}

inline std::set<Symbol> free_symbols(std::initializer_list<Expr> exprs) {
  std::set<Symbol> out;
  for (const auto& e : exprs) collect_symbols(e, out);
  return out;
}

/// Maximum sampled |a - b|.
inline double max_deviation(const Expr& a, const Expr& b, const Probe& probe = {}) {
  const EvalOptions opt{probe.singular_guard};
  double worst = 0.0;
  for_each_sample(free_symbols({a, b}), probe, [&](const Bindings& bind) {
    const double x = eval(a, bind, opt), y = eval(b, bind, opt);
    worst = std::max(worst, std::abs(x - y));
  });
  return worst;
}

/// True iff |a - b| <= tol * (1 + |a| + |b|) at every sampled point.
inline bool equal_numeric(const Expr& a, const Expr& b, int trials, double tol, Probe probe = {}) {
  probe.trials = trials;
  const EvalOptions opt{probe.singular_guard};
  bool ok = true;
  for_each_sample(free_symbols({a, b}), probe, [&](const Bindings& bind) {
    const double x = eval(a, bind, opt), y = eval(b, bind, opt);
    if (!(std::abs(x - y) <= tol * (1.0 + std::abs(x) + std::abs(y)))) ok = false;
  });
  return ok;
}

inline bool equal_numeric(const Expr& a, const Expr& b, const Probe& probe = {}) {
  return equal_numeric(a, b, probe.trials, probe.tol, probe);
}

// ---------------------------------------------------------------------------
// Polynomial structure in a single symbol

namespace detail {

inline std::vector<Expr> poly_add(std::vector<Expr> a, const std::vector<Expr>& b) {
  if (a.size() < b.size()) a.resize(b.size(), Expr(0));
  for (std::size_t i = 0; i < b.size(); ++i) a[i] = a[i] + b[i];
  return a;
}

inline std::vector<Expr> poly_mul(const std::vector<Expr>& a, const std::vector<Expr>& b) {
  std::vector<std::vector<Expr>> acc(a.size() + b.size() - 1);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (!a[i].is_zero() && !b[j].is_zero()) acc[i + j].push_back(a[i] * b[j]);
  std::vector<Expr> out;
  for (auto& terms : acc) out.push_back(add(std::move(terms)));
  return out;
}

}  // namespace detail

/// Coefficients c_k with e == sum_k c_k x^k, where no c_k mentions x.
/// Returns nullopt when e is not a polynomial in x.
inline std::optional<std::vector<Expr>> polynomial_coefficients(const Expr& e, const Symbol& x) {
  if (!depends_on(e, x)) return std::vector<Expr>{e};
  switch (e.op()) {
    case Op::symbol:
      return std::vector<Expr>{Expr(0), Expr(1)};
    case Op::add: {
      std::vector<Expr> acc{Expr(0)};
      for (const auto& a : e.args()) {
        auto p = polynomial_coefficients(a, x);
        if (!p) return std::nullopt;
        acc = detail::poly_add(std::move(acc), *p);
      }
      return acc;
    }
    case Op::mul: {
      std::vector<Expr> acc{Expr(1)};
      for (const auto& a : e.args()) {
        auto p = polynomial_coefficients(a, x);
        if (!p) return std::nullopt;
        acc = detail::poly_mul(acc, *p);
      }
      return acc;
    }
    case Op::pow: {
      const Rational r = e.exponent();
      if (!r.is_integer() || r.num < 0 || r.num > 32) return std::nullopt;
      auto base = polynomial_coefficients(e.args()[0], x);
      if (!base) return std::nullopt;
      std::vector<Expr> acc{Expr(1)};
      for (std::int64_t i = 0; i < r.num; ++i) acc = detail::poly_mul(acc, *base);
      return acc;
    }
    default:
      return std::nullopt;
  }
}

/// Sum of v_i * dX/dq_i plus dX/dt: the total time derivative of X(q, t)
/// along a path with velocities v.
inline Expr total_time_derivative(const Expr& e, int n_dof) {
  std::vector<Expr> terms{diff(e, Symbol::time())};
  for (int i = 0; i < n_dof; ++i) terms.push_back(v(i) * diff(e, Symbol::coordinate(i)));
  return add(std::move(terms));
}

}  // namespace noether
