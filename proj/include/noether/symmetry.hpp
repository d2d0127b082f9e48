#pragma once

// Point-transformation families and variational-symmetry certification.
//
// A family q'_i(q, t, s), t'(q, t, s) is a variational symmetry of L when
//
//   L(q', dq'/dt', t') dt'/dt - L(q, v, t) = d/dt F(q, t)
//
// for some gauge function F. The residual on the left is computed
// symbolically; F is recovered by checking integrability of its
// velocity-affine form and integrating along a ray from the origin.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "noether/expr.hpp"
#include "noether/mechanics.hpp"
#include "noether/probe.hpp"

namespace noether {

struct PointFamily {
  std::vector<Expr> qprime;
  Expr tprime = t();
  std::string param = "s";

  int n_dof() const { return static_cast<int>(qprime.size()); }
  Symbol parameter() const { return Symbol::parameter(param); }

  static PointFamily identity(int n) {
    PointFamily f;
    for (int i = 0; i < n; ++i) f.qprime.push_back(q(i));
    return f;
  }

  /// The member of the family at a fixed parameter value.
  PointFamily at(double s) const {
    const Substitution sub{{parameter(), Expr(s)}};
    PointFamily f{{}, substitute(tprime, sub), param};
    for (const auto& e : qprime) f.qprime.push_back(substitute(e, sub));
    return f;
  }
};

enum class CertificateKind { exact_symmetry, equivalence, failure };

inline const char* to_string(CertificateKind k) {
  switch (k) {
    case CertificateKind::exact_symmetry: return "exact-symmetry";
    case CertificateKind::equivalence: return "equivalence";
    case CertificateKind::failure: return "failure";
  }
  return "?";
}

struct SymmetryCertificate {
  CertificateKind kind = CertificateKind::failure;
  std::optional<Expr> F;
  double residual_norm = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;
  std::string diagnostics;
};

/// Probe with the system's pinned constants held fixed.
inline Probe probe_for(const Lagrangian& sys, Probe base = {}) {
  for (const auto& [s, val] : sys.pinned_bindings()) base.fixed[s] = val;
  return base;
}

/// Pins of both systems; a constant pinned to different values is an error.
inline Probe probe_for(const Lagrangian& a, const Lagrangian& b, Probe base = {}) {
  Probe out = probe_for(a, std::move(base));
  for (const auto& [s, val] : b.pinned_bindings()) {
    auto [it, inserted] = out.fixed.emplace(s, val);
    if (!inserted && it->second != val)
      throw MechanicsError("constant '" + s.name + "' is pinned to different values in the two systems");
  }
  return out;
}

/// (xi, eta) as derivatives at s = 0; G is left zero.
inline InfGen infinitesimal_of(const PointFamily& fam) {
  const Symbol s = fam.parameter();
  const Substitution at0{{s, Expr(0)}};
  InfGen g;
  g.xi = substitute(diff(fam.tprime, s), at0);
  for (const auto& e : fam.qprime) g.eta.push_back(substitute(diff(e, s), at0));
  return g;
}

/// Max sampled deviation of the family at s = 0 from the identity map.
inline double identity_defect(const PointFamily& fam, const Probe& probe = {}) {
  const PointFamily f0 = fam.at(0.0);
  double worst = max_deviation(f0.tprime, t(), probe);
  for (int i = 0; i < fam.n_dof(); ++i) worst = std::max(worst, max_deviation(f0.qprime[i], q(i), probe));
  return worst;
}

/// Total derivative dt'/dt along a path.
inline Expr time_rate(const PointFamily& fam) { return total_time_derivative(fam.tprime, fam.n_dof()); }

/// det(dq'/dq) by cofactor expansion (n is small).
inline Expr spatial_jacobian(const PointFamily& fam) {
  const int n = fam.n_dof();
  std::vector<std::vector<Expr>> J(n, std::vector<Expr>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) J[i][j] = diff(fam.qprime[i], Symbol::coordinate(j));
  auto det = [](auto&& self, const std::vector<std::vector<Expr>>& M) -> Expr {
    const std::size_t m = M.size();
    if (m == 1) return M[0][0];
    std::vector<Expr> terms;
    for (std::size_t c = 0; c < m; ++c) {
      if (M[0][c].is_zero()) continue;
      std::vector<std::vector<Expr>> minor;
      for (std::size_t r = 1; r < m; ++r) {
        std::vector<Expr> row;
        for (std::size_t k = 0; k < m; ++k)
          if (k != c) row.push_back(M[r][k]);
        minor.push_back(std::move(row));
      }
      Expr term = M[0][c] * self(self, minor);
      terms.push_back(c % 2 == 0 ? term : -term);
    }
    return add(std::move(terms));
  };
  return det(det, J);
}

/// max(|det(dq'/dq) - 1|, |dt'/dt - 1|) over samples.
inline double unimodularity_defect(const PointFamily& fam, const Probe& probe = {}) {
  return std::max(max_deviation(spatial_jacobian(fam), Expr(1), probe), max_deviation(time_rate(fam), Expr(1), probe));
}

class NotUnimodular : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_unimodular(const PointFamily& fam, const Probe& probe = {}) {
  const double d = unimodularity_defect(fam, probe);
  if (!(d <= probe.tol))
    throw NotUnimodular("family is not unimodular (Jacobian or dt'/dt differs from 1 by " + std::to_string(d) + ")");
}

/// L(q', dq'/dt', t') dt'/dt as an expression in (q, v, t, s).
inline Expr pullback_lagrangian(const Lagrangian& sys, const PointFamily& fam, const Probe& probe = {}) {
  const int n = sys.n_dof;
  if (fam.n_dof() != n) throw MechanicsError("family size does not match n_dof");
  const Expr rate = time_rate(fam);
  const EvalOptions guard{probe.singular_guard};
  for_each_sample(free_symbols({rate}), probe, [&](const Bindings& b) {
    if (std::abs(eval(rate, b, guard)) <= probe.singular_guard) throw MechanicsError("dt'/dt vanishes at a sample point");
  });
  Substitution sub;
  const Expr inv_rate = rate.is_one() ? Expr(1) : pow(rate, -1);
  for (int i = 0; i < n; ++i) {
    sub[Symbol::coordinate(i)] = fam.qprime[i];
    sub[Symbol::velocity(i)] = total_time_derivative(fam.qprime[i], n) * inv_rate;
  }
  sub[Symbol::time()] = fam.tprime;
  return substitute(sys.L, sub) * rate;
}

struct GaugeResult {
  std::optional<Expr> F;
  double residual_norm = 0.0;
  int samples = 0;
  std::string diagnostics;
};

namespace detail {

inline const Symbol& ray_symbol() {
  static const Symbol s = Symbol::constant("#tau");
  return s;
}

/// Integral over tau of a polynomial in tau, between 0 and `upper`.
inline std::optional<Expr> integrate_polynomial(const Expr& integrand, const Expr& upper) {
  auto coeffs = polynomial_coefficients(integrand, ray_symbol());
  if (!coeffs) return std::nullopt;
  std::vector<Expr> terms;
  for (std::size_t k = 0; k < coeffs->size(); ++k) {
    if ((*coeffs)[k].is_zero()) continue;
    const auto kk = static_cast<std::int64_t>(k + 1);
    terms.push_back(Expr(Rational{1, kk}) * (*coeffs)[k] * pow(upper, Rational{kk, 1}));
  }
  return add(std::move(terms));
}

}  // namespace detail

/// Writes residual(q, v, t) = dF/dt for some F(q, t), or reports why not.
/// F is normalized to F(0, 0) = 0.
inline GaugeResult extract_gauge(const Expr& residual, int n_dof, const Probe& probe = {}) {
  GaugeResult out;
  if (residual.is_zero()) {
    out.F = Expr(0);
    return out;
  }
  // residual = sum_i a_i v_i + b with a_i, b free of velocities.
  Substitution v0;
  for (int i = 0; i < n_dof; ++i) v0[Symbol::velocity(i)] = Expr(0);
  std::vector<Expr> a(n_dof);
  std::vector<Expr> affine{substitute(residual, v0)};
  for (int i = 0; i < n_dof; ++i) {
    a[i] = substitute(diff(residual, Symbol::velocity(i)), v0);
    affine.push_back(a[i] * v(i));
  }
  const Expr b = affine.front();

  double defect = max_deviation(residual, add(affine), probe);
  if (defect > probe.tol) {
    out.residual_norm = defect;
    out.diagnostics = "residual is not affine in the velocities";
    return out;
  }
  double integrability = 0.0;
  for (int i = 0; i < n_dof; ++i) {
    for (int j = i + 1; j < n_dof; ++j)
      integrability = std::max(integrability, max_deviation(diff(a[i], Symbol::coordinate(j)),
                                                            diff(a[j], Symbol::coordinate(i)), probe));
    integrability = std::max(integrability,
                             max_deviation(diff(a[i], Symbol::time()), diff(b, Symbol::coordinate(i)), probe));
  }
  if (integrability > probe.tol) {
    out.residual_norm = integrability;
    out.diagnostics = "integrability conditions violated: residual is not a total time derivative";
    return out;
  }

  const Symbol& tau = detail::ray_symbol();
  Substitution ray;
  for (int i = 0; i < n_dof; ++i) ray[Symbol::coordinate(i)] = Expr(tau) * q(i);
  std::vector<Expr> radial_terms;
  for (int i = 0; i < n_dof; ++i) radial_terms.push_back(substitute(a[i], ray) * q(i));
  const Expr radial = add(std::move(radial_terms));

  Substitution origin;
  for (int i = 0; i < n_dof; ++i) origin[Symbol::coordinate(i)] = Expr(0);
  origin[Symbol::time()] = Expr(tau);
  const Expr temporal = substitute(b, origin);

  std::vector<Expr> parts;
  for (const auto& [integrand, upper] : {std::pair{radial, Expr(1)}, std::pair{temporal, t()}}) {
    auto piece = detail::integrate_polynomial(integrand, upper);
    if (!piece) {
      if (max_deviation(integrand, Expr(0), probe) <= probe.tol) continue;
      out.diagnostics = "residual is not polynomial in the coordinates; gauge extraction unsupported";
      out.residual_norm = std::max(defect, integrability);
      return out;
    }
    parts.push_back(*piece);
  }
  Expr F = add(std::move(parts));
  out.samples = probe.trials;
  out.residual_norm = std::max({defect, integrability, max_deviation(total_time_derivative(F, n_dof), residual, probe)});
  if (out.residual_norm > probe.tol) {
    out.diagnostics = "reconstructed gauge does not reproduce the residual";
    return out;
  }
  out.F = std::move(F);
  return out;
}

namespace detail {

inline SymmetryCertificate certify(const Expr& residual, int n_dof, const Symbol& param, CertificateKind success,
                                   const Probe& probe) {
  SymmetryCertificate cert;
  cert.seed = probe.seed;
  GaugeResult g = extract_gauge(residual, n_dof, probe);
  cert.samples = probe.trials;
  cert.residual_norm = g.residual_norm;
  cert.diagnostics = g.diagnostics;
  if (!g.F) return cert;
  // Spot checks at fixed parameter values back the s-inert symbolic result.
  if (depends_on(residual, param)) {
    for (double s : {-1.0, -0.1, 0.1, 1.0}) {
      const Substitution sub{{param, Expr(s)}};
      const Expr Fs = substitute(*g.F, sub);
      cert.residual_norm = std::max(
          cert.residual_norm, max_deviation(total_time_derivative(Fs, n_dof), substitute(residual, sub), probe));
      cert.samples += probe.trials;
    }
  }
  cert.F = g.F;
  if (cert.residual_norm <= probe.tol) {
    cert.kind = success;
  } else {
    cert.diagnostics = "fixed-parameter spot check failed";
  }
  return cert;
}

}  // namespace detail

inline SymmetryCertificate check_variational_symmetry(const Lagrangian& sys, const PointFamily& fam,
                                                      const Probe& base = {}) {
  const Probe probe = probe_for(sys, base);
  const Expr residual = pullback_lagrangian(sys, fam, probe) - sys.L;
  return detail::certify(residual, sys.n_dof, fam.parameter(), CertificateKind::exact_symmetry, probe);
}

/// Max sampled residual of the infinitesimal invariance condition
///   sum_i [dL/dq_i eta_i + dL/dv_i (D eta_i - v_i D xi)] + dL/dt xi + L D xi - D G
/// with D the total time derivative.
inline double check_infinitesimal(const Lagrangian& sys, const InfGen& gen, const Probe& base = {}) {
  const int n = sys.n_dof;
  if (static_cast<int>(gen.eta.size()) != n) throw MechanicsError("generator size does not match n_dof");
  const Expr Dxi = total_time_derivative(gen.xi, n);
  std::vector<Expr> lhs;
  for (int i = 0; i < n; ++i) {
    lhs.push_back(diff(sys.L, Symbol::coordinate(i)) * gen.eta[i]);
    lhs.push_back(diff(sys.L, Symbol::velocity(i)) * (total_time_derivative(gen.eta[i], n) - v(i) * Dxi));
  }
  lhs.push_back(diff(sys.L, Symbol::time()) * gen.xi);
  lhs.push_back(sys.L * Dxi);
  return max_deviation(add(std::move(lhs)), total_time_derivative(gen.G, n), probe_for(sys, base));
}

/// Certifies L1(q', dq'/dt', t') dt'/dt - L2(q, v, t) = dF/dt.
inline SymmetryCertificate check_equivalence(const Lagrangian& sys1, const Lagrangian& sys2, const PointFamily& fam,
                                             const Probe& base = {}) {
  if (sys1.n_dof != sys2.n_dof) throw MechanicsError("Lagrangians have different numbers of degrees of freedom");
  const Probe probe = probe_for(sys1, sys2, base);
  const Expr residual = pullback_lagrangian(sys1, fam, probe) - sys2.L;
  return detail::certify(residual, sys1.n_dof, fam.parameter(), CertificateKind::equivalence, probe);
}

}  // namespace noether
