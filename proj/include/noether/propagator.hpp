#pragma once

// One-dimensional propagators: closed-form Gaussian kernels, time-sliced
// kernel matrices, and the gauge/point-transformation laws relating them.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "noether/expr.hpp"
#include "noether/mechanics.hpp"
#include "noether/probe.hpp"
#include "noether/symmetry.hpp"

namespace noether {

using cplx = std::complex<double>;

class PropagatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Grid1D {
  double xmin = -1.0;
  double xmax = 1.0;
  int N = 2;

  Grid1D() = default;
  Grid1D(double lo, double hi, int n) : xmin(lo), xmax(hi), N(n) {
    if (N < 2) throw PropagatorError("grid needs N >= 2");
    if (!(xmax > xmin)) throw PropagatorError("grid needs xmax > xmin");
  }

  double dx() const { return (xmax - xmin) / (N - 1); }
  double x(int j) const { return xmin + j * dx(); }
  bool contains(double v) const { return v >= xmin - 1e-12 * dx() && v <= xmax + 1e-12 * dx(); }

  /// Trapezoid weights.
  Eigen::VectorXd weights() const {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(N, dx());
    w(0) *= 0.5;
    w(N - 1) *= 0.5;
    return w;
  }

  friend bool operator==(const Grid1D& a, const Grid1D& b) {
    return a.xmin == b.xmin && a.xmax == b.xmax && a.N == b.N;
  }
};

/// K(x1, t1; x0, t0)
using KernelFn = std::function<cplx(double x1, double t1, double x0, double t0)>;

struct KernelMatrix {
  Grid1D grid;
  double t0 = 0.0;
  double t1 = 0.0;
  /// entries(j, k) ~ K(x_j, t1; x_k, t0)
  Eigen::MatrixXcd entries;

  /// Bilinear interpolation at fixed (t1, t0); throws outside the grid.
  cplx at(double x1, double x0) const {
    if (!grid.contains(x1) || !grid.contains(x0))
      throw PropagatorError("kernel requested outside the grid at (" + std::to_string(x1) + ", " +
                            std::to_string(x0) + ")");
    auto locate = [&](double xv, int& i, double& f) {
      const double u = std::clamp((xv - grid.xmin) / grid.dx(), 0.0, grid.N - 1.0);
      i = std::min(static_cast<int>(u), grid.N - 2);
      f = u - i;
    };
    int j, k;
    double a, b;
    locate(x1, j, a);
    locate(x0, k, b);
    return (1 - a) * ((1 - b) * entries(j, k) + b * entries(j, k + 1)) +
           a * ((1 - b) * entries(j + 1, k) + b * entries(j + 1, k + 1));
  }

  KernelFn accessor() const {
    return [self = *this](double x1, double tt1, double x0, double tt0) {
      if (std::abs(tt1 - self.t1) > 1e-12 || std::abs(tt0 - self.t0) > 1e-12)
        throw PropagatorError("kernel matrix is defined only at its own (t1, t0)");
      return self.at(x1, x0);
    };
  }
};

struct Wavepacket {
  Grid1D grid;
  Eigen::VectorXcd values;
  double center = 0.0;
  double width = 0.0;
  double momentum = 0.0;

  /// exp(-(x - c)^2 / (2 sigma^2) + i p0 x / hbar), unit trapezoid norm.
  static Wavepacket gaussian(const Grid1D& g, double c, double sigma, double p0, double hbar = 1.0);
};

inline double norm(const Wavepacket& psi) {
  return std::sqrt((psi.grid.weights().array() * psi.values.array().abs2()).sum());
}

inline cplx inner(const Wavepacket& a, const Wavepacket& b) {
  if (!(a.grid == b.grid)) throw PropagatorError("grid mismatch");
  return (a.grid.weights().array().cast<cplx>() * a.values.array().conjugate() * b.values.array()).sum();
}

/// |<a|b>| / (|a| |b|); 0 when either packet vanishes.
inline double fidelity(const Wavepacket& a, const Wavepacket& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::abs(inner(a, b)) / (na * nb);
}

inline Wavepacket Wavepacket::gaussian(const Grid1D& g, double c, double sigma, double p0, double hbar) {
  if (!(sigma > 0)) throw PropagatorError("packet width must be positive");
  Wavepacket w{g, Eigen::VectorXcd(g.N), c, sigma, p0};
  for (int j = 0; j < g.N; ++j) {
    const double x = g.x(j);
    w.values(j) = std::exp(cplx(-(x - c) * (x - c) / (2 * sigma * sigma), p0 * x / hbar));
  }
  w.values /= norm(w);
  return w;
}

inline double expectation_x(const Wavepacket& psi) {
  const Eigen::VectorXd w = psi.grid.weights();
  double num = 0.0, den = 0.0;
  for (int j = 0; j < psi.grid.N; ++j) {
    const double p = w(j) * std::norm(psi.values(j));
    num += p * psi.grid.x(j);
    den += p;
  }
  return den > 0 ? num / den : 0.0;
}

// ---------------------------------------------------------------------------
// Closed forms

namespace detail {

inline cplx prefactor(double m, double hbar, double dt) {
  if (dt == 0.0) throw PropagatorError("kernel needs t1 != t0");
  return std::sqrt(cplx(m, 0.0) / cplx(0.0, 2 * std::numbers::pi * hbar * dt));
}

}  // namespace detail

inline cplx free_kernel(double m, double hbar, double x1, double t1, double x0, double t0) {
  const double dt = t1 - t0;
  const cplx a = detail::prefactor(m, hbar, dt);
  return a * std::exp(cplx(0.0, m * (x1 - x0) * (x1 - x0) / (2 * hbar * dt)));
}

inline cplx linear_potential_kernel(double m, double g, double hbar, double x1, double t1, double x0, double t0) {
  const double dt = t1 - t0;
  const cplx a = detail::prefactor(m, hbar, dt);
  const double dx = x1 - x0;
  const double bracket = dx * dx - g * (x1 + x0) * dt * dt - g * g * dt * dt * dt * dt / 12.0;
  return a * std::exp(cplx(0.0, m * bracket / (2 * hbar * dt)));
}

inline KernelFn free_kernel_fn(double m, double hbar) {
  return [=](double x1, double t1, double x0, double t0) { return free_kernel(m, hbar, x1, t1, x0, t0); };
}

inline KernelFn linear_potential_kernel_fn(double m, double g, double hbar) {
  return [=](double x1, double t1, double x0, double t0) {
    return linear_potential_kernel(m, g, hbar, x1, t1, x0, t0);
  };
}

/// Samples a kernel on grid x grid at fixed times.
inline KernelMatrix sample_kernel(const KernelFn& K, const Grid1D& g, double t0, double t1) {
  KernelMatrix out{g, t0, t1, Eigen::MatrixXcd(g.N, g.N)};
  for (int k = 0; k < g.N; ++k)
    for (int j = 0; j < g.N; ++j) out.entries(j, k) = K(g.x(j), t1, g.x(k), t0);
  return out;
}

// ---------------------------------------------------------------------------
// Standard-form Lagrangians 1/2 m v^2 - V(q, t)

struct StandardForm {
  double mass = 1.0;
  Expr V;
};

inline StandardForm standard_form(const Lagrangian& sys) {
  if (sys.n_dof != 1) throw PropagatorError("numeric kernels support one degree of freedom only");
  const Symbol vel = Symbol::velocity(0);
  const auto c = polynomial_coefficients(sys.L, vel);
  if (!c || c->size() > 3) throw PropagatorError("Lagrangian is not quadratic in the velocity");
  const Probe probe = probe_for(sys);
  if (c->size() >= 2 && !equal_numeric((*c)[1], Expr(0), probe))
    throw PropagatorError("velocity-coupled terms are not supported by the numeric kernels");
  if (c->size() < 3) throw PropagatorError("Lagrangian has no kinetic term");
  const Expr& half_m = (*c)[2];
  if (depends_on_any(half_m, [](const Symbol& s) { return s.is_variable(); }))
    throw PropagatorError("mass term depends on position or time");
  const double mass = 2.0 * eval(half_m, sys.constant_bindings());
  if (!(mass > 0)) throw PropagatorError("mass must be positive");
  return {mass, -(*c)[0]};
}

/// Closed-form kernel of a standard-form system with V = a q1 + b
/// (a, b constant): the linear-potential kernel with g = a/m times e^{-i b dt/hbar}.
inline KernelFn closed_form_kernel(const Lagrangian& sys) {
  const auto sf = standard_form(sys);
  const Symbol x = Symbol::coordinate(0);
  const auto c = polynomial_coefficients(sf.V, x);
  auto variable = [](const Symbol& s) { return s.is_variable(); };
  if (!c || c->size() > 2 || std::any_of(c->begin(), c->end(), [&](const Expr& e) { return depends_on_any(e, variable); }))
    throw PropagatorError("no closed-form kernel: potential is not a q1 + b with constant a, b");
  const Bindings b = sys.constant_bindings();
  const double offset = eval((*c)[0], b);
  const double g = c->size() == 2 ? eval((*c)[1], b) / sf.mass : 0.0;
  const double m = sf.mass, hbar = sys.constant("hbar", 1.0);
  return [=](double x1, double t1, double x0, double t0) {
    const cplx k = g == 0.0 ? free_kernel(m, hbar, x1, t1, x0, t0) : linear_potential_kernel(m, g, hbar, x1, t1, x0, t0);
    return offset == 0.0 ? k : k * std::exp(cplx(0.0, -offset * (t1 - t0) / hbar));
  };
}

// ---------------------------------------------------------------------------
// Time slicing

enum class SliceRule {
  /// Grid projection of the free short-time kernel onto the band |k dx| < pi.
  band_limited,
  /// Raw samples of the closed-form short-time kernel.
  closed_form,
};

namespace detail {

/// G(j) = (1/pi) int_0^pi cos(theta j) exp(-i beta theta^2) dtheta, j = 0..N-1.
inline std::vector<cplx> band_limited_symbol(int N, double beta) {
  using rule = boost::math::quadrature::gauss<double, 20>;
  std::vector<double> nodes, wts;
  for (std::size_t i = 0; i < rule::abscissa().size(); ++i) {
    nodes.push_back(rule::abscissa()[i]);
    wts.push_back(rule::weights()[i]);
    nodes.push_back(-rule::abscissa()[i]);
    wts.push_back(rule::weights()[i]);
  }
  const int panels = N + static_cast<int>(std::ceil(2 * std::abs(beta) * std::numbers::pi));
  const double h = std::numbers::pi / panels;
  std::vector<double> theta;
  std::vector<cplx> chirp;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * h;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double th = mid + 0.5 * h * nodes[i];
      theta.push_back(th);
      chirp.push_back(0.5 * h * wts[i] * std::exp(cplx(0.0, -beta * th * th)));
    }
  }
  std::vector<cplx> G(N);
  for (int j = 0; j < N; ++j) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) acc += std::cos(theta[i] * j) * chirp[i];
    G[j] = acc / std::numbers::pi;
  }
  return G;
}

inline Eigen::MatrixXcd matrix_power(Eigen::MatrixXcd base, long e) {
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Identity(base.rows(), base.cols());
  bool first = true;
  while (e > 0) {
    if (e & 1) {
      if (first) acc = base;
      else acc = (acc * base).eval();
      first = false;
    }
    e >>= 1;
    if (e > 0) base = (base * base).eval();
  }
  return acc;
}

}  // namespace detail

/// Composes `slices` short-time kernels with trapezoid weights. V is an
/// expression in q1, t and constants.
inline KernelMatrix timesliced_kernel(double m, double hbar, const Expr& V, const Grid1D& grid, double t0, double t1,
                                      int slices, const Bindings& constants = {},
                                      SliceRule rule = SliceRule::band_limited) {
  if (slices < 1) throw PropagatorError("slices must be >= 1");
  if (t1 == t0) throw PropagatorError("kernel needs t1 != t0");
  if (depends_on_any(V, [](const Symbol& s) {
        return s.kind == SymbolKind::velocity || (s.kind == SymbolKind::coordinate && s.index > 0) ||
               s.kind == SymbolKind::parameter;
      }))
    throw PropagatorError("potential may depend on q1, t and constants only");
  const int N = grid.N;
  const double dx = grid.dx();
  const double eps = (t1 - t0) / slices;

  Eigen::MatrixXcd free(N, N);
  if (rule == SliceRule::band_limited) {
    const auto G = detail::band_limited_symbol(N, hbar * eps / (2 * m * dx * dx));
    for (int k = 0; k < N; ++k)
      for (int j = 0; j < N; ++j) free(j, k) = G[std::abs(j - k)] / dx;
  } else {
    for (int k = 0; k < N; ++k)
      for (int j = 0; j < N; ++j) free(j, k) = free_kernel(m, hbar, grid.x(j), eps, grid.x(k), 0.0);
  }

  const bool time_dependent = depends_on(V, Symbol::time());
  const bool zero_potential = V.is_zero();
  auto slice = [&](double tmid) {
    std::vector<cplx> phase(2 * N - 1, 1.0);
    if (!zero_potential) {
      Bindings b = constants;
      b[Symbol::time()] = tmid;
      for (int s = 0; s < 2 * N - 1; ++s) {
        b[Symbol::coordinate(0)] = grid.xmin + 0.5 * s * dx;
        phase[s] = std::exp(cplx(0.0, -eps * eval(V, b) / hbar));
      }
    }
    if (zero_potential) return free;
    Eigen::MatrixXcd K(N, N);
    for (int k = 0; k < N; ++k)
      for (int j = 0; j < N; ++j) K(j, k) = free(j, k) * phase[j + k];
    return K;
  };

  const Eigen::VectorXcd w = grid.weights().cast<cplx>();
  KernelMatrix out{grid, t0, t1, {}};
  if (!time_dependent) {
    const Eigen::MatrixXcd K = slice(0.0);
    if (slices == 1) {
      out.entries = K;
    } else {
      const Eigen::MatrixXcd T = K * w.asDiagonal();
      out.entries = detail::matrix_power(T, slices - 1) * K;
    }
    return out;
  }
  Eigen::MatrixXcd M = slice(t0 + 0.5 * eps);
  for (int i = 1; i < slices; ++i) {
    const Eigen::MatrixXcd K = slice(t0 + (i + 0.5) * eps);
    M = (K * (w.asDiagonal() * M)).eval();
  }
  out.entries = std::move(M);
  return out;
}

/// psi'(x_j) = sum_k K(j, k) psi(x_k) w_k
inline Wavepacket propagate(const KernelMatrix& K, const Wavepacket& psi) {
  if (!(K.grid == psi.grid)) throw PropagatorError("grid mismatch between kernel and packet");
  Wavepacket out = psi;
  out.values = K.entries * (psi.grid.weights().cast<cplx>().asDiagonal() * psi.values);
  return out;
}

// ---------------------------------------------------------------------------
// Transformation laws

struct TransformContext {
  double hbar = 1.0;
  Bindings constants;
};

enum class TransformDirection {
  /// Given K1, returns K2(x1, t1; x0, t0) = K1(x1', t1'; x0', t0') e^{-i[F1 - F0]/hbar}.
  pull,
  /// Given K2, returns K1(x1', t1'; x0', t0') = K2(x1, t1; x0, t0) e^{+i[F1 - F0]/hbar}.
  push,
};

namespace detail {

struct PointMap {
  Expr qp, dqp, tp;
  Bindings constants;

  double forward(double x, double time) const {
    Bindings b = constants;
    b[Symbol::coordinate(0)] = x;
    b[Symbol::time()] = time;
    return eval(qp, b);
  }

  double time_forward(double time) const {
    Bindings b = constants;
    b[Symbol::time()] = time;
    b[Symbol::coordinate(0)] = 0.0;
    return eval(tp, b);
  }

  /// Solves q'(x, t) = xp for x by Newton iteration starting at xp.
  double inverse(double xp, double time) const {
    Bindings b = constants;
    b[Symbol::time()] = time;
    auto f = [&](double x) {
      b[Symbol::coordinate(0)] = x;
      const double d = eval(dqp, b);
      if (d == 0.0) throw PropagatorError("family is not invertible at x = " + std::to_string(x));
      return std::pair<double, double>(eval(qp, b) - xp, d);
    };
    std::uintmax_t iters = 100;
    const double span = 1e6 * (1.0 + std::abs(xp));
    const double x = boost::math::tools::newton_raphson_iterate(f, xp, xp - span, xp + span, 52, iters);
    if (std::abs(f(x).first) > 1e-10 * (1.0 + std::abs(xp)))
      throw PropagatorError("could not invert family at x' = " + std::to_string(xp));
    return x;
  }
};

inline PointMap point_map(const PointFamily& fam, const Bindings& constants) {
  if (fam.n_dof() != 1) throw PropagatorError("kernel transforms support one degree of freedom only");
  if (depends_on_any(fam.tprime, [](const Symbol& s) { return s.kind == SymbolKind::coordinate; }))
    throw PropagatorError("t' may not depend on the coordinates");
  return {fam.qprime[0], diff(fam.qprime[0], Symbol::coordinate(0)), fam.tprime, constants};
}

/// Substitutes a fixed parameter value when the family still carries one.
inline PointFamily fixed_member(const PointFamily& fam, std::optional<double> s) {
  const bool has_param =
      depends_on(fam.tprime, fam.parameter()) ||
      std::any_of(fam.qprime.begin(), fam.qprime.end(), [&](const Expr& e) { return depends_on(e, fam.parameter()); });
  if (!has_param) return fam;
  if (!s) throw PropagatorError("family parameter '" + fam.param + "' needs a value");
  return fam.at(*s);
}

inline double eval_F(const Expr& F, double x, double time, const Bindings& constants) {
  Bindings b = constants;
  b[Symbol::coordinate(0)] = x;
  b[Symbol::time()] = time;
  return eval(F, b);
}

}  // namespace detail

/// Kernel related to K by the point family (at parameter s) and gauge F.
/// The family must be unimodular; the gauge is an expression in q1, t,
/// constants and (when s is given) the family parameter.
inline KernelFn transform_kernel(KernelFn K, const PointFamily& family, const Expr& gauge, const TransformContext& ctx,
                                 TransformDirection dir = TransformDirection::pull,
                                 std::optional<double> s = std::nullopt) {
  const PointFamily fam = detail::fixed_member(family, s);
  const Expr F = s ? substitute(gauge, {{family.parameter(), Expr(*s)}}) : gauge;
  if (depends_on(F, family.parameter())) throw PropagatorError("gauge function still depends on the family parameter");
  Probe probe;
  probe.fixed = ctx.constants;
  require_unimodular(fam, probe);
  const detail::PointMap map = detail::point_map(fam, ctx.constants);
  const Bindings constants = ctx.constants;
  const double hbar = ctx.hbar;
  const double shift = map.time_forward(0.0);
  if (dir == TransformDirection::pull) {
    return [=](double x1, double t1, double x0, double t0) {
      const double phase = detail::eval_F(F, x1, t1, constants) - detail::eval_F(F, x0, t0, constants);
      return K(map.forward(x1, t1), map.time_forward(t1), map.forward(x0, t0), map.time_forward(t0)) *
             std::exp(cplx(0.0, -phase / hbar));
    };
  }
  return [=](double x1p, double t1p, double x0p, double t0p) {
    const double t1 = t1p - shift, t0 = t0p - shift;
    const double x1 = map.inverse(x1p, t1), x0 = map.inverse(x0p, t0);
    const double phase = detail::eval_F(F, x1, t1, constants) - detail::eval_F(F, x0, t0, constants);
    return K(x1, t1, x0, t0) * std::exp(cplx(0.0, phase / hbar));
  };
}

struct KernelSample {
  double x1, t1, x0, t0;
};

/// x1, x0 on an n x n lattice over [lo, hi]^2, for each dt, starting at t0.
inline std::vector<KernelSample> lattice_samples(double lo, double hi, int n, const std::vector<double>& dts,
                                                 double t0 = 0.0) {
  std::vector<KernelSample> out;
  for (double dt : dts)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const double x1 = n == 1 ? lo : lo + (hi - lo) * a / (n - 1);
        const double x0 = n == 1 ? lo : lo + (hi - lo) * b / (n - 1);
        out.push_back({x1, t0 + dt, x0, t0});
      }
  return out;
}

/// max |K1(x1', t1'; x0', t0') - K2(x1, t1; x0, t0) e^{i[F(x1,t1) - F(x0,t0)]/hbar}|
/// over the samples (x1, t1, x0, t0) in unprimed coordinates.
inline double check_fundam(const KernelFn& K1, const KernelFn& K2, const PointFamily& family, const Expr& F,
                           const std::vector<KernelSample>& samples, const TransformContext& ctx,
                           std::optional<double> s = std::nullopt) {
  const KernelFn rhs = transform_kernel(K1, family, F, ctx, TransformDirection::pull, s);
  double worst = 0.0;
  for (const auto& p : samples) {
    const cplx lhs = rhs(p.x1, p.t1, p.x0, p.t0);
    const cplx k2 = K2(p.x1, p.t1, p.x0, p.t0);
    worst = std::max(worst, std::abs(lhs - k2));
  }
  return worst;
}

/// Symmetry form: the same kernel on both sides.
inline double check_fundam(const KernelFn& K, const PointFamily& family, const Expr& F,
                           const std::vector<KernelSample>& samples, const TransformContext& ctx,
                           std::optional<double> s = std::nullopt) {
  return check_fundam(K, K, family, F, samples, ctx, s);
}

// ---------------------------------------------------------------------------
// CSV output

/// Header x1,x0,re,im; every `stride`-th grid point in both directions.
inline void write_kernel_csv(std::ostream& os, const KernelMatrix& K, int stride = 1) {
  if (stride < 1) stride = 1;
  os << "x1,x0,re,im\n";
  os.precision(17);
  for (int j = 0; j < K.grid.N; j += stride)
    for (int k = 0; k < K.grid.N; k += stride) {
      const cplx z = K.entries(j, k);
      os << K.grid.x(j) << "," << K.grid.x(k) << "," << z.real() << "," << z.imag() << "\n";
    }
}

/// Header x,re,im,abs2.
inline void write_packet_csv(std::ostream& os, const Wavepacket& psi) {
  os << "x,re,im,abs2\n";
  os.precision(17);
  for (int j = 0; j < psi.grid.N; ++j) {
    const cplx z = psi.values(j);
    os << psi.grid.x(j) << "," << z.real() << "," << z.imag() << "," << std::norm(z) << "\n";
  }
}

}  // namespace noether
