#pragma once

// Grid operators and Crank-Nicolson evolution for checking conserved
// operators A(t) (A(t1) U = U A(t0)) and symmetry operators T(t)
// (T(t1) U = U T(t0)) of one-dimensional systems.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "noether/expr.hpp"
#include "noether/mechanics.hpp"
#include "noether/propagator.hpp"

namespace noether {

class OperatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using SparseC = Eigen::SparseMatrix<cplx>;

/// A(t) = alpha(t) x + beta(t) p + gamma(t) 1
struct OperatorSpec {
  Expr alpha = Expr(0);
  Expr beta = Expr(0);
  Expr gamma = Expr(0);
};

struct GridOperator {
  Grid1D grid;
  double t = 0.0;
  Eigen::MatrixXcd matrix;

  /// max |M - M^H| entrywise
  double hermiticity_defect() const { return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff(); }
};

/// Standard-form system 1/2 m v^2 - V(q1, t) on a grid.
struct GridSystem {
  double mass = 1.0;
  double hbar = 1.0;
  Expr V = Expr(0);
  Bindings constants;
  Grid1D grid;

  bool time_dependent() const { return depends_on(V, Symbol::time()); }
};

inline GridSystem grid_system(const Lagrangian& sys, const Grid1D& grid) {
  const auto sf = standard_form(sys);
  return {sf.mass, sys.constant("hbar", 1.0), sf.V, sys.constant_bindings(), grid};
}

namespace detail {

inline double eval_t(const Expr& e, double t, const Bindings& constants) {
  Bindings b = constants;
  b[Symbol::time()] = t;
  return eval(e, b);
}

inline SparseC position_sparse(const Grid1D& g) {
  SparseC X(g.N, g.N);
  std::vector<Eigen::Triplet<cplx>> trip;
  for (int j = 0; j < g.N; ++j) trip.emplace_back(j, j, g.x(j));
  X.setFromTriplets(trip.begin(), trip.end());
  return X;
}

/// -i hbar (psi_{j+1} - psi_{j-1}) / (2 dx), zero outside the grid.
inline SparseC momentum_sparse(const Grid1D& g, double hbar) {
  SparseC P(g.N, g.N);
  std::vector<Eigen::Triplet<cplx>> trip;
  const cplx c(0.0, -hbar / (2 * g.dx()));
  for (int j = 0; j + 1 < g.N; ++j) {
    trip.emplace_back(j, j + 1, c);
    trip.emplace_back(j + 1, j, -c);
  }
  P.setFromTriplets(trip.begin(), trip.end());
  return P;
}

inline SparseC identity_sparse(int n) {
  SparseC I(n, n);
  I.setIdentity();
  return I;
}

}  // namespace detail

inline SparseC operator_sparse(const OperatorSpec& spec, const Grid1D& g, double t, double hbar = 1.0,
                               const Bindings& constants = {}) {
  const double a = detail::eval_t(spec.alpha, t, constants);
  const double b = detail::eval_t(spec.beta, t, constants);
  const double c = detail::eval_t(spec.gamma, t, constants);
  SparseC A = cplx(a) * detail::position_sparse(g) + cplx(b) * detail::momentum_sparse(g, hbar) +
              cplx(c) * detail::identity_sparse(g.N);
  A.prune(cplx(0.0));
  return A;
}

inline GridOperator build_operator(const OperatorSpec& spec, const Grid1D& g, double t, double hbar = 1.0,
                                   const Bindings& constants = {}) {
  return {g, t, Eigen::MatrixXcd(operator_sparse(spec, g, t, hbar, constants))};
}

/// -hbar^2/(2m) 3-point Laplacian + diag V(x_j, t)
inline SparseC hamiltonian_sparse(const GridSystem& sys, double t) {
  const Grid1D& g = sys.grid;
  const double k = sys.hbar * sys.hbar / (2 * sys.mass * g.dx() * g.dx());
  Bindings b = sys.constants;
  b[Symbol::time()] = t;
  std::vector<Eigen::Triplet<cplx>> trip;
  for (int j = 0; j < g.N; ++j) {
    b[Symbol::coordinate(0)] = g.x(j);
    trip.emplace_back(j, j, 2 * k + eval(sys.V, b));
    if (j + 1 < g.N) {
      trip.emplace_back(j, j + 1, -k);
      trip.emplace_back(j + 1, j, -k);
    }
  }
  SparseC H(g.N, g.N);
  H.setFromTriplets(trip.begin(), trip.end());
  return H;
}

inline GridOperator build_hamiltonian(const GridSystem& sys, double t) {
  return {sys.grid, t, Eigen::MatrixXcd(hamiltonian_sparse(sys, t))};
}

/// Real part of <psi|A|psi> / <psi|psi> with uniform weights.
inline double expectation(const SparseC& A, const Eigen::VectorXcd& psi) {
  const double n2 = psi.squaredNorm();
  if (n2 == 0.0) throw OperatorError("expectation of a zero state");
  return psi.dot(A * psi).real() / n2;
}

// ---------------------------------------------------------------------------
// Crank-Nicolson

namespace detail {

class CrankNicolsonStep {
 public:
  CrankNicolsonStep(const GridSystem& sys, double dt) : sys_(sys), dt_(dt) {}

  /// Prepares the step from t to t + dt; refactors only when H changes.
  void prepare(double t) {
    if (ready_ && !sys_.time_dependent()) return;
    const SparseC H = hamiltonian_sparse(sys_, t + 0.5 * dt_);
    const SparseC I = identity_sparse(sys_.grid.N);
    const cplx h(0.0, dt_ / (2 * sys_.hbar));
    SparseC lhs = I + h * H;
    rhs_ = I - h * H;
    lu_.compute(lhs);
    if (lu_.info() != Eigen::Success) throw OperatorError("Crank-Nicolson factorization failed");
    ready_ = true;
  }

  template <class M>
  auto apply(const M& x) const {
    auto out = lu_.solve(rhs_ * x).eval();
    if (lu_.info() != Eigen::Success) throw OperatorError("Crank-Nicolson solve failed");
    return out;
  }

 private:
  const GridSystem& sys_;
  double dt_;
  bool ready_ = false;
  SparseC rhs_;
  Eigen::SparseLU<SparseC> lu_;
};

}  // namespace detail

struct CnTrajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXcd> states;
};

/// (1 + i dt H/2hbar) psi_{k+1} = (1 - i dt H/2hbar) psi_k, H at the step midpoint.
inline CnTrajectory crank_nicolson_evolve(const GridSystem& sys, const Eigen::VectorXcd& psi0, double t0, double t1,
                                          int steps) {
  if (steps < 1) throw OperatorError("steps must be >= 1");
  if (psi0.size() != sys.grid.N) throw OperatorError("state does not match the grid");
  const double dt = (t1 - t0) / steps;
  CnTrajectory tr;
  tr.times.push_back(t0);
  tr.states.push_back(psi0);
  if (dt == 0.0) return tr;
  detail::CrankNicolsonStep step(sys, dt);
  Eigen::VectorXcd psi = psi0;
  for (int k = 0; k < steps; ++k) {
    step.prepare(t0 + k * dt);
    psi = step.apply(psi);
    tr.times.push_back(t0 + (k + 1) * dt);
    tr.states.push_back(psi);
  }
  return tr;
}

/// Dense U(t1, t0) composed from Crank-Nicolson steps.
inline Eigen::MatrixXcd evolution_matrix(const GridSystem& sys, double t0, double t1, int steps) {
  if (steps < 1) throw OperatorError("steps must be >= 1");
  const int N = sys.grid.N;
  const double dt = (t1 - t0) / steps;
  if (dt == 0.0) return Eigen::MatrixXcd::Identity(N, N);
  detail::CrankNicolsonStep step(sys, dt);
  if (!sys.time_dependent()) {
    step.prepare(t0);
    const Eigen::MatrixXcd one = step.apply(Eigen::MatrixXcd::Identity(N, N));
    return detail::matrix_power(one, steps);
  }
  Eigen::MatrixXcd U = Eigen::MatrixXcd::Identity(N, N);
  for (int k = 0; k < steps; ++k) {
    step.prepare(t0 + k * dt);
    U = step.apply(U);
  }
  return U;
}

// ---------------------------------------------------------------------------
// Norms

/// States band-limited to |k| <= kmax (discrete Fourier modes) that keep at
/// least 1 - leakage of their weight inside the central `span` fraction of
/// the grid.
struct ResolvedSubspace {
  double span = 0.6;
  double kmax = 4.0;
  double leakage = 1e-8;
};

/// Orthonormal basis of the resolved subspace: eigenvectors of the window
/// operator compressed to the band, with eigenvalue >= 1 - leakage.
inline Eigen::MatrixXcd resolved_basis(const Grid1D& g, const ResolvedSubspace& rs = {}) {
  const int N = g.N;
  const double dk = 2 * std::numbers::pi / (N * g.dx());
  const int nmax = std::min(static_cast<int>(std::floor(rs.kmax / dk)), (N - 1) / 2);
  const int M = 2 * nmax + 1;
  Eigen::MatrixXcd F(N, M);
  for (int c = 0; c < M; ++c)
    for (int j = 0; j < N; ++j)
      F(j, c) = std::exp(cplx(0.0, 2 * std::numbers::pi * (c - nmax) * j / N)) / std::sqrt(static_cast<double>(N));
  const double mid = 0.5 * (g.xmin + g.xmax);
  const double half = 0.5 * rs.span * (g.xmax - g.xmin);
  Eigen::VectorXd w(N);
  for (int j = 0; j < N; ++j) w(j) = std::abs(g.x(j) - mid) <= half ? 1.0 : 0.0;
  const Eigen::MatrixXcd C = F.adjoint() * w.cast<cplx>().asDiagonal() * F;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(C);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < M; ++i)
    if (es.eigenvalues()(i) >= 1 - rs.leakage) keep.push_back(i);
  Eigen::MatrixXcd Q(N, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) Q.col(static_cast<Eigen::Index>(i)) = F * es.eigenvectors().col(keep[i]);
  return Q;
}

/// Largest singular value by power iteration on M^H M.
inline double operator_norm(const Eigen::MatrixXcd& M, int iterations = 50, std::uint64_t seed = 20240917) {
  if (M.cols() == 0 || M.rows() == 0) return 0.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Eigen::VectorXcd v(M.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = cplx(d(rng), d(rng));
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXcd w = M * v;
    sigma = w.norm();
    if (sigma == 0.0) return 0.0;
    v = M.adjoint() * w;
    const double n = v.norm();
    if (n == 0.0) return sigma;
    v /= n;
  }
  return (M * v).norm();
}

/// Operator norm restricted to span(Q) for orthonormal Q.
inline double restricted_norm(const Eigen::MatrixXcd& M, const Eigen::MatrixXcd& Q, int iterations = 50,
                              std::uint64_t seed = 20240917) {
  return operator_norm(M * Q, iterations, seed);
}

// ---------------------------------------------------------------------------
// Conserved operators

struct ConservedOptions {
  /// Grid size for the matrix form; 0 skips it.
  int matrix_N = 0;
  int matrix_steps = 0;
  ResolvedSubspace subspace;
  int power_iterations = 50;
  std::uint64_t seed = 20240917;
  /// Points at each edge monitored for contamination.
  int edge_points = 5;
  double edge_tol = 1e-8;
};

struct ConservedReport {
  std::vector<double> times;
  std::vector<double> values;
  double initial = 0.0;
  /// max_k |<A>(t_k) - <A>(t_0)| / (1 + |<A>(t_0)|)
  double max_drift = 0.0;
  double max_norm_drift = 0.0;
  /// ||A(t1) U - U A(t0)||_R / ||A(t0)||_R on the reduced grid.
  std::optional<double> matrix_deviation;
  std::optional<double> matrix_deviation_full;
  double max_edge_mass = 0.0;
  bool boundary_warning = false;
};

inline double edge_mass(const Eigen::VectorXcd& psi, const Grid1D& g, int points) {
  double m = 0.0;
  const int n = std::min(points, g.N / 2);
  for (int j = 0; j < n; ++j) m += std::norm(psi(j)) + std::norm(psi(g.N - 1 - j));
  return m / psi.squaredNorm();
}

inline ConservedReport check_conserved(const OperatorSpec& spec, const GridSystem& sys, const Eigen::VectorXcd& psi0,
                                       double t0, double t1, int steps, const ConservedOptions& opt = {}) {
  const CnTrajectory tr = crank_nicolson_evolve(sys, psi0, t0, t1, steps);
  ConservedReport rep;
  const double n0 = psi0.norm();
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    const double t = tr.times[k];
    const double a = expectation(operator_sparse(spec, sys.grid, t, sys.hbar, sys.constants), tr.states[k]);
    rep.times.push_back(t);
    rep.values.push_back(a);
    if (k > 0) rep.max_norm_drift = std::max(rep.max_norm_drift, std::abs(tr.states[k].norm() - n0) / n0);
    rep.max_edge_mass = std::max(rep.max_edge_mass, edge_mass(tr.states[k], sys.grid, opt.edge_points));
  }
  rep.initial = rep.values.front();
  for (double a : rep.values) rep.max_drift = std::max(rep.max_drift, std::abs(a - rep.initial) / (1 + std::abs(rep.initial)));
  rep.boundary_warning = rep.max_edge_mass > opt.edge_tol;

  if (opt.matrix_N > 0) {
    GridSystem small = sys;
    small.grid = Grid1D(sys.grid.xmin, sys.grid.xmax, opt.matrix_N);
    const Eigen::MatrixXcd U = evolution_matrix(small, t0, t1, opt.matrix_steps > 0 ? opt.matrix_steps : steps);
    const Eigen::MatrixXcd A0 = build_operator(spec, small.grid, t0, sys.hbar, sys.constants).matrix;
    const Eigen::MatrixXcd A1 = build_operator(spec, small.grid, t1, sys.hbar, sys.constants).matrix;
    const Eigen::MatrixXcd D = A1 * U - U * A0;
    const Eigen::MatrixXcd Q = resolved_basis(small.grid, opt.subspace);
    const double a0 = restricted_norm(A0, Q, opt.power_iterations, opt.seed);
    rep.matrix_deviation = a0 > 0 ? restricted_norm(D, Q, opt.power_iterations, opt.seed) / a0
                                  : restricted_norm(D, Q, opt.power_iterations, opt.seed);
    const double a0f = operator_norm(A0, opt.power_iterations, opt.seed);
    rep.matrix_deviation_full = operator_norm(D, opt.power_iterations, opt.seed) / (a0f > 0 ? a0f : 1.0);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Symmetry operators

using OperatorFactory = std::function<GridOperator(const Grid1D&, double t)>;

/// T_V(t) psi(x) = exp[(i/hbar)(m V x - m V^2 t/2 - m g V t^2/2)] psi(x - V t),
/// with V t an integer number of grid steps. `ablate` drops the m g V t^2/2 term.
inline GridOperator galilean_boost_operator(const Grid1D& g, double t, double m, double gacc, double V,
                                            double hbar = 1.0, bool ablate = false) {
  const double shift = V * t / g.dx();
  const double rounded = std::round(shift);
  if (std::abs(shift - rounded) > 1e-9 * std::max(1.0, std::abs(shift)))
    throw OperatorError("boost shift V t = " + std::to_string(V * t) + " is not a whole number of grid steps");
  const int s = static_cast<int>(rounded);
  GridOperator T{g, t, Eigen::MatrixXcd::Zero(g.N, g.N)};
  for (int j = 0; j < g.N; ++j) {
    const int k = j - s;
    if (k < 0 || k >= g.N) continue;
    const double x = g.x(j);
    double phase = m * V * x - 0.5 * m * V * V * t;
    if (!ablate) phase -= 0.5 * m * gacc * V * t * t;
    T.matrix(j, k) = std::exp(cplx(0.0, phase / hbar));
  }
  return T;
}

struct SymmetryOpOptions {
  ResolvedSubspace subspace;
  int power_iterations = 50;
  std::uint64_t seed = 20240917;
};

struct SymmetryOpReport {
  /// ||T(t1) U - U T(t0)||_R / ||U||_R
  double deviation = 0.0;
  /// Same ratio with full-space norms.
  double deviation_full = 0.0;
  double norm_U = 0.0;
  int subspace_dim = 0;
};

inline SymmetryOpReport check_symmetry_operator(const OperatorFactory& T, const GridSystem& sys, double t0, double t1,
                                                int steps, const SymmetryOpOptions& opt = {}) {
  const Eigen::MatrixXcd U = evolution_matrix(sys, t0, t1, steps);
  const Eigen::MatrixXcd T0 = T(sys.grid, t0).matrix;
  const Eigen::MatrixXcd T1 = T(sys.grid, t1).matrix;
  const Eigen::MatrixXcd D = T1 * U - U * T0;
  const Eigen::MatrixXcd Q = resolved_basis(sys.grid, opt.subspace);
  SymmetryOpReport rep;
  rep.subspace_dim = static_cast<int>(Q.cols());
  rep.norm_U = restricted_norm(U, Q, opt.power_iterations, opt.seed);
  rep.deviation = restricted_norm(D, Q, opt.power_iterations, opt.seed) / rep.norm_U;
  rep.deviation_full = operator_norm(D, opt.power_iterations, opt.seed) / operator_norm(U, opt.power_iterations, opt.seed);
  return rep;
}

}  // namespace noether
