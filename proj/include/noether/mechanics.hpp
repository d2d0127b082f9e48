#pragma once

// Lagrangian systems: momenta, Euler-Lagrange accelerations, RK4
// trajectories and Noether charges.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "noether/expr.hpp"
#include "noether/probe.hpp"

namespace noether {

class MechanicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Lagrangian {
  int n_dof = 1;
  Expr L;
  /// Values used by numeric work (trajectories, kernels).
  std::map<std::string, double> constants;
  /// Constants held at their bound value during probabilistic identity
  /// checks. Everything else is sampled.
  std::set<std::string> pinned;

  Bindings constant_bindings() const {
    Bindings b;
    for (const auto& [k, val] : constants) b[Symbol::constant(k)] = val;
    return b;
  }

  Bindings pinned_bindings() const {
    Bindings b;
    for (const auto& name : pinned) {
      auto it = constants.find(name);
      if (it == constants.end()) throw MechanicsError("pinned constant '" + name + "' has no value");
      b[Symbol::constant(name)] = it->second;
    }
    return b;
  }

  double constant(const std::string& name, std::optional<double> fallback = std::nullopt) const {
    auto it = constants.find(name);
    if (it != constants.end()) return it->second;
    if (fallback) return *fallback;
    throw MechanicsError("constant '" + name + "' is not bound");
  }
};

/// Generator (xi, eta_i) of a one-parameter family, plus the gauge rate G.
struct InfGen {
  Expr xi;
  std::vector<Expr> eta;
  Expr G;
};

struct Trajectory {
  std::vector<double> times;
  /// Per sample: q_1..q_n followed by v_1..v_n.
  std::vector<std::vector<double>> states;
  double step = 0.0;
  std::string integrator = "rk4";
};

inline Bindings state_bindings(const Lagrangian& sys, std::span<const double> state, double time) {
  Bindings b = sys.constant_bindings();
  for (int i = 0; i < sys.n_dof; ++i) {
    b[Symbol::coordinate(i)] = state[i];
    b[Symbol::velocity(i)] = state[sys.n_dof + i];
  }
  b[Symbol::time()] = time;
  return b;
}

inline std::vector<Expr> conjugate_momenta(const Lagrangian& sys) {
  std::vector<Expr> p;
  for (int i = 0; i < sys.n_dof; ++i) p.push_back(diff(sys.L, Symbol::velocity(i)));
  return p;
}

/// Accelerations a_i(q, v, t). Symbolic when the velocity Hessian is a
/// constant diagonal matrix, otherwise solved per evaluation point.
class EulerLagrange {
 public:
  explicit EulerLagrange(const Lagrangian& sys) : sys_(sys) {
    const int n = sys.n_dof;
    const auto p = conjugate_momenta(sys);
    hessian_.assign(n, std::vector<Expr>(n));
    rhs_.resize(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) hessian_[i][j] = diff(p[i], Symbol::velocity(j));
      std::vector<Expr> r{diff(sys.L, Symbol::coordinate(i)), -diff(p[i], Symbol::time())};
      for (int j = 0; j < n; ++j) r.push_back(-(diff(p[i], Symbol::coordinate(j)) * v(j)));
      rhs_[i] = add(std::move(r));
    }
    bool constant_diagonal = true;
    for (int i = 0; i < n && constant_diagonal; ++i) {
      for (int j = 0; j < n; ++j) {
        const Expr& h = hessian_[i][j];
        if (depends_on_any(h, [](const Symbol& s) { return s.is_variable(); })) { constant_diagonal = false; break; }
        if (i != j && !h.is_zero() && !equal_numeric(h, Expr(0))) { constant_diagonal = false; break; }
      }
    }
    if (constant_diagonal) {
      std::vector<Expr> acc;
      for (int i = 0; i < n; ++i) acc.push_back(rhs_[i] / hessian_[i][i]);
      symbolic_ = std::move(acc);
    }
  }

  bool is_symbolic() const { return symbolic_.has_value(); }
  const std::optional<std::vector<Expr>>& symbolic() const { return symbolic_; }

  std::vector<double> accelerations(const Bindings& b) const {
    const int n = sys_.n_dof;
    std::vector<double> a(n);
    if (symbolic_) {
      for (int i = 0; i < n; ++i) a[i] = eval((*symbolic_)[i], b);
      return a;
    }
    Eigen::MatrixXd H(n, n);
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) {
      r(i) = eval(rhs_[i], b);
      for (int j = 0; j < n; ++j) H(i, j) = eval(hessian_[i][j], b);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
    if (!lu.isInvertible()) throw MechanicsError("singular velocity Hessian");
    Eigen::VectorXd x = lu.solve(r);
    for (int i = 0; i < n; ++i) a[i] = x(i);
    return a;
  }

 private:
  Lagrangian sys_;
  std::vector<std::vector<Expr>> hessian_;
  std::vector<Expr> rhs_;
  std::optional<std::vector<Expr>> symbolic_;
};

inline EulerLagrange euler_lagrange(const Lagrangian& sys) { return EulerLagrange(sys); }

/// Classical RK4 at uniform steps on the first-order system (q, v).
inline Trajectory integrate_trajectory(const Lagrangian& sys, const std::vector<double>& q0,
                                       const std::vector<double>& v0, double t0, double t1, int steps) {
  if (steps < 1) throw MechanicsError("steps must be >= 1");
  const int n = sys.n_dof;
  if (static_cast<int>(q0.size()) != n || static_cast<int>(v0.size()) != n)
    throw MechanicsError("initial state does not match n_dof");
  const EulerLagrange el(sys);
  const double h = (t1 - t0) / steps;

  auto rate = [&](const std::vector<double>& y, double time) {
    const auto a = el.accelerations(state_bindings(sys, y, time));
    std::vector<double> dy(2 * n);
    for (int i = 0; i < n; ++i) { dy[i] = y[n + i]; dy[n + i] = a[i]; }
    return dy;
  };
  auto axpy = [](const std::vector<double>& y, double c, const std::vector<double>& k) {
    std::vector<double> out(y);
    for (std::size_t i = 0; i < y.size(); ++i) out[i] += c * k[i];
    return out;
  };

  Trajectory tr;
  tr.step = h;
  std::vector<double> y(q0);
  y.insert(y.end(), v0.begin(), v0.end());
  tr.times.push_back(t0);
  tr.states.push_back(y);
  for (int k = 0; k < steps; ++k) {
    const double time = t0 + k * h;
    const auto k1 = rate(y, time);
    const auto k2 = rate(axpy(y, h / 2, k1), time + h / 2);
    const auto k3 = rate(axpy(y, h / 2, k2), time + h / 2);
    const auto k4 = rate(axpy(y, h, k3), time + h);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    tr.times.push_back(t0 + (k + 1) * h);
    tr.states.push_back(y);
  }
  return tr;
}

/// sum_i p_i eta_i + xi (L - sum_i p_i v_i) - G
inline Expr noether_charge(const Lagrangian& sys, const InfGen& gen) {
  if (static_cast<int>(gen.eta.size()) != sys.n_dof) throw MechanicsError("generator size does not match n_dof");
  const auto p = conjugate_momenta(sys);
  std::vector<Expr> terms, pv{sys.L};
  for (int i = 0; i < sys.n_dof; ++i) {
    terms.push_back(p[i] * gen.eta[i]);
    pv.push_back(-(p[i] * v(i)));
  }
  terms.push_back(gen.xi * add(std::move(pv)));
  terms.push_back(-gen.G);
  return add(std::move(terms));
}

/// max_k |C(t_k) - C(t_0)| / (1 + |C(t_0)|)
inline double check_charge_conserved(const Lagrangian& sys, const Expr& charge, const Trajectory& traj) {
  if (depends_on_any(charge, [](const Symbol& s) { return s.kind == SymbolKind::parameter; }))
    throw MechanicsError("charge depends on the group parameter");
  if (traj.states.empty()) return 0.0;
  const double c0 = eval(charge, state_bindings(sys, traj.states[0], traj.times[0]));
  double worst = 0.0;
  for (std::size_t k = 1; k < traj.states.size(); ++k) {
    const double c = eval(charge, state_bindings(sys, traj.states[k], traj.times[k]));
    worst = std::max(worst, std::abs(c - c0) / (1.0 + std::abs(c0)));
  }
  return worst;
}

/// CSV with header t,q1..qn,v1..vn.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, int n_dof) {
  os << "t";
  for (int i = 1; i <= n_dof; ++i) os << ",q" << i;
  for (int i = 1; i <= n_dof; ++i) os << ",v" << i;
  os << "\n";
  os.precision(17);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    os << tr.times[k];
    for (double x : tr.states[k]) os << "," << x;
    os << "\n";
  }
}

}  // namespace noether
