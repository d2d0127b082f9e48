#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "noether/mechanics.hpp"
#include "noether/parse.hpp"

using namespace noether;

namespace {

Lagrangian system(int n, const char* text, std::map<std::string, double> constants = {}) {
  return Lagrangian{n, parse_expr(text, n), std::move(constants), {}};
}

const char* kGravity1D = "m/2*v1^2 - m*g*q1";
const char* kGravity2D = "m/2*(v1^2 + v2^2) - m*g*q2";
const char* kOscillator2D = "m/2*(v1^2 + v2^2) - m*w^2/2*(q1^2 + q2^2)";
const char* kMagnetic = "m/2*(v1^2 + v2^2) + e*B0/(2*c)*(q1*v2 - q2*v1)";

InfGen galilean_generator() {
  return {Expr(0), {parse_expr("-t", 1)}, parse_expr("-m*q1 + m*g*t^2/2", 1)};
}

InfGen rotation_gravity_generator() {
  return {Expr(0), {parse_expr("q2 + g*t^2/2", 2), parse_expr("-q1", 2)}, parse_expr("m*g*t*q1", 2)};
}

}  // namespace

TEST_CASE("conjugate momenta", "[mechanics]") {
  auto p = conjugate_momenta(system(1, kGravity1D));
  REQUIRE(p.size() == 1);
  CHECK(equal_numeric(p[0], parse_expr("m*v1", 1)));

  p = conjugate_momenta(system(2, kGravity2D));
  CHECK(equal_numeric(p[0], parse_expr("m*v1", 2)));
  CHECK(equal_numeric(p[1], parse_expr("m*v2", 2)));

  p = conjugate_momenta(system(2, kMagnetic));
  CHECK(equal_numeric(p[0], parse_expr("m*v1 - e*B0/(2*c)*q2", 2)));
  CHECK(equal_numeric(p[1], parse_expr("m*v2 + e*B0/(2*c)*q1", 2)));
}

TEST_CASE("Euler-Lagrange accelerations", "[mechanics]") {
  auto el = euler_lagrange(system(1, kGravity1D));
  REQUIRE(el.is_symbolic());
  CHECK(equal_numeric(el.symbolic()->at(0), parse_expr("-g", 1)));

  el = euler_lagrange(system(1, "m/2*v1^2"));
  REQUIRE(el.is_symbolic());
  CHECK(equal_numeric(el.symbolic()->at(0), Expr(0)));

  el = euler_lagrange(system(2, kOscillator2D));
  REQUIRE(el.is_symbolic());
  CHECK(equal_numeric(el.symbolic()->at(0), parse_expr("-w^2*q1", 2)));
  CHECK(equal_numeric(el.symbolic()->at(1), parse_expr("-w^2*q2", 2)));

  // Lorentz force: m a = (e B0 / c) (v2, -v1).
  el = euler_lagrange(system(2, kMagnetic));
  REQUIRE(el.is_symbolic());
  CHECK(equal_numeric(el.symbolic()->at(0), parse_expr("e*B0/(m*c)*v2", 2)));
  CHECK(equal_numeric(el.symbolic()->at(1), parse_expr("-e*B0/(m*c)*v1", 2)));
}

TEST_CASE("Euler-Lagrange falls back to a per-point solve", "[mechanics]") {
  // Hessian [[1, 1/2], [1/2, 1]]; forces (-q1, 0).
  const auto sys = system(2, "(v1^2 + v1*v2 + v2^2)/2 - q1^2/2");
  const auto el = euler_lagrange(sys);
  CHECK_FALSE(el.is_symbolic());
  Bindings b{{Symbol::coordinate(0), 1.2}, {Symbol::coordinate(1), 0.0},
             {Symbol::velocity(0), 0.3}, {Symbol::velocity(1), -0.4}, {Symbol::time(), 0.0}};
  const auto a = el.accelerations(b);
  // Solve [[1, .5], [.5, 1]] a = (-1.2, 0) by hand: a = (-1.6, 0.8).
  CHECK(a[0] == Catch::Approx(-1.6).epsilon(1e-12));
  CHECK(a[1] == Catch::Approx(0.8).epsilon(1e-12));

  const auto singular = system(2, "(v1 + v2)^2/2");
  CHECK_THROWS_AS(euler_lagrange(singular).accelerations(b), MechanicsError);
}

TEST_CASE("RK4 trajectories", "[mechanics]") {
  auto tr = integrate_trajectory(system(1, "m/2*v1^2", {{"m", 1}}), {0.0}, {1.0}, 0.0, 1.0, 100);
  CHECK(std::abs(tr.states.back()[0] - 1.0) < 1e-10);

  tr = integrate_trajectory(system(1, kGravity1D, {{"m", 1}, {"g", 1}}), {0.0}, {0.0}, 0.0, 1.0, 100);
  CHECK(std::abs(tr.states.back()[0] + 0.5) < 1e-8);

  tr = integrate_trajectory(system(1, "m/2*v1^2 - m*w^2/2*q1^2", {{"m", 1}, {"w", 1}}), {1.0}, {0.0}, 0.0,
                            std::numbers::pi, 1000);
  CHECK(std::abs(tr.states.back()[0] + 1.0) < 1e-6);
  CHECK(tr.times.size() == 1001);
  CHECK(tr.step == Catch::Approx(std::numbers::pi / 1000));

  CHECK_THROWS_AS(integrate_trajectory(system(1, kGravity1D, {{"m", 1}, {"g", 1}}), {0.0}, {0.0}, 0.0, 1.0, 0),
                  MechanicsError);
}

TEST_CASE("RK4 is fourth order", "[mechanics][property]") {
  // The free particle is integrated exactly, so the order is measured on the
  // oscillator against its cosine solution.
  const auto sys = system(1, "v1^2/2 - q1^2/2");
  auto error = [&](int steps) {
    const auto tr = integrate_trajectory(sys, {1.0}, {0.0}, 0.0, 2.0, steps);
    return std::abs(tr.states.back()[0] - std::cos(2.0));
  };
  const double ratio = error(20) / error(40);
  CHECK(ratio > 14.0);
  CHECK(ratio < 18.0);
}

TEST_CASE("Noether charges", "[mechanics]") {
  const auto grav = system(1, kGravity1D);
  CHECK(equal_numeric(noether_charge(grav, galilean_generator()), parse_expr("-m*v1*t + m*q1 - m*g*t^2/2", 1)));

  const auto free = system(1, "m/2*v1^2");
  CHECK(equal_numeric(noether_charge(free, {Expr(1), {Expr(0)}, Expr(0)}), parse_expr("-m/2*v1^2", 1)));

  const auto grav2 = system(2, kGravity2D);
  CHECK(equal_numeric(noether_charge(grav2, rotation_gravity_generator()),
                      parse_expr("m*v1*(q2 + g*t^2/2) - m*v2*q1 - m*g*t*q1", 2)));

  CHECK_THROWS_AS(noether_charge(grav2, galilean_generator()), MechanicsError);
}

TEST_CASE("charges are conserved along trajectories", "[mechanics]") {
  const auto free = system(1, "m/2*v1^2", {{"m", 1.5}});
  auto tr = integrate_trajectory(free, {0.3}, {-0.7}, 0.0, 2.0, 200);
  CHECK(check_charge_conserved(free, parse_expr("m*v1", 1), tr) < 1e-12);

  const auto grav = system(1, kGravity1D, {{"m", 1}, {"g", 1}});
  tr = integrate_trajectory(grav, {0.4}, {1.3}, 0.0, 2.0, 1000);
  CHECK(check_charge_conserved(grav, noether_charge(grav, galilean_generator()), tr) < 1e-8);
  // Plain momentum is not conserved under gravity.
  CHECK(check_charge_conserved(grav, parse_expr("m*v1", 1), tr) > 0.1);

  const auto grav2 = system(2, kGravity2D, {{"m", 1}, {"g", 1}});
  tr = integrate_trajectory(grav2, {0.4, -0.2}, {1.3, 0.6}, 0.0, 2.0, 1000);
  CHECK(check_charge_conserved(grav2, noether_charge(grav2, rotation_gravity_generator()), tr) < 1e-7);
}

TEST_CASE("the 2D charge reduces to minus the angular momentum at g = 0", "[mechanics]") {
  const auto grav2 = system(2, kGravity2D);
  const Expr charge = noether_charge(grav2, rotation_gravity_generator());
  const Expr at_zero = substitute(charge, {{Symbol::constant("g"), Expr(0)}});
  CHECK(equal_numeric(at_zero, parse_expr("-m*(q1*v2 - q2*v1)", 2)));
}

TEST_CASE("trajectory CSV", "[mechanics]") {
  const auto grav2 = system(2, kGravity2D, {{"m", 1}, {"g", 1}});
  const auto tr = integrate_trajectory(grav2, {0, 0}, {1, 0}, 0.0, 1.0, 4);
  std::ostringstream os;
  write_trajectory_csv(os, tr, 2);
  std::string header;
  std::istringstream is(os.str());
  std::getline(is, header);
  CHECK(header == "t,q1,q2,v1,v2");
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  CHECK(rows == 5);
}
