#include <catch_amalgamated.hpp>

#include "noether/parse.hpp"
#include "noether/symmetry.hpp"

using namespace noether;

namespace {

Lagrangian system(int n, const char* text, std::map<std::string, double> constants = {},
                  std::set<std::string> pinned = {}) {
  return Lagrangian{n, parse_expr(text, n), std::move(constants), std::move(pinned)};
}

PointFamily family(int n, std::vector<const char*> qp, const char* param = "s", const char* tp = "t") {
  ParseOptions opt;
  opt.parameter = param;
  PointFamily f;
  f.param = param;
  for (const char* e : qp) f.qprime.push_back(parse_expr(e, n, opt));
  f.tprime = parse_expr(tp, n, opt);
  return f;
}

Expr ex(const char* text, int n = 1, const char* param = "s") {
  ParseOptions opt;
  opt.parameter = param;
  return parse_expr(text, n, opt);
}

const char* kGravity1D = "m/2*v1^2 - m*g*q1";
const char* kGravity2D = "m/2*(v1^2 + v2^2) - m*g*q2";

PointFamily galilean() { return family(1, {"q1 - V*t"}, "V"); }

PointFamily rotation_gravity() {
  return family(2, {"q1*cos(s) + q2*sin(s) + g*t^2/2*sin(s)", "-q1*sin(s) + q2*cos(s) + g*t^2/2*(cos(s) - 1)"});
}

PointFamily oscillator_to_magnetic() {
  return family(2, {"q1*cos(w*t) - q2*sin(w*t)", "q1*sin(w*t) + q2*cos(w*t)"});
}

}  // namespace

TEST_CASE("infinitesimal generators", "[symmetry]") {
  auto g = infinitesimal_of(galilean());
  CHECK(g.xi.is_zero());
  CHECK(equal_numeric(g.eta[0], ex("-t")));

  g = infinitesimal_of(rotation_gravity());
  CHECK(g.xi.is_zero());
  CHECK(equal_numeric(g.eta[0], ex("q2 + g*t^2/2", 2)));
  CHECK(equal_numeric(g.eta[1], ex("-q1", 2)));

  g = infinitesimal_of(PointFamily::identity(2));
  CHECK(g.xi.is_zero());
  CHECK(g.eta[0].is_zero());
  CHECK(g.eta[1].is_zero());

  CHECK(identity_defect(galilean()) == 0.0);
  CHECK(identity_defect(rotation_gravity()) < 1e-14);
  CHECK(identity_defect(family(1, {"q1 + 1 + s"})) > 0.5);
}

TEST_CASE("pullback of a Lagrangian", "[symmetry]") {
  const auto grav = system(1, kGravity1D);
  CHECK(equal_numeric(pullback_lagrangian(grav, galilean()), ex("m/2*(v1 - V)^2 - m*g*(q1 - V*t)", 1, "V")));
  CHECK(equal_numeric(pullback_lagrangian(grav, PointFamily::identity(1)), grav.L));

  const auto free = system(1, "m/2*v1^2");
  CHECK(equal_numeric(pullback_lagrangian(free, family(1, {"q1 + g*t^2/2"})), ex("m/2*(v1 + g*t)^2")));

  // Time reparametrization t' = 2t: dq'/dt' = v/2 and the measure doubles.
  const auto scaled = pullback_lagrangian(free, family(1, {"q1"}, "s", "2*t"));
  CHECK(equal_numeric(scaled, ex("m/4*v1^2")));

  CHECK_THROWS_AS(pullback_lagrangian(free, family(1, {"q1"}, "s", "0*t + 1")), MechanicsError);
}

TEST_CASE("gauge extraction", "[symmetry]") {
  auto g = extract_gauge(ex("-m*V*v1 + m*V^2/2 + m*g*V*t"), 1);
  REQUIRE(g.F);
  CHECK(equal_numeric(*g.F, ex("-m*V*q1 + m*V^2*t/2 + m*g*V*t^2/2")));

  g = extract_gauge(Expr(0), 1);
  REQUIRE(g.F);
  CHECK(g.F->is_zero());

  g = extract_gauge(ex("m*g*t*v1 + m*g*q1 + m*g^2*t^2/2"), 1);
  REQUIRE(g.F);
  CHECK(equal_numeric(*g.F, ex("m*g*t*q1 + m*g^2*t^3/6")));
}

TEST_CASE("gauge extraction failures", "[symmetry]") {
  auto g = extract_gauge(ex("m*v1^2"), 1);
  CHECK_FALSE(g.F);
  CHECK(g.diagnostics.find("affine") != std::string::npos);
  CHECK(g.residual_norm > 1e-3);

  // q1 v2 - q2 v1 is not closed.
  g = extract_gauge(ex("q1*v2 - q2*v1", 2), 2);
  CHECK_FALSE(g.F);
  CHECK(g.diagnostics.find("integrability") != std::string::npos);

  // d/dt sin(q1) is a total derivative but not polynomial.
  g = extract_gauge(ex("cos(q1)*v1"), 1);
  CHECK_FALSE(g.F);
  CHECK(g.diagnostics.find("polynomial") != std::string::npos);
}

TEST_CASE("property: extracted gauges reproduce the residual", "[symmetry][property]") {
  for (const char* F : {"q1^2*t - 3*q2*t^3", "m*q1*q2 + sin(s)*t*q2 + cos(w*s)*t^2", "q1^3*q2 + t^5 - 7*q2"}) {
    const Expr truth = ex(F, 2);
    const Expr residual = total_time_derivative(truth, 2);
    const auto g = extract_gauge(residual, 2);
    INFO(F);
    REQUIRE(g.F);
    CHECK(equal_numeric(total_time_derivative(*g.F, 2), residual));
    // Normalization F(0, 0) = 0 fixes the additive constant.
    CHECK(equal_numeric(*g.F, truth - substitute(truth, {{Symbol::coordinate(0), Expr(0)},
                                                         {Symbol::coordinate(1), Expr(0)},
                                                         {Symbol::time(), Expr(0)}})));
  }
}

TEST_CASE("variational symmetries", "[symmetry]") {
  auto cert = check_variational_symmetry(system(1, kGravity1D), galilean());
  CHECK(cert.kind == CertificateKind::exact_symmetry);
  REQUIRE(cert.F);
  CHECK(equal_numeric(*cert.F, ex("-m*V*q1 + m*V^2*t/2 + m*g*V*t^2/2", 1, "V")));
  CHECK(cert.residual_norm < 1e-10);

  cert = check_variational_symmetry(system(2, kGravity2D), rotation_gravity());
  CHECK(cert.kind == CertificateKind::exact_symmetry);
  REQUIRE(cert.F);
  CHECK(equal_numeric(*cert.F, ex("m*g*(t*q2*(1 - cos(s)) + t*q1*sin(s) + g*t^3/2*(1 - cos(s)))", 2)));

  cert = check_variational_symmetry(system(2, "m/2*(v1^2 + v2^2)"),
                                    family(2, {"q1*cos(s) - q2*sin(s)", "q1*sin(s) + q2*cos(s)"}));
  CHECK(cert.kind == CertificateKind::exact_symmetry);
  REQUIRE(cert.F);
  CHECK(equal_numeric(*cert.F, Expr(0)));

  // A translation in uniform gravity needs the gauge -m g a t.
  cert = check_variational_symmetry(system(1, kGravity1D), family(1, {"q1 + a"}, "a"));
  CHECK(cert.kind == CertificateKind::exact_symmetry);
  CHECK(equal_numeric(*cert.F, ex("-m*g*a*t", 1, "a")));

  // Scaling is not a symmetry of the free particle.
  cert = check_variational_symmetry(system(1, "m/2*v1^2"), family(1, {"exp(s)*q1"}));
  CHECK(cert.kind == CertificateKind::failure);
}

TEST_CASE("infinitesimal invariance residual", "[symmetry]") {
  CHECK(check_infinitesimal(system(1, kGravity1D), {Expr(0), {ex("-t")}, ex("-m*q1 + m*g*t^2/2")}) < 1e-12);
  CHECK(check_infinitesimal(system(2, kGravity2D), {Expr(0), {ex("q2 + g*t^2/2", 2), ex("-q1", 2)}, ex("m*g*t*q1", 2)}) <
        1e-12);
  // Scaling leaves m v^2 behind.
  CHECK(check_infinitesimal(system(1, "m/2*v1^2"), {Expr(0), {ex("q1")}, Expr(0)}) > 1e-2);
  // Time translation of a time-independent Lagrangian.
  CHECK(check_infinitesimal(system(1, kGravity1D), {Expr(1), {Expr(0)}, Expr(0)}) < 1e-12);
}

TEST_CASE("property: certified families pass the infinitesimal condition", "[symmetry][property]") {
  struct Case {
    Lagrangian sys;
    PointFamily fam;
  };
  const std::vector<Case> cases{
      {system(1, kGravity1D), galilean()},
      {system(2, kGravity2D), rotation_gravity()},
      {system(1, kGravity1D), family(1, {"q1 + a"}, "a")},
  };
  for (const auto& c : cases) {
    const auto cert = check_variational_symmetry(c.sys, c.fam);
    REQUIRE(cert.kind == CertificateKind::exact_symmetry);
    InfGen gen = infinitesimal_of(c.fam);
    const Symbol s = c.fam.parameter();
    gen.G = substitute(diff(*cert.F, s), {{s, Expr(0)}});
    CHECK(check_infinitesimal(c.sys, gen) < 1e-10);
  }
}

TEST_CASE("equivalence between Lagrangians", "[symmetry]") {
  const auto free = system(1, "m/2*v1^2");
  const auto grav = system(1, kGravity1D);
  auto cert = check_equivalence(free, grav, family(1, {"q1 + g*t^2/2"}));
  CHECK(cert.kind == CertificateKind::equivalence);
  REQUIRE(cert.F);
  CHECK(equal_numeric(*cert.F, ex("m*g*t*q1 + m*g^2*t^3/6")));

  cert = check_equivalence(grav, grav, PointFamily::identity(1));
  CHECK(cert.kind == CertificateKind::equivalence);
  CHECK(cert.F->is_zero());

  CHECK_THROWS_AS(check_equivalence(free, system(2, kGravity2D), PointFamily::identity(1)), MechanicsError);
}

TEST_CASE("oscillator and magnetic field are equivalent only on resonance", "[symmetry]") {
  const std::map<std::string, double> tuned{{"m", 1.3}, {"w", 0.8}, {"e", 1.0}, {"c", 1.0}, {"B0", 2 * 1.3 * 0.8}};
  const std::set<std::string> osc_pins{"m", "w"}, mag_pins{"m", "e", "c", "B0"};
  const auto osc = system(2, "m/2*(v1^2 + v2^2) - m*w^2/2*(q1^2 + q2^2)", tuned, osc_pins);
  const auto mag = system(2, "m/2*(v1^2 + v2^2) + e*B0/(2*c)*(q1*v2 - q2*v1)", tuned, mag_pins);
  auto cert = check_equivalence(osc, mag, oscillator_to_magnetic());
  CHECK(cert.kind == CertificateKind::equivalence);
  CHECK(cert.residual_norm < 1e-10);
  REQUIRE(cert.F);
  CHECK(equal_numeric(*cert.F, Expr(0), probe_for(osc)));

  auto detuned = tuned;
  detuned["w"] *= 1.1;
  const auto osc2 = system(2, "m/2*(v1^2 + v2^2) - m*w^2/2*(q1^2 + q2^2)", detuned, osc_pins);
  cert = check_equivalence(osc2, mag, oscillator_to_magnetic());
  CHECK(cert.kind == CertificateKind::failure);
  CHECK(cert.residual_norm > 1e-3);

  auto heavier = tuned;
  heavier["m"] = 2.0;
  CHECK_THROWS_AS(check_equivalence(system(2, "m/2*v1^2", heavier, {"m"}), mag, oscillator_to_magnetic()),
                  MechanicsError);
}

TEST_CASE("unimodularity gate", "[symmetry]") {
  CHECK(unimodularity_defect(galilean()) == 0.0);
  CHECK(unimodularity_defect(rotation_gravity()) < 1e-12);
  CHECK_NOTHROW(require_unimodular(oscillator_to_magnetic()));
  CHECK(unimodularity_defect(family(1, {"exp(s)*q1"})) > 1e-2);
  CHECK_THROWS_AS(require_unimodular(family(1, {"exp(s)*q1"})), NotUnimodular);
  CHECK_THROWS_AS(require_unimodular(family(1, {"q1"}, "s", "2*t")), NotUnimodular);
  CHECK(spatial_jacobian(family(2, {"q1 + q2", "q2"})).is_one());
}
