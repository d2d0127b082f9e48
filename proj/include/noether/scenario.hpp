#pragma once

// Scenario files: INI sections declaring systems, point families,
// generators and checks. The format is documented in docs/scenario_schema.md.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "noether/mechanics.hpp"
#include "noether/parse.hpp"
#include "noether/symmetry.hpp"

namespace noether {

inline constexpr int kScenarioSchema = 1;
inline constexpr std::uint64_t kDefaultSeed = 20240917;

/// Malformed scenario: syntax, unknown keys, bad values or dangling references.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridSettings {
  double x_min = -20.0;
  double x_max = 20.0;
  int N = 1024;
};

struct PacketSettings {
  double center = 0.0;
  double sigma = 1.0;
  double p0 = 0.0;
};

struct SymmetryCheck {
  std::string system, family;
  std::optional<Expr> expected_F;
  double tol = 1e-10;
  int trials = 16;
};

struct EquivalenceCheck {
  std::string system1, system2, family;
  std::optional<Expr> expected_F;
  double tol = 1e-10;
  int trials = 16;
};

struct InfinitesimalCheck {
  std::string system, generator;
  double tol = 1e-10;
  int trials = 16;
};

struct NoetherCheck {
  std::string system, generator;
  std::vector<double> q0, v0;
  double t0 = 0.0, t1 = 2.0;
  int steps = 1000;
  double tol = 1e-6;
  /// Expression in q, v, t whose relation (+1 / -1) to the charge is reported.
  std::optional<Expr> compare;
  std::map<std::string, double> compare_constants;
};

struct FundamCheck {
  std::string system1, system2, family;
  std::optional<double> s;
  /// Gauge function; certified from the systems when absent.
  std::optional<Expr> gauge;
  double x_min = -5.0, x_max = 5.0;
  int points = 50;
  std::vector<double> dts{0.3, 0.7, 1.3};
  double t0 = 0.25;
  double tol = 1e-9;
};

struct KernelCompareCheck {
  std::string system;
  GridSettings grid;
  double t0 = 0.0, t1 = 0.5;
  int slices = 200;
  std::string rule = "band-limited";
  PacketSettings packet{0.0, 1.0, 2.0};
  double tol = 1e-3;
  int csv_stride = 8;
};

struct ConservedOpCheck {
  std::string system;
  Expr alpha, beta, gamma;
  std::optional<std::array<Expr, 3>> control;
  GridSettings grid{-20.0, 20.0, 512};
  double t0 = 0.0, t1 = 1.0;
  int steps = 1000;
  PacketSettings packet{0.0, 1.0, 0.5};
  int matrix_N = 0;
  double tol = 1e-3;
};

struct SymmetryOpCheck {
  std::string system;
  GridSettings grid{-10.0, 10.0, 256};
  double t0 = 0.5, t1 = 1.0;
  int steps = 500;
  /// Boost velocity in grid steps per unit time.
  double V_dx = 4.0;
  double tol = 1e-2;
};

using CheckConfig = std::variant<SymmetryCheck, EquivalenceCheck, InfinitesimalCheck, NoetherCheck, FundamCheck,
                                 KernelCompareCheck, ConservedOpCheck, SymmetryOpCheck>;

struct CheckDecl {
  std::string name;
  std::string type;
  CheckConfig config;
};

struct Scenario {
  int schema = kScenarioSchema;
  std::string name;
  std::string description;
  std::uint64_t seed = kDefaultSeed;
  std::map<std::string, Lagrangian> systems;
  std::map<std::string, PointFamily> families;
  std::map<std::string, InfGen> generators;
  std::vector<CheckDecl> checks;
};

namespace detail {

/// Key/value view of one INI section that remembers which keys were read.
class SectionReader {
 public:
  SectionReader(std::string label, const boost::property_tree::ptree& tree) : label_(std::move(label)) {
    for (const auto& [k, v] : tree) {
      if (!v.empty()) fail(k, "nested values are not supported");
      entries_.emplace_back(k, v.data());
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ScenarioError("[" + label_ + "] " + key + ": " + msg);
  }

  const std::string& label() const { return label_; }

  std::optional<std::string> raw(const std::string& key) {
    for (const auto& [k, v] : entries_)
      if (k == key) {
        used_.insert(k);
        return trim(v);
      }
    return std::nullopt;
  }

  bool has(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return true;
    return false;
  }

  std::string string(const std::string& key) {
    auto v = raw(key);
    if (!v || v->empty()) fail(key, "required key is missing");
    return *v;
  }

  std::string string(const std::string& key, const std::string& fallback) {
    auto v = raw(key);
    return v ? *v : fallback;
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    auto v = raw(key);
    if (!v) {
      if (fallback) return *fallback;
      fail(key, "required key is missing");
    }
    return parse_number(key, *v);
  }

  double positive(const std::string& key, double fallback) {
    const double x = number(key, fallback);
    if (!(x > 0)) fail(key, "must be positive");
    return x;
  }

  int integer(const std::string& key, std::optional<int> fallback = std::nullopt, int min = 0) {
    auto v = raw(key);
    int out = 0;
    if (!v) {
      if (!fallback) fail(key, "required key is missing");
      out = *fallback;
    } else {
      const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
      if (ec != std::errc() || p != v->data() + v->size()) fail(key, "expected an integer, got '" + *v + "'");
    }
    if (out < min) fail(key, "must be >= " + std::to_string(min));
    return out;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size()) fail(key, "expected an unsigned integer, got '" + *v + "'");
    return out;
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) {
    auto v = raw(key);
    if (!v) {
      if (!fallback) fail(key, "required key is missing");
      return *fallback;
    }
    std::vector<double> out;
    for (const auto& item : split(*v, ',')) out.push_back(parse_number(key, item));
    if (out.empty()) fail(key, "expected a comma-separated list of numbers");
    return out;
  }

  /// name=value pairs separated by commas.
  std::map<std::string, double> assignments(const std::string& key) {
    std::map<std::string, double> out;
    auto v = raw(key);
    if (!v || v->empty()) return out;
    for (const auto& item : split(*v, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) fail(key, "expected name=value, got '" + item + "'");
      const std::string name = trim(item.substr(0, eq));
      if (!valid_identifier(name)) fail(key, "invalid constant name '" + name + "'");
      if (out.contains(name)) fail(key, "constant '" + name + "' given twice");
      out[name] = parse_number(key, trim(item.substr(eq + 1)));
    }
    return out;
  }

  std::set<std::string> names(const std::string& key) {
    std::set<std::string> out;
    auto v = raw(key);
    if (!v || v->empty()) return out;
    for (const auto& item : split(*v, ',')) {
      if (!valid_identifier(item)) fail(key, "invalid name '" + item + "'");
      out.insert(item);
    }
    return out;
  }

  Expr expression(const std::string& key, int n_dof, const std::string& param = "") {
    return parse_expression(key, string(key), n_dof, param);
  }

  std::optional<Expr> optional_expression(const std::string& key, int n_dof, const std::string& param = "") {
    auto v = raw(key);
    if (!v) return std::nullopt;
    return parse_expression(key, *v, n_dof, param);
  }

  Expr parse_expression(const std::string& key, const std::string& text, int n_dof, const std::string& param) const {
    ParseOptions opt;
    opt.parameter = param;
    try {
      return parse_expr(text, n_dof, opt);
    } catch (const ParseError& e) {
      fail(key, e.what());
    }
  }

  void reject_unknown() const {
    for (const auto& [k, v] : entries_)
      if (!used_.contains(k)) fail(k, "unknown key");
  }

  static std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  static bool valid_identifier(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
  }

 private:
  double parse_number(const std::string& key, const std::string& text) const {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || p != text.data() + text.size() || !std::isfinite(out))
      fail(key, "expected a number, got '" + text + "'");
    return out;
  }

  std::string label_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::set<std::string> used_;
};

inline Lagrangian read_system(SectionReader& r) {
  Lagrangian sys;
  sys.n_dof = r.integer("dof", std::nullopt, 1);
  sys.L = r.expression("L", sys.n_dof);
  sys.constants = r.assignments("constants");
  sys.pinned = r.names("pinned");
  for (const auto& p : sys.pinned)
    if (!sys.constants.contains(p)) r.fail("pinned", "constant '" + p + "' has no value in 'constants'");
  std::set<Symbol> syms;
  collect_symbols(sys.L, syms);
  for (const auto& s : syms)
    if (s.kind == SymbolKind::constant && !sys.constants.contains(s.name))
      r.fail("L", "constant '" + s.name + "' has no value in 'constants'");
  return sys;
}

inline PointFamily read_family(SectionReader& r) {
  const int n = r.integer("dof", std::nullopt, 1);
  PointFamily fam;
  fam.param = r.string("parameter", "s");
  if (!SectionReader::valid_identifier(fam.param)) r.fail("parameter", "invalid parameter name");
  for (int i = 1; i <= n; ++i) fam.qprime.push_back(r.expression("q" + std::to_string(i), n, fam.param));
  if (r.has("t")) fam.tprime = r.expression("t", n, fam.param);
  return fam;
}

inline InfGen read_generator(SectionReader& r) {
  const int n = r.integer("dof", std::nullopt, 1);
  InfGen g;
  g.xi = r.has("xi") ? r.expression("xi", n) : Expr(0);
  for (int i = 1; i <= n; ++i) g.eta.push_back(r.expression("eta" + std::to_string(i), n));
  g.G = r.has("G") ? r.expression("G", n) : Expr(0);
  return g;
}

inline GridSettings read_grid(SectionReader& r, GridSettings d) {
  d.x_min = r.number("x_min", d.x_min);
  d.x_max = r.number("x_max", d.x_max);
  d.N = r.integer("N", d.N, 2);
  if (!(d.x_max > d.x_min)) r.fail("x_max", "must exceed x_min");
  return d;
}

inline PacketSettings read_packet(SectionReader& r, PacketSettings d) {
  d.center = r.number("center", d.center);
  d.sigma = r.positive("sigma", d.sigma);
  d.p0 = r.number("p0", d.p0);
  return d;
}

class Resolver {
 public:
  explicit Resolver(const Scenario& sc) : sc_(sc) {}

  std::string system(SectionReader& r, const std::string& key) const {
    const std::string name = r.string(key);
    if (!sc_.systems.contains(name)) r.fail(key, "no [system." + name + "] section");
    return name;
  }
  std::string family(SectionReader& r, const std::string& key = "family") const {
    const std::string name = r.string(key);
    if (!sc_.families.contains(name)) r.fail(key, "no [family." + name + "] section");
    return name;
  }
  std::string generator(SectionReader& r, const std::string& key = "generator") const {
    const std::string name = r.string(key);
    if (!sc_.generators.contains(name)) r.fail(key, "no [generator." + name + "] section");
    return name;
  }
  int dof(const std::string& system) const { return sc_.systems.at(system).n_dof; }
  const PointFamily& fam(const std::string& name) const { return sc_.families.at(name); }
  const InfGen& gen(const std::string& name) const { return sc_.generators.at(name); }

 private:
  const Scenario& sc_;
};

inline void same_dof(SectionReader& r, const std::string& key, int a, int b) {
  if (a != b) r.fail(key, "degrees of freedom do not match (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

inline CheckConfig read_check(SectionReader& r, const std::string& type, const Resolver& res) {
  if (type == "symmetry") {
    SymmetryCheck c;
    c.system = res.system(r, "system");
    c.family = res.family(r);
    same_dof(r, "family", res.dof(c.system), res.fam(c.family).n_dof());
    c.expected_F = r.optional_expression("expected_F", res.dof(c.system), res.fam(c.family).param);
    c.tol = r.positive("tol", c.tol);
    c.trials = r.integer("trials", c.trials, 1);
    return c;
  }
  if (type == "equivalence") {
    EquivalenceCheck c;
    c.system1 = res.system(r, "system1");
    c.system2 = res.system(r, "system2");
    c.family = res.family(r);
    same_dof(r, "system2", res.dof(c.system1), res.dof(c.system2));
    same_dof(r, "family", res.dof(c.system1), res.fam(c.family).n_dof());
    c.expected_F = r.optional_expression("expected_F", res.dof(c.system1), res.fam(c.family).param);
    c.tol = r.positive("tol", c.tol);
    c.trials = r.integer("trials", c.trials, 1);
    return c;
  }
  if (type == "infinitesimal") {
    InfinitesimalCheck c;
    c.system = res.system(r, "system");
    c.generator = res.generator(r);
    same_dof(r, "generator", res.dof(c.system), static_cast<int>(res.gen(c.generator).eta.size()));
    c.tol = r.positive("tol", c.tol);
    c.trials = r.integer("trials", c.trials, 1);
    return c;
  }
  if (type == "noether") {
    NoetherCheck c;
    c.system = res.system(r, "system");
    c.generator = res.generator(r);
    const int n = res.dof(c.system);
    same_dof(r, "generator", n, static_cast<int>(res.gen(c.generator).eta.size()));
    c.q0 = r.numbers("q0");
    c.v0 = r.numbers("v0");
    if (static_cast<int>(c.q0.size()) != n) r.fail("q0", "needs " + std::to_string(n) + " values");
    if (static_cast<int>(c.v0.size()) != n) r.fail("v0", "needs " + std::to_string(n) + " values");
    c.t0 = r.number("t0", c.t0);
    c.t1 = r.number("t1", c.t1);
    c.steps = r.integer("steps", c.steps, 1);
    c.tol = r.positive("tol", c.tol);
    c.compare = r.optional_expression("compare", n);
    c.compare_constants = r.assignments("compare_constants");
    if (!c.compare && !c.compare_constants.empty()) r.fail("compare_constants", "needs 'compare'");
    return c;
  }
  if (type == "fundam") {
    FundamCheck c;
    if (r.has("system")) {
      if (r.has("system1") || r.has("system2")) r.fail("system", "use either 'system' or 'system1'/'system2'");
      c.system1 = c.system2 = res.system(r, "system");
    } else {
      c.system1 = res.system(r, "system1");
      c.system2 = res.system(r, "system2");
    }
    c.family = res.family(r);
    if (res.dof(c.system1) != 1 || res.dof(c.system2) != 1) r.fail("system", "kernel checks need one degree of freedom");
    same_dof(r, "family", 1, res.fam(c.family).n_dof());
    if (r.has("s")) c.s = r.number("s");
    c.gauge = r.optional_expression("gauge", 1, res.fam(c.family).param);
    c.x_min = r.number("x_min", c.x_min);
    c.x_max = r.number("x_max", c.x_max);
    if (!(c.x_max > c.x_min)) r.fail("x_max", "must exceed x_min");
    c.points = r.integer("points", c.points, 1);
    c.dts = r.numbers("dts", c.dts);
    for (double d : c.dts)
      if (d == 0.0) r.fail("dts", "time steps must be nonzero");
    c.t0 = r.number("t0", c.t0);
    c.tol = r.positive("tol", c.tol);
    return c;
  }
  if (type == "kernel-compare") {
    KernelCompareCheck c;
    c.system = res.system(r, "system");
    if (res.dof(c.system) != 1) r.fail("system", "kernel checks need one degree of freedom");
    c.grid = read_grid(r, c.grid);
    c.t0 = r.number("t0", c.t0);
    c.t1 = r.number("t1", c.t1);
    if (c.t1 == c.t0) r.fail("t1", "must differ from t0");
    c.slices = r.integer("slices", c.slices, 1);
    c.rule = r.string("rule", c.rule);
    if (c.rule != "band-limited" && c.rule != "closed-form") r.fail("rule", "expected band-limited or closed-form");
    c.packet = read_packet(r, c.packet);
    c.tol = r.positive("tol", c.tol);
    c.csv_stride = r.integer("csv_stride", c.csv_stride, 1);
    return c;
  }
  if (type == "conserved-op") {
    ConservedOpCheck c;
    c.system = res.system(r, "system");
    if (res.dof(c.system) != 1) r.fail("system", "operator checks need one degree of freedom");
    auto coeff = [&](const std::string& key) {
      Expr e = r.has(key) ? r.expression(key, 1) : Expr(0);
      if (depends_on_any(e, [](const Symbol& s) { return s.kind == SymbolKind::coordinate || s.kind == SymbolKind::velocity; }))
        r.fail(key, "operator coefficients may depend on t and constants only");
      return e;
    };
    c.alpha = coeff("alpha");
    c.beta = coeff("beta");
    c.gamma = coeff("gamma");
    if (r.has("control_alpha") || r.has("control_beta") || r.has("control_gamma"))
      c.control = std::array<Expr, 3>{coeff("control_alpha"), coeff("control_beta"), coeff("control_gamma")};
    c.grid = read_grid(r, c.grid);
    c.t0 = r.number("t0", c.t0);
    c.t1 = r.number("t1", c.t1);
    c.steps = r.integer("steps", c.steps, 1);
    c.packet = read_packet(r, c.packet);
    c.matrix_N = r.integer("matrix_N", c.matrix_N, 0);
    if (c.matrix_N == 1) r.fail("matrix_N", "must be 0 (off) or >= 2");
    c.tol = r.positive("tol", c.tol);
    return c;
  }
  if (type == "symmetry-op") {
    SymmetryOpCheck c;
    c.system = res.system(r, "system");
    if (res.dof(c.system) != 1) r.fail("system", "operator checks need one degree of freedom");
    c.grid = read_grid(r, c.grid);
    c.t0 = r.number("t0", c.t0);
    c.t1 = r.number("t1", c.t1);
    c.steps = r.integer("steps", c.steps, 1);
    c.V_dx = r.number("V_dx", c.V_dx);
    c.tol = r.positive("tol", c.tol);
    return c;
  }
  r.fail("type", "unknown check type '" + type + "'");
}

inline std::pair<std::string, std::string> split_section(const std::string& s) {
  const auto dot = s.find('.');
  if (dot == std::string::npos) return {s, ""};
  return {s.substr(0, dot), s.substr(dot + 1)};
}


inline Scenario build_scenario(const boost::property_tree::ptree& tree) {
  namespace pt = boost::property_tree;
  Scenario sc;
  pt::ptree top;
  std::vector<std::pair<std::string, const pt::ptree*>> sections;
  for (const auto& [k, v] : tree) {
    if (v.empty()) top.push_back({k, v});
    else sections.emplace_back(k, &v);
  }
  detail::SectionReader head("top level", top);
  sc.schema = head.integer("schema", std::nullopt, 0);
  if (sc.schema != kScenarioSchema)
    head.fail("schema", "unsupported schema version " + std::to_string(sc.schema) + " (expected " +
                            std::to_string(kScenarioSchema) + ")");
  sc.name = head.string("name");
  sc.description = head.string("description", "");
  sc.seed = head.unsigned_integer("seed", kDefaultSeed);
  head.reject_unknown();

  std::set<std::string> seen;
  // Declarations first so checks can refer to sections defined later.
  for (const auto& [label, sub] : sections) {
    if (!seen.insert(label).second) throw ScenarioError("[" + label + "] duplicate section");
    const auto [kind, name] = detail::split_section(label);
    if (kind == "check") continue;
    if (name.empty() || !detail::SectionReader::valid_identifier(name))
      throw ScenarioError("[" + label + "] section names have the form kind.name");
    detail::SectionReader r(label, *sub);
    if (kind == "system") sc.systems[name] = detail::read_system(r);
    else if (kind == "family") sc.families[name] = detail::read_family(r);
    else if (kind == "generator") sc.generators[name] = detail::read_generator(r);
    else throw ScenarioError("[" + label + "] unknown section kind '" + kind + "'");
    r.reject_unknown();
  }
  const detail::Resolver res(sc);
  for (const auto& [label, sub] : sections) {
    const auto [kind, name] = detail::split_section(label);
    if (kind != "check") continue;
    if (name.empty() || !std::all_of(name.begin(), name.end(), [](char ch) {
          return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-';
        }))
      throw ScenarioError("[" + label + "] check names use letters, digits, '_' and '-'");
    detail::SectionReader r(label, *sub);
    const std::string type = r.string("type");
    sc.checks.push_back({name, type, detail::read_check(r, type, res)});
    r.reject_unknown();
  }
  return sc;
}

}  // namespace detail

/// Parses scenario text. `source` labels syntax errors.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ScenarioError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  try {
    return detail::build_scenario(tree);
  } catch (const ScenarioError& e) {
    throw ScenarioError(source + ": " + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path);
}

}  // namespace noether
