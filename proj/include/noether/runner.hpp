#pragma once

// Executes scenario checks and assembles the report.
//
// Exit codes: 0 all checks pass, 1 some check failed, 2 the scenario does not
// parse (raised by the caller), 3 some check raised an error.

#include <Eigen/Core>
#include <boost/version.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "noether/mechanics.hpp"
#include "noether/operator_lab.hpp"
#include "noether/propagator.hpp"
#include "noether/scenario.hpp"
#include "noether/symmetry.hpp"

namespace noether {

inline constexpr const char* kVersion = "1.0.0";

using Json = nlohmann::ordered_json;

enum class CheckStatus { pass, fail, error };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::error: return "error";
  }
  return "?";
}

struct Artifact {
  std::string filename;
  std::string content;
};

struct CheckOutcome {
  std::string name;
  std::string type;
  CheckStatus status = CheckStatus::error;
  std::optional<double> measured;
  double threshold = 0.0;
  Json settings = Json::object();
  Json details = Json::object();
  std::vector<Artifact> artifacts;
};

struct RunOptions {
  /// Overrides the scenario seed.
  std::optional<std::uint64_t> seed;
};

struct RunResult {
  std::string scenario;
  std::string description;
  std::uint64_t seed = kDefaultSeed;
  std::vector<CheckOutcome> checks;
  double wall_time_s = 0.0;

  int passed() const { return count(CheckStatus::pass); }
  int failed() const { return count(CheckStatus::fail); }
  int errors() const { return count(CheckStatus::error); }

  int exit_code() const {
    if (errors() > 0) return 3;
    if (failed() > 0) return 1;
    return 0;
  }

 private:
  int count(CheckStatus s) const {
    int n = 0;
    for (const auto& c : checks) n += c.status == s;
    return n;
  }
};

namespace detail {

inline std::string str(const Expr& e) { return to_string(e); }

inline Json grid_json(const GridSettings& g) { return {{"x_min", g.x_min}, {"x_max", g.x_max}, {"N", g.N}}; }

inline Json packet_json(const PacketSettings& p) { return {{"center", p.center}, {"sigma", p.sigma}, {"p0", p.p0}}; }

inline Json certificate_json(const SymmetryCertificate& c) {
  Json j{{"kind", to_string(c.kind)}};
  j["F"] = c.F ? Json(str(*c.F)) : Json(nullptr);
  j["residual_norm"] = c.residual_norm;
  j["samples"] = c.samples;
  j["seed"] = c.seed;
  if (!c.diagnostics.empty()) j["diagnostics"] = c.diagnostics;
  return j;
}

inline Bindings merged_constants(const Lagrangian& a, const Lagrangian& b) {
  Bindings out = b.constant_bindings();
  for (const auto& [s, v] : a.constant_bindings()) out[s] = v;
  return out;
}

struct Runner {
  const Scenario& sc;
  std::uint64_t seed;

  Probe probe(int trials, double tol) const {
    Probe p;
    p.seed = seed;
    p.trials = trials;
    p.tol = tol;
    return p;
  }

  /// Certificate measured value: residual plus mismatch against an expected gauge.
  void certificate_outcome(CheckOutcome& out, const SymmetryCertificate& cert, const std::optional<Expr>& expected,
                           const Probe& p) const {
    out.details["certificate"] = certificate_json(cert);
    double measured = cert.residual_norm;
    if (expected) {
      out.details["expected_F"] = str(*expected);
      if (cert.F) {
        const double mismatch = max_deviation(*cert.F, *expected, p);
        out.details["F_mismatch"] = mismatch;
        measured = std::max(measured, mismatch);
      }
    }
    out.measured = measured;
  }

  void run(CheckOutcome& out, const SymmetryCheck& c) const {
    out.threshold = c.tol;
    out.settings = {{"system", c.system}, {"family", c.family}, {"tol", c.tol}, {"trials", c.trials}};
    if (c.expected_F) out.settings["expected_F"] = str(*c.expected_F);
    const Probe base = probe(c.trials, c.tol);
    const auto& sys = sc.systems.at(c.system);
    const auto cert = check_variational_symmetry(sys, sc.families.at(c.family), base);
    certificate_outcome(out, cert, c.expected_F, probe_for(sys, base));
  }

  void run(CheckOutcome& out, const EquivalenceCheck& c) const {
    out.threshold = c.tol;
    out.settings = {{"system1", c.system1}, {"system2", c.system2}, {"family", c.family},
                    {"tol", c.tol},         {"trials", c.trials}};
    if (c.expected_F) out.settings["expected_F"] = str(*c.expected_F);
    const Probe base = probe(c.trials, c.tol);
    const auto& s1 = sc.systems.at(c.system1);
    const auto& s2 = sc.systems.at(c.system2);
    const auto cert = check_equivalence(s1, s2, sc.families.at(c.family), base);
    certificate_outcome(out, cert, c.expected_F, probe_for(s1, s2, base));
  }

  void run(CheckOutcome& out, const InfinitesimalCheck& c) const {
    out.threshold = c.tol;
    out.settings = {{"system", c.system}, {"generator", c.generator}, {"tol", c.tol}, {"trials", c.trials}};
    out.measured = check_infinitesimal(sc.systems.at(c.system), sc.generators.at(c.generator), probe(c.trials, c.tol));
  }

  void run(CheckOutcome& out, const NoetherCheck& c) const {
    out.threshold = c.tol;
    out.settings = {{"system", c.system}, {"generator", c.generator}, {"q0", c.q0},       {"v0", c.v0},
                    {"t0", c.t0},         {"t1", c.t1},               {"steps", c.steps}, {"tol", c.tol}};
    const auto& sys = sc.systems.at(c.system);
    const Expr charge = noether_charge(sys, sc.generators.at(c.generator));
    const Trajectory tr = integrate_trajectory(sys, c.q0, c.v0, c.t0, c.t1, c.steps);
    out.measured = check_charge_conserved(sys, charge, tr);
    out.details["charge"] = str(charge);
    out.details["initial_value"] = eval(charge, state_bindings(sys, tr.states.front(), tr.times.front()));
    out.details["integrator"] = tr.integrator;
    if (c.compare) {
      Json cmp;
      for (const auto& [k, v] : c.compare_constants) cmp[k] = v;
      out.settings["compare"] = str(*c.compare);
      out.settings["compare_constants"] = cmp.is_null() ? Json::object() : cmp;
      Probe p = probe_for(sys, probe(16, 1e-10));
      for (const auto& [k, v] : c.compare_constants) p.fixed[Symbol::constant(k)] = v;
      int sign = 0;
      if (equal_numeric(charge, *c.compare, p)) sign = 1;
      else if (equal_numeric(charge, -*c.compare, p)) sign = -1;
      out.details["relative_sign"] = sign;
    }
    std::ostringstream csv;
    write_trajectory_csv(csv, tr, sys.n_dof);
    out.artifacts.push_back({out.name + "_trajectory.csv", csv.str()});
  }

  void run(CheckOutcome& out, const FundamCheck& c) const {
    out.threshold = c.tol;
    out.settings = {{"system1", c.system1}, {"system2", c.system2}, {"family", c.family}};
    out.settings["s"] = c.s ? Json(*c.s) : Json(nullptr);
    out.settings["gauge"] = c.gauge ? Json(str(*c.gauge)) : Json("certified");
    out.settings["x_min"] = c.x_min;
    out.settings["x_max"] = c.x_max;
    out.settings["points"] = c.points;
    out.settings["dts"] = c.dts;
    out.settings["t0"] = c.t0;
    out.settings["tol"] = c.tol;

    const auto& s1 = sc.systems.at(c.system1);
    const auto& s2 = sc.systems.at(c.system2);
    const auto& fam = sc.families.at(c.family);
    Expr gauge;
    if (c.gauge) {
      gauge = *c.gauge;
    } else {
      const Probe base = probe(16, 1e-10);
      const auto cert = c.system1 == c.system2 ? check_variational_symmetry(s1, fam, base)
                                               : check_equivalence(s1, s2, fam, base);
      out.details["certificate"] = certificate_json(cert);
      if (!cert.F) throw PropagatorError("no gauge function: certification failed (" + cert.diagnostics + ")");
      gauge = *cert.F;
    }
    out.details["gauge"] = str(gauge);
    const TransformContext ctx{s1.constant("hbar", 1.0), merged_constants(s1, s2)};
    const auto samples = lattice_samples(c.x_min, c.x_max, c.points, c.dts, c.t0);
    out.details["sample_count"] = samples.size();
    out.measured = check_fundam(closed_form_kernel(s1), closed_form_kernel(s2), fam, gauge, samples, ctx, c.s);
  }

  void run(CheckOutcome& out, const KernelCompareCheck& c) const {
    out.threshold = c.tol;
    out.settings = {{"system", c.system}, {"grid", grid_json(c.grid)}, {"t0", c.t0},
                    {"t1", c.t1},         {"slices", c.slices},        {"rule", c.rule},
                    {"packet", packet_json(c.packet)}, {"tol", c.tol}};
    const auto& sys = sc.systems.at(c.system);
    const auto sf = standard_form(sys);
    const double hbar = sys.constant("hbar", 1.0);
    const Grid1D g(c.grid.x_min, c.grid.x_max, c.grid.N);
    const auto rule = c.rule == "closed-form" ? SliceRule::closed_form : SliceRule::band_limited;
    const KernelMatrix K = timesliced_kernel(sf.mass, hbar, sf.V, g, c.t0, c.t1, c.slices, sys.constant_bindings(), rule);
    const KernelMatrix exact = sample_kernel(closed_form_kernel(sys), g, c.t0, c.t1);
    const auto psi = Wavepacket::gaussian(g, c.packet.center, c.packet.sigma, c.packet.p0, hbar);
    const auto a = propagate(K, psi);
    const auto b = propagate(exact, psi);
    const double f = fidelity(a, b);
    out.measured = std::max(0.0, 1.0 - f);
    out.details["fidelity"] = f;
    out.details["norm_sliced"] = norm(a);
    out.details["norm_exact"] = norm(b);
    out.details["mean_x_sliced"] = expectation_x(a);
    out.details["mean_x_exact"] = expectation_x(b);

    std::ostringstream kc;
    write_kernel_csv(kc, K, c.csv_stride);
    out.artifacts.push_back({out.name + "_kernel.csv", kc.str()});
    for (const auto& [suffix, w] : {std::pair{"initial", &psi}, std::pair{"sliced", &a}, std::pair{"exact", &b}}) {
      std::ostringstream pc;
      write_packet_csv(pc, *w);
      out.artifacts.push_back({out.name + "_packet_" + suffix + ".csv", pc.str()});
    }
  }

  void run(CheckOutcome& out, const ConservedOpCheck& c) const {
    out.threshold = c.tol;
    out.settings = {{"system", c.system}, {"alpha", str(c.alpha)}, {"beta", str(c.beta)}, {"gamma", str(c.gamma)}};
    if (c.control)
      out.settings["control"] = {{"alpha", str((*c.control)[0])}, {"beta", str((*c.control)[1])},
                                 {"gamma", str((*c.control)[2])}};
    out.settings["grid"] = grid_json(c.grid);
    out.settings["t0"] = c.t0;
    out.settings["t1"] = c.t1;
    out.settings["steps"] = c.steps;
    out.settings["packet"] = packet_json(c.packet);
    out.settings["matrix_N"] = c.matrix_N;
    out.settings["tol"] = c.tol;

    const auto& sys = sc.systems.at(c.system);
    const Grid1D g(c.grid.x_min, c.grid.x_max, c.grid.N);
    const GridSystem gs = grid_system(sys, g);
    const auto psi = Wavepacket::gaussian(g, c.packet.center, c.packet.sigma, c.packet.p0, gs.hbar);
    ConservedOptions opt;
    opt.matrix_N = c.matrix_N;
    opt.seed = seed;
    const auto rep = check_conserved({c.alpha, c.beta, c.gamma}, gs, psi.values, c.t0, c.t1, c.steps, opt);
    out.measured = rep.max_drift;
    out.details["initial"] = rep.initial;
    out.details["final"] = rep.values.back();
    out.details["max_norm_drift"] = rep.max_norm_drift;
    if (rep.matrix_deviation) {
      out.details["matrix_deviation"] = *rep.matrix_deviation;
      out.details["matrix_deviation_full"] = *rep.matrix_deviation_full;
    }
    out.details["max_edge_mass"] = rep.max_edge_mass;
    out.details["boundary_warning"] = rep.boundary_warning;
    const std::size_t stride = std::max<std::size_t>(1, (rep.times.size() + 199) / 200);
    Json series = Json::array();
    for (std::size_t k = 0; k < rep.times.size(); k += stride) series.push_back({rep.times[k], rep.values[k]});
    if ((rep.times.size() - 1) % stride != 0) series.push_back({rep.times.back(), rep.values.back()});
    out.details["series"] = std::move(series);
    if (c.control) {
      const auto ctl = check_conserved({(*c.control)[0], (*c.control)[1], (*c.control)[2]}, gs, psi.values, c.t0, c.t1,
                                       c.steps, ConservedOptions{});
      out.details["control_drift"] = ctl.max_drift;
    }

    std::ostringstream csv;
    csv << "t,value\n";
    csv.precision(17);
    for (std::size_t k = 0; k < rep.times.size(); ++k) csv << rep.times[k] << "," << rep.values[k] << "\n";
    out.artifacts.push_back({out.name + "_expectation.csv", csv.str()});
  }

  void run(CheckOutcome& out, const SymmetryOpCheck& c) const {
    out.threshold = c.tol;
    out.settings = {{"system", c.system}, {"grid", grid_json(c.grid)}, {"t0", c.t0}, {"t1", c.t1},
                    {"steps", c.steps},   {"V_dx", c.V_dx},            {"tol", c.tol}};
    const auto& sys = sc.systems.at(c.system);
    const Grid1D g(c.grid.x_min, c.grid.x_max, c.grid.N);
    const GridSystem gs = grid_system(sys, g);
    const auto coeffs = polynomial_coefficients(gs.V, Symbol::coordinate(0));
    auto variable = [](const Symbol& s) { return s.is_variable(); };
    if (!coeffs || coeffs->size() > 2 ||
        std::any_of(coeffs->begin(), coeffs->end(), [&](const Expr& e) { return depends_on_any(e, variable); }))
      throw OperatorError("symmetry-op needs a potential a q1 + b with constant a, b");
    const double gacc = coeffs->size() == 2 ? eval((*coeffs)[1], gs.constants) / gs.mass : 0.0;
    const double V = c.V_dx * g.dx();
    auto factory = [&](bool ablate) {
      return [=, m = gs.mass, hbar = gs.hbar](const Grid1D& grid, double t) {
        return galilean_boost_operator(grid, t, m, gacc, V, hbar, ablate);
      };
    };
    SymmetryOpOptions opt;
    opt.seed = seed;
    const auto good = check_symmetry_operator(factory(false), gs, c.t0, c.t1, c.steps, opt);
    const auto bad = check_symmetry_operator(factory(true), gs, c.t0, c.t1, c.steps, opt);
    out.measured = good.deviation;
    out.details["V"] = V;
    out.details["deviation_full"] = good.deviation_full;
    out.details["norm_U"] = good.norm_U;
    out.details["subspace_dim"] = good.subspace_dim;
    out.details["ablated_deviation"] = bad.deviation;
    out.details["ablation_ratio"] = good.deviation > 0 ? Json(bad.deviation / good.deviation) : Json(nullptr);
  }
};

inline std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << std::scientific << v;
  return os.str();
}

}  // namespace detail

inline CheckOutcome run_check(const Scenario& sc, const CheckDecl& decl, std::uint64_t seed) {
  CheckOutcome out;
  out.name = decl.name;
  out.type = decl.type;
  const detail::Runner runner{sc, seed};
  try {
    std::visit([&](const auto& cfg) { runner.run(out, cfg); }, decl.config);
    if (!out.measured || !std::isfinite(*out.measured)) {
      out.status = CheckStatus::error;
      out.details["error"] = "check produced no finite measurement";
      out.measured.reset();
    } else {
      out.status = *out.measured <= out.threshold ? CheckStatus::pass : CheckStatus::fail;
    }
  } catch (const std::exception& e) {
    out.status = CheckStatus::error;
    out.measured.reset();
    out.artifacts.clear();
    out.details["error"] = e.what();
  }
  return out;
}

inline RunResult run_scenario(const Scenario& sc, const RunOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  RunResult r;
  r.scenario = sc.name;
  r.description = sc.description;
  r.seed = opt.seed.value_or(sc.seed);
  for (const auto& decl : sc.checks) r.checks.push_back(run_check(sc, decl, r.seed));
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline Json report_json(const RunResult& r) {
  Json j;
  j["schema"] = kScenarioSchema;
  j["name"] = r.scenario;
  j["description"] = r.description;
  j["seed"] = r.seed;
  j["versions"] = {{"noether", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"boost", BOOST_LIB_VERSION},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  Json checks = Json::array();
  for (const auto& c : r.checks) {
    Json cj;
    cj["name"] = c.name;
    cj["type"] = c.type;
    cj["status"] = to_string(c.status);
    cj["measured"] = c.measured ? Json(*c.measured) : Json(nullptr);
    cj["threshold"] = c.threshold;
    cj["settings"] = c.settings;
    cj["details"] = c.details;
    Json files = Json::array();
    for (const auto& a : c.artifacts) files.push_back(a.filename);
    cj["artifacts"] = std::move(files);
    checks.push_back(std::move(cj));
  }
  j["checks"] = std::move(checks);
  j["summary"] = {{"total", r.checks.size()},
                  {"passed", r.passed()},
                  {"failed", r.failed()},
                  {"errors", r.errors()},
                  {"exit_code", r.exit_code()}};
  j["wall_time_s"] = r.wall_time_s;
  return j;
}

inline std::string text_report(const RunResult& r) {
  std::ostringstream os;
  os << "scenario " << r.scenario << " (seed " << r.seed << ")\n";
  for (const auto& c : r.checks) {
    os << "  " << std::left << std::setw(6) << to_string(c.status) << std::setw(28) << c.name << std::setw(16) << c.type;
    if (c.measured)
      os << "measured " << detail::format_value(*c.measured) << (c.status == CheckStatus::pass ? " <= " : " > ")
         << detail::format_value(c.threshold);
    else if (c.details.contains("error"))
      os << "error: " << c.details["error"].get<std::string>();
    os << "\n";
  }
  os << "summary: " << r.passed() << " passed, " << r.failed() << " failed, " << r.errors() << " errors ("
     << std::fixed << std::setprecision(2) << r.wall_time_s << " s)\n";
  return os.str();
}

/// Writes report.json and every check artifact into `dir`.
inline std::vector<std::string> dump_artifacts(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << content;
    if (!f) throw std::runtime_error("write failed for " + (dir / name).string());
    written.push_back(name);
  };
  write("report.json", report_json(r).dump(2) + "\n");
  for (const auto& c : r.checks)
    for (const auto& a : c.artifacts) write(a.filename, a.content);
  return written;
}

}  // namespace noether
