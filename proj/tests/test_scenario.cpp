#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "noether/runner.hpp"
#include "noether/scenario.hpp"
#include "noether_bundled.hpp"

using namespace noether;
namespace fs = std::filesystem;

namespace {

const std::string kData = NOETHER_TEST_DATA;

std::string data(const std::string& name) { return kData + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("noether_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct CliResult {
  int code = -1;
  std::string err;
};

CliResult cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + NOETHER_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

Json without_wall_time(Json j) {
  j.erase("wall_time_s");
  return j;
}

std::string minimal(const std::string& extra) {
  return "schema = 1\nname = t\n[system.g]\ndof = 1\nL = m/2*v1^2 - m*g*q1\nconstants = m=1, g=1\n" + extra;
}

}  // namespace

TEST_CASE("bundled scenarios parse and cover the worked examples", "[scenario]") {
  std::set<std::string> names;
  for (const auto& s : kBundledScenarios) {
    INFO(s.name);
    const Scenario sc = parse_scenario(std::string(s.text));
    CHECK(sc.name == s.name);
    CHECK_FALSE(sc.checks.empty());
    names.insert(std::string(s.name));
  }
  CHECK(names == std::set<std::string>{"galilean_gravity", "rotation_gravity_2d", "free_to_gravity",
                                       "oscillator_magnetic", "conserved_operator_gravity"});
}

TEST_CASE("galilean_gravity passes end to end", "[scenario]") {
  const auto dir = scratch("galilean");
  const auto r = cli("run galilean_gravity --json \"" + (dir / "r.json").string() + "\"", dir);
  CHECK(r.code == 0);
  const Json j = Json::parse(slurp(dir / "r.json"));
  CHECK(j["summary"]["passed"] == 5);
  CHECK(j["seed"] == 20240917);
  for (const auto& c : j["checks"]) {
    INFO(c["name"]);
    CHECK(c["status"] == "pass");
    CHECK(c["measured"].get<double>() <= c["threshold"].get<double>());
  }
  const auto& charge = j["checks"][2];
  CHECK(charge["details"]["relative_sign"] == -1);
  const auto& op = j["checks"][4];
  CHECK(op["details"]["ablation_ratio"].get<double>() >= 10.0);
}

TEST_CASE("detuned oscillator fails the equivalence check", "[scenario]") {
  const auto dir = scratch("detuned");
  const auto r = cli("run \"" + data("detuned_oscillator.ini") + "\" --json \"" + (dir / "r.json").string() + "\"", dir);
  CHECK(r.code == 1);
  const Json j = Json::parse(slurp(dir / "r.json"));
  CHECK(j["checks"][0]["status"] == "fail");
  CHECK(j["checks"][0]["measured"].get<double>() > 1e-3);
}

TEST_CASE("parse errors exit with 2 and a position", "[scenario]") {
  const auto dir = scratch("malformed");
  const auto r = cli("run \"" + data("malformed.ini") + "\"", dir);
  CHECK(r.code == 2);
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("[system.gravity] L:"));
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("at position"));

  CHECK(cli("run no_such_scenario", dir).code == 2);
  CHECK(cli("frobnicate", dir).code == 2);

  try {
    parse_scenario("schema = 1\nname = x\n[system.a\n", "broken.ini");
    FAIL("no exception");
  } catch (const ScenarioError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::StartsWith("broken.ini:3:"));
  }
}

TEST_CASE("scenario validation", "[scenario]") {
  CHECK_NOTHROW(parse_scenario(minimal("")));
  CHECK_THROWS_AS(parse_scenario("name = x\n"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario("schema = 2\nname = x\n"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario("schema = 1\nname = x\nsed = 3\n"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario("schema = 1\nname = x\nseed = -3\n"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a]\ntype = symmetry\nsystem = g\nfamily = nope\n")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a]\ntype = infinitesimal\nsystem = g\ngenerator = x\n")),
                  ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a]\ntype = telepathy\n")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[gadget.a]\nx = 1\n")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a]\ntype = kernel-compare\nsystem = g\ntol = -1\n")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a]\ntype = kernel-compare\nsystem = g\ntol = 0\n")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a]\ntype = kernel-compare\nsystem = g\nN = many\n")), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a]\ntype = kernel-compare\nsystem = g\nslices = 3\nslcies = 4\n")),
                  ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a b]\ntype = kernel-compare\nsystem = g\n")), ScenarioError);
  // constants used by L need values
  CHECK_THROWS_AS(parse_scenario("schema = 1\nname = x\n[system.a]\ndof = 1\nL = m/2*v1^2 - k*q1\nconstants = m=1\n"),
                  ScenarioError);
  CHECK_THROWS_AS(parse_scenario("schema = 1\nname = x\n[system.a]\ndof = 1\nL = v2^2\n"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a]\ntype = noether\nsystem = g\ngenerator = b\nq0 = 1, 2\nv0 = 0\n"
                                         "[generator.b]\ndof = 1\neta1 = -t\n")),
                  ScenarioError);
  CHECK_THROWS_AS(parse_scenario(minimal("[check.a]\ntype = conserved-op\nsystem = g\nalpha = q1\n")), ScenarioError);

  const Scenario sc = parse_scenario(minimal("[check.late]\ntype = infinitesimal\nsystem = g\ngenerator = b\n"
                                             "[generator.b]\ndof = 1\neta1 = -t\nG = -m*q1 + m*g*t^2/2\n"));
  REQUIRE(sc.checks.size() == 1);
  CHECK(sc.seed == kDefaultSeed);
  CHECK(std::get<InfinitesimalCheck>(sc.checks[0].config).tol == 1e-10);
}

TEST_CASE("check errors exit with 3", "[scenario]") {
  const auto dir = scratch("check_error");
  const auto r = cli("run \"" + data("check_error.ini") + "\" --json \"" + (dir / "r.json").string() + "\"", dir);
  CHECK(r.code == 3);
  const Json j = Json::parse(slurp(dir / "r.json"));
  CHECK(j["checks"][0]["status"] == "pass");
  CHECK(j["checks"][1]["status"] == "error");
  CHECK(j["checks"][1]["measured"].is_null());
  CHECK_THAT(j["checks"][1]["details"]["error"].get<std::string>(), Catch::Matchers::ContainsSubstring("grid steps"));
}

TEST_CASE("reports are deterministic apart from wall time", "[scenario]") {
  const Scenario sc = load_scenario(data("small_dump.ini"));
  const Json a = report_json(run_scenario(sc));
  const Json b = report_json(run_scenario(sc));
  CHECK(without_wall_time(a).dump() == without_wall_time(b).dump());
  CHECK(a["seed"] == 7);
  CHECK(report_json(run_scenario(sc, RunOptions{99}))["seed"] == 99);

  const auto dir = scratch("determinism");
  const std::string base = "run \"" + data("small_dump.ini") + "\" --json \"";
  REQUIRE(cli(base + (dir / "a.json").string() + "\"", dir).code != 2);
  REQUIRE(cli(base + (dir / "b.json").string() + "\"", dir).code != 2);
  CHECK(without_wall_time(Json::parse(slurp(dir / "a.json"))).dump() ==
        without_wall_time(Json::parse(slurp(dir / "b.json"))).dump());
}

TEST_CASE("status matches measured against threshold", "[scenario]") {
  for (const char* file : {"small_dump.ini", "detuned_oscillator.ini"}) {
    const Json j = report_json(run_scenario(load_scenario(data(file))));
    for (const auto& c : j["checks"]) {
      INFO(c["name"]);
      REQUIRE(c["measured"].is_number());
      CHECK((c["status"] == "pass") == (c["measured"].get<double>() <= c["threshold"].get<double>()));
    }
  }
}

TEST_CASE("dumped artifacts", "[scenario]") {
  const auto dir = scratch("dump");
  const auto r = cli("run \"" + data("small_dump.ini") + "\" --dump \"" + (dir / "out").string() + "\"", dir);
  CHECK(r.code != 2);
  CHECK(r.code != 3);
  const fs::path out = dir / "out";
  CHECK(Json::parse(slurp(out / "report.json"))["name"] == "small_dump");
  CHECK(first_line(out / "kernel_kernel.csv") == "x1,x0,re,im");
  CHECK(first_line(out / "kernel_packet_initial.csv") == "x,re,im,abs2");
  CHECK(first_line(out / "kernel_packet_sliced.csv") == "x,re,im,abs2");
  CHECK(first_line(out / "kernel_packet_exact.csv") == "x,re,im,abs2");
  CHECK(first_line(out / "charge2d_trajectory.csv") == "t,q1,q2,v1,v2");
  CHECK(first_line(out / "boost_expectation.csv") == "t,value");

  std::ifstream traj(out / "charge2d_trajectory.csv");
  int rows = 0;
  for (std::string line; std::getline(traj, line);) ++rows;
  CHECK(rows == 102);
  // stride 4 on a 128-point grid
  std::ifstream kern(out / "kernel_kernel.csv");
  rows = 0;
  for (std::string line; std::getline(kern, line);) ++rows;
  CHECK(rows == 1 + 32 * 32);
}

TEST_CASE("empty check list writes only the report", "[scenario]") {
  const auto dir = scratch("empty");
  const auto r = cli("run \"" + data("empty.ini") + "\" --dump \"" + (dir / "out").string() + "\"", dir);
  CHECK(r.code == 0);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir / "out")) files.push_back(e.path().filename().string());
  CHECK(files == std::vector<std::string>{"report.json"});
  const Json j = Json::parse(slurp(dir / "out" / "report.json"));
  CHECK(j["checks"].empty());
  CHECK(j["summary"]["exit_code"] == 0);
}

TEST_CASE("schema and example listing", "[scenario]") {
  const auto dir = scratch("listing");
  CHECK(cli("print-schema", dir).code == 0);
  CHECK_THAT(slurp(dir / "stdout.txt"), Catch::Matchers::ContainsSubstring("## Exit codes"));
  CHECK(cli("list-examples", dir).code == 0);
  CHECK_THAT(slurp(dir / "stdout.txt"), Catch::Matchers::ContainsSubstring("oscillator_magnetic"));
}
