#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "noether/runner.hpp"
#include "noether/scenario.hpp"
#include "noether_bundled.hpp"

namespace {

using namespace noether;

std::optional<std::string_view> bundled(const std::string& name) {
  for (const auto& s : kBundledScenarios)
    if (s.name == name) return s.text;
  return std::nullopt;
}

Scenario resolve(const std::string& arg) {
  if (std::filesystem::exists(arg)) return load_scenario(arg);
  if (auto text = bundled(arg)) return parse_scenario(std::string(*text), arg + ".ini");
  throw ScenarioError("no scenario file or bundled example named '" + arg + "'");
}

int run(const std::string& target, const std::string& json_path, const std::string& dump_dir,
        std::optional<std::uint64_t> seed) {
  Scenario sc;
  try {
    sc = resolve(target);
  } catch (const ScenarioError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  }
  const RunResult result = run_scenario(sc, RunOptions{seed});
  std::cout << text_report(result);
  try {
    if (!json_path.empty()) {
      std::ofstream out(json_path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + json_path);
      out << report_json(result).dump(2) << "\n";
    }
    if (!dump_dir.empty()) {
      const auto files = dump_artifacts(result, dump_dir);
      std::cout << "wrote " << files.size() << " files to " << dump_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return result.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noether symmetry and propagator checks"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Run a scenario file or bundled example");
  std::string target, json_path, dump_dir;
  std::optional<std::uint64_t> seed;
  run_cmd->add_option("scenario", target, "Scenario path or bundled example name")->required();
  run_cmd->add_option("--json", json_path, "Write the JSON report here");
  run_cmd->add_option("--dump", dump_dir, "Write report.json and CSV artifacts into this directory");
  run_cmd->add_option("--seed", seed, "Override the scenario seed");

  auto* list_cmd = app.add_subcommand("list-examples", "List bundled scenarios");
  auto* schema_cmd = app.add_subcommand("print-schema", "Print the scenario file format");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*run_cmd) return run(target, json_path, dump_dir, seed);
  if (*list_cmd) {
    for (const auto& s : kBundledScenarios) {
      std::string description;
      try {
        description = parse_scenario(std::string(s.text)).description;
      } catch (const ScenarioError& e) {
        description = std::string("(invalid: ") + e.what() + ")";
      }
      std::cout << s.name << "\t" << description << "\n";
    }
    return 0;
  }
  if (*schema_cmd) {
    std::cout << kScenarioSchemaDoc;
    return 0;
  }
  return 2;
}
