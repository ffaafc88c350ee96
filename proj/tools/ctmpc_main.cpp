#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ctmpc/benchmark.hpp"
#include "ctmpc/sim.hpp"

namespace fs = std::filesystem;
using namespace ctmpc;

namespace {

int write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) {
    std::cerr << "error: cannot write " << path << "\n";
    return 1;
  }
  out << content;
  return 0;
}

Scenario load_or_die(const std::string& path) {
  Scenario sc = load_scenario(path);
  auto problems = validate_scenario(sc);
  if (!problems.empty()) {
    std::string msg = "scenario '" + path + "' is invalid:\n";
    for (const auto& p : problems) msg += "  " + p + "\n";
    throw ScenarioError(msg);
  }
  return sc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic-network MPC workbench: closed-loop runs, batch comparisons, "
               "and horizon sweeps over scenario files"};
  app.require_subcommand(1);

  std::string scenario_path, controller_name = "centralized", out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int steps = -1, runs = 100, tf_min = 1, tf_max = 6;

  auto* run_cmd = app.add_subcommand("run", "one closed-loop run, CSV + summary output");
  run_cmd->add_option("--scenario", scenario_path, "scenario file")->required();
  run_cmd->add_option("--controller", controller_name,
                      "centralized | decentralized | baseline");
  run_cmd->add_option("--seed", seed, "override the scenario seed")
      ->each([&](const std::string&) { seed_set = true; });
  run_cmd->add_option("--steps", steps, "override the run length");
  run_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* batch_cmd = app.add_subcommand("batch", "seeded batch comparison of the schemes");
  batch_cmd->add_option("--scenario", scenario_path, "scenario file")->required();
  batch_cmd->add_option("--runs", runs, "number of seeded runs per scheme");
  batch_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "prediction-horizon sensitivity sweep");
  sweep_cmd->add_option("--scenario", scenario_path, "scenario file")->required();
  sweep_cmd->add_option("--tf-min", tf_min, "smallest horizon");
  sweep_cmd->add_option("--tf-max", tf_max, "largest horizon");
  sweep_cmd->add_option("--runs", runs, "runs per horizon")->default_val(10);
  sweep_cmd->add_option("--controller", controller_name,
                        "centralized | decentralized | baseline")
      ->default_val("decentralized");
  sweep_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* validate_cmd = app.add_subcommand("validate", "check a scenario file");
  validate_cmd->add_option("--scenario", scenario_path, "scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (!scenario_path.empty() && !fs::exists(scenario_path)) {
    std::cerr << "error: no such scenario file: " << scenario_path << "\n";
    return 2;
  }

  try {
    if (validate_cmd->parsed()) {
      Scenario sc = load_scenario(scenario_path);
      auto problems = validate_scenario(sc);
      if (problems.empty()) {
        std::cout << "OK: " << sc.name << " (" << sc.network.n_lanes() << " lanes, "
                  << sc.network.n_intersections() << " intersections)\n";
        return 0;
      }
      for (const auto& p : problems) std::cout << "violation: " << p << "\n";
      return 1;
    }

    auto kind = controller_from_string(controller_name);
    if (!kind) {
      std::cerr << "error: unknown controller '" << controller_name << "'\n";
      return 2;
    }

    if (run_cmd->parsed()) {
      Scenario sc = load_or_die(scenario_path);
      fs::create_directories(out_dir);
      std::vector<RoundRecord> rounds;
      RunRecord rec = run_closed_loop(
          sc, *kind, seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
          steps >= 0 ? std::optional<int>(steps) : std::nullopt,
          *kind == ControllerKind::Decentralized ? &rounds : nullptr);
      Metrics m = compute_metrics(rec, sc);
      int rc = 0;
      rc |= write_file(fs::path(out_dir) / "run.csv", run_to_csv(rec, sc.network));
      rc |= write_file(fs::path(out_dir) / "summary.txt", run_summary_text(rec, m));
      rc |= write_file(fs::path(out_dir) / "summary.json", run_summary_json(rec, m));
      if (!rounds.empty()) {
        rc |= write_file(fs::path(out_dir) / "rounds.jsonl",
                         round_log_jsonl(rounds, sc.units));
      }
      std::cout << run_summary_text(rec, m);
      return rc;
    }

    if (batch_cmd->parsed()) {
      Scenario sc = load_or_die(scenario_path);
      fs::create_directories(out_dir);
      BatchResult result =
          run_batch(sc, runs,
                    {ControllerKind::Centralized, ControllerKind::Decentralized,
                     ControllerKind::Baseline});
      int rc = 0;
      rc |= write_file(fs::path(out_dir) / "batch.txt", result.table());
      rc |= write_file(fs::path(out_dir) / "batch.json", batch_summary_json(result));
      std::cout << result.table();
      return rc;
    }

    if (sweep_cmd->parsed()) {
      Scenario sc = load_or_die(scenario_path);
      fs::create_directories(out_dir);
      std::vector<int> horizons;
      for (int tf = tf_min; tf <= tf_max; ++tf) horizons.push_back(tf);
      SweepResult result = sweep_horizon(sc, horizons, runs, *kind);
      int rc = 0;
      rc |= write_file(fs::path(out_dir) / "sweep.txt", result.table());
      rc |= write_file(fs::path(out_dir) / "sweep.json", sweep_summary_json(result));
      std::cout << result.table();
      return rc;
    }
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const RunAbort& e) {
    std::cerr << "run aborted: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
