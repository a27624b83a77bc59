// qnroute: generate routing benchmarks, run the A* baseline, train DQN
// routers, and tabulate the results.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qnroute/harness.hpp"

namespace fs = std::filesystem;
using namespace qnroute;

int main(int argc, char** argv) {
  CLI::App app{"DQN global routing with aSNAQ, Adam and RMSprop"};
  app.require_subcommand(1);

  std::size_t count = 15;
  std::uint64_t gen_seed = 0;
  fs::path gen_out;
  GenSpec spec;
  auto* gen = app.add_subcommand("gen", "Generate random two-pin routing problems");
  gen->add_option("--count", count, "Number of problem files")->default_val(15);
  gen->add_option("--seed", gen_seed, "Master seed")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--nets", spec.nets, "Nets per problem")->default_val(spec.nets);
  gen->add_option("--blockages", spec.blockages, "Blocked columns")->default_val(spec.blockages);
  gen->add_option("--capacity", spec.capacity, "Edge capacity")->default_val(spec.capacity);
  gen->add_option("--size", spec.size_x, "Grid width and height")->default_val(spec.size_x);

  fs::path astar_problem, astar_out;
  auto* astar = app.add_subcommand("route-astar", "Route a problem with the sequential A* baseline");
  astar->add_option("--problem", astar_problem, "Problem file")->required()->check(CLI::ExistingFile);
  astar->add_option("--out", astar_out, "Output directory")->required();

  fs::path train_problem, train_out, train_config;
  TrainSettings settings;
  auto* train = app.add_subcommand("train", "Train a DQN router on one problem");
  train->add_option("--problem", train_problem, "Problem file")->required()->check(CLI::ExistingFile);
  train->add_option("--optimizer", settings.optimizer, "asnaq, adam or rmsprop")
      ->check(CLI::IsMember({"asnaq", "adam", "rmsprop"}))
      ->default_val("asnaq");
  train->add_option("--episodes", settings.episodes, "Training episodes")->default_val(500);
  train->add_option("--max-steps", settings.max_steps, "Step limit per two-pin problem")->default_val(50);
  train->add_option("--seed", settings.seed, "Agent seed")->default_val(1);
  train->add_option("--config", train_config, "Key-value config file")->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output root; results go to <out>/<problem>/<optimizer>/")->required();

  std::vector<fs::path> cmp_problems, cmp_runs;
  fs::path cmp_out;
  auto* compare = app.add_subcommand("compare", "Tabulate trained runs against the A* baseline");
  compare->add_option("--problem", cmp_problems, "Problem file (one, or one per run directory)")
      ->required()
      ->check(CLI::ExistingFile);
  compare->add_option("--runs", cmp_runs, "Trial directories holding <optimizer>/summary.json")->required();
  compare->add_option("--out", cmp_out, "Output CSV; a JSON twin is written next to it")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto files = cmd_gen(count, gen_seed, gen_out, spec);
      std::cout << "wrote " << files.size() << " problem files to " << gen_out.string() << "\n";
    } else if (*astar) {
      const AstarRun run = cmd_route_astar(astar_problem, astar_out);
      std::cout << "WL " << run.metrics.wirelength << " overflow " << run.metrics.overflow << " routed "
                << run.metrics.nets_routed << "/" << run.metrics.nets_routed + run.solution.unrouted.size() << "\n";
    } else if (*train) {
      if (!train_config.empty()) settings.config = Config::load(train_config);
      if (settings.config.has("optimizer.name") && !train->count("--optimizer"))
        settings.optimizer = settings.config.get("optimizer.name", settings.optimizer);
      const TrainResult r = cmd_train(train_problem, settings, train_out);
      const TrainSummary& s = r.summary;
      std::cout << s.optimizer << ": R_best " << s.r_best << " at episode " << s.best_episode << ", pins " << s.pins
                << "/" << s.total_pins << ", WL " << (s.wirelength ? std::to_string(*s.wirelength) : "-") << "\n";
      if (s.aborted) {
        std::cerr << "training aborted: " << s.diagnostic << "\n";
        return 2;
      }
    } else if (*compare) {
      const auto rows = cmd_compare(cmp_problems, cmp_runs, cmp_out);
      std::cout << compare_csv(rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
