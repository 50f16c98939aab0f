#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "annoloop/commands.hpp"

namespace cli = annoloop::cli;

int main(int argc, char** argv) {
  CLI::App app{"tune a one-shot annotation template against its own "
               "reconstructions, then annotate a corpus and report recovery "
               "quality"};
  app.require_subcommand(1);

  std::string config_path;
  std::string axis;
  cli::Overrides overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iterations;
  std::optional<std::string> backend_kind;
  std::optional<double> temperature;

  CLI::App* validate = app.add_subcommand(
      "validate", "check a config file and the files it references");
  validate->add_option("config", config_path, "path to the run config (JSON)")
      ->required();

  CLI::App* tune = app.add_subcommand(
      "tune", "run the template tuning loop; writes trace.jsonl, trace.csv, "
              "tuning_result.json");
  tune->add_option("config", config_path, "path to the run config (JSON)")
      ->required();
  tune->add_option("--seed", seed, "override the tuning sampler seed");
  tune->add_option("--max-iterations", max_iterations,
                   "override the iteration count");
  tune->add_option("--backend", backend_kind,
                   "override the backend kind (mock|http|replay)");
  tune->add_option("--temperature", temperature,
                   "override the candidate-generation temperature");
  tune->add_flag("--zero-shot", overrides.zero_shot,
                 "tune without the exemplar in the prompts");

  CLI::App* generate = app.add_subcommand(
      "generate", "annotate the generation split and report per-fold recovery "
                  "quality; writes report.json and report.csv");
  generate->add_option("config", config_path, "path to the run config (JSON)")
      ->required();
  generate->add_option("--backend", backend_kind,
                       "override the backend kind (mock|http|replay)");
  generate->add_flag("--zero-shot", overrides.zero_shot,
                     "run the paired one-shot vs zero-shot comparison");

  CLI::App* ablate = app.add_subcommand(
      "ablate", "re-run tuning across one config axis; writes ablation.csv");
  ablate->add_option("axis", axis,
                     "grid axis: metrics | temperature | initial_template")
      ->required();
  ablate->add_option("config", config_path, "path to the run config (JSON)")
      ->required();
  ablate->add_option("--seed", seed, "override the tuning sampler seed");
  ablate->add_option("--max-iterations", max_iterations,
                     "override the iteration count");
  ablate->add_option("--backend", backend_kind,
                     "override the backend kind (mock|http|replay)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitConfig;
  }

  overrides.seed = seed;
  overrides.max_iterations = max_iterations;
  overrides.backend_kind = backend_kind;
  overrides.temperature = temperature;

  if (validate->parsed()) return cli::cmd_validate(config_path, std::cout);
  if (tune->parsed()) return cli::cmd_tune(config_path, overrides, std::cout);
  if (generate->parsed()) {
    return cli::cmd_generate(config_path, overrides, std::cout);
  }
  if (ablate->parsed()) {
    return cli::cmd_ablate(config_path, axis, overrides, std::cout);
  }
  return cli::kExitConfig;
}
