#include <iostream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "xlcw/errors.hpp"

int main(int argc, char** argv) {
  using namespace xlcw::cli;
  CLI::App app{"Cross-lingual check-worthiness transfer experiments"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  std::size_t workers = 0;
  std::string output;
  std::string seed_list;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Study configuration (JSON)")->required();
    sub->add_option("--output", output, "Output directory (overrides the config)");
    sub->add_option("--workers", workers, "Worker threads (>= 1)");
  };
  auto* prepare = app.add_subcommand("prepare-data", "Merge, downsample and write splits");
  add_common(prepare);
  auto* translate = app.add_subcommand("translate", "Translate splits into the cache");
  add_common(translate);
  translate->add_option("--direction", overrides.direction, "src, trg or both")
      ->check(CLI::IsMember({"src", "trg", "both"}));
  auto* run = app.add_subcommand("run", "Run every manifest of the study");
  add_common(run);
  run->add_flag("--dry-run", overrides.dry_run, "Validate manifests only");
  run->add_option("--seed-list", seed_list, "Comma-separated seeds for every manifest");
  auto* report = app.add_subcommand("report", "Render tables and sweep series");
  add_common(report);

  CLI11_PARSE(app, argc, argv);

  try {
    auto config = load_study_config(config_path);
    if (workers > 0) overrides.workers = workers;
    if (!output.empty()) overrides.output = output;
    if (!seed_list.empty()) overrides.seeds = parse_seed_list(seed_list);
    apply_overrides(config, overrides);

    if (prepare->parsed()) return cmd_prepare_data(config, std::cerr);
    if (translate->parsed()) return cmd_translate(config, overrides.direction, std::cerr);
    if (run->parsed()) return cmd_run(config, overrides.dry_run, std::cerr);
    if (report->parsed()) return cmd_report(config, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
