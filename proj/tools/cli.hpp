#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xlcw/corpus.hpp"
#include "xlcw/experiments.hpp"
#include "xlcw/synthetic.hpp"
#include "xlcw/translation.hpp"

namespace xlcw::cli {

struct LanguageFiles {
  std::filesystem::path train;
  std::optional<std::filesystem::path> dev;
  std::filesystem::path test;
};

struct TranslationSettings {
  // "", "dictionary", "replay" or "http".
  std::string provider;
  std::filesystem::path dictionary;
  std::filesystem::path replay_cache;
  std::string replayed_provider;
  HttpProviderConfig http;
  // Defaults to <output>/translation-cache.jsonl.
  std::filesystem::path cache;
  std::size_t max_attempts = 3;
  long backoff_ms = 200;
};

struct StudyConfig {
  std::map<std::string, LanguageFiles> raw;
  std::optional<SyntheticSpec> synthetic;
  SamplingSpec sampling;
  std::map<std::string, SamplingSpec> sampling_overrides;
  TsvColumns columns;
  std::filesystem::path output = "out";
  std::size_t workers = 1;
  TranslationSettings translation;
  std::vector<ExperimentManifest> manifests;
  // Canonical JSON of the config as given; hashed into the run id.
  std::string canonical;

  std::filesystem::path data_dir() const { return output / "data"; }
  std::filesystem::path results_dir() const { return output / "results"; }
  std::filesystem::path report_dir() const { return output / "report"; }
  SamplingSpec sampling_for(const std::string& language) const;
  // Languages with data: raw inputs or the synthetic pair.
  std::vector<std::string> languages() const;
  std::string run_id() const;
};

// Relative paths are resolved against `base_dir` (the config file's directory).
StudyConfig parse_study_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
StudyConfig load_study_config(const std::filesystem::path& path);

// Expands a {"languages", "setups", "few_shot_k", "defaults", ...} block into manifests.
std::vector<ExperimentManifest> expand_grid(const nlohmann::json& grid);

// "11,23,37" -> {11, 23, 37}.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct Overrides {
  std::optional<std::size_t> workers;
  std::optional<std::filesystem::path> output;
  std::optional<std::vector<std::uint64_t>> seeds;
  bool dry_run = false;
  std::string direction = "both";
};

void apply_overrides(StudyConfig& config, const Overrides& overrides);

// Each command returns a process exit code and writes a human summary to `err`.
int cmd_prepare_data(const StudyConfig& config, std::ostream& err);
int cmd_translate(const StudyConfig& config, const std::string& direction, std::ostream& err);
int cmd_run(const StudyConfig& config, bool dry_run, std::ostream& err);
int cmd_report(const StudyConfig& config, std::ostream& err);

DataStore load_prepared_data(const StudyConfig& config);

}  // namespace xlcw::cli
