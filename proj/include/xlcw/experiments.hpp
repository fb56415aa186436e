#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xlcw/adversarial.hpp"
#include "xlcw/classifier.hpp"
#include "xlcw/corpus.hpp"
#include "xlcw/metrics.hpp"
#include "xlcw/translation.hpp"

namespace xlcw {

enum class Setup { ZS, ZS_TR_SRC, ZS_TR_TRG, FS, ZS_ADV, MULTI_ZS, MONO_BASELINE };

std::string_view to_string(Setup setup);
Setup setup_from_string(std::string_view text);

// Shared by every manifest unless overridden.
inline constexpr std::array<std::uint64_t, 5> kDefaultSeeds{11, 23, 37, 53, 71};
// Few-shot sampling seed, fixed across all target languages of a study.
inline constexpr std::uint64_t kDefaultShotSeed = 2021;
inline constexpr std::size_t kAdversarialBatchSize = 8;

struct ExperimentManifest {
  std::string id;
  Setup setup = Setup::ZS;
  std::vector<std::string> source_languages;
  std::string target_language;
  std::string backend_name = "reference";
  Hyperparams hyperparams;
  std::vector<std::uint64_t> seeds{kDefaultSeeds.begin(), kDefaultSeeds.end()};
  bool allow_any_seed_count = false;
  std::optional<std::size_t> few_shot_k;
  std::uint64_t few_shot_seed = kDefaultShotSeed;
  // Number of shot samples per seed; repeats draw from seeds derived from few_shot_seed.
  std::size_t shot_repeats = 1;
  bool positive_majority = false;
  std::optional<AdvConfig> adv;
  // Multilingual pool size (n_positive + n_negative), positives, and pool seed.
  SamplingSpec sampling;
  // Other manifest ids to test against with a paired t-test.
  std::vector<std::string> compare_with;
  // Free-form tag separating otherwise identical cells (e.g. a batch-size variant of ZS);
  // report grids only combine results with the same variant.
  std::string variant;

  void validate() const;
  // ZS with source == target, or MONO_BASELINE.
  bool is_baseline() const;
  // Source languages joined with '+'.
  std::string source_label() const;
  bool operator==(const ExperimentManifest&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentManifest& m);
void from_json(const nlohmann::json& j, ExperimentManifest& m);

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<std::string> ids;
  std::vector<Prediction> predictions;
  F1Score f1;
  // F1 per shot repeat (FS only); f1 holds their mean when there is more than one.
  std::vector<double> repeat_f1;
  std::vector<LineageEntry> lineage;
  std::vector<AuditEntry> audit;

  bool operator==(const SeedResult&) const;
};

struct Comparison {
  std::string other_manifest_id;
  double p_value = 1.0;
  double t_statistic = 0.0;
  bool significant = false;

  bool operator==(const Comparison&) const = default;
};

struct RunResult {
  std::string manifest_id;
  Setup setup = Setup::ZS;
  std::string source;
  std::string target_language;
  bool baseline = false;
  std::optional<std::size_t> few_shot_k;
  std::size_t n_sources = 1;
  std::string variant;
  std::vector<SeedResult> per_seed;
  double mean_f1 = 0.0;
  std::vector<Comparison> comparisons;
  std::vector<std::string> warnings;

  bool operator==(const RunResult&) const;
};

// `with_audit` controls whether the (large) per-seed training audit is serialized.
nlohmann::json result_to_json(const RunResult& r, bool with_audit = false);
RunResult result_from_json(const nlohmann::json& j);

// Prepared splits by language.
struct DataStore {
  std::map<std::string, Split> train;
  std::map<std::string, Split> test;

  const Split& train_split(const std::string& language) const;
  const Split& test_split(const std::string& language) const;
};

// Stage-1 checkpoints shared across manifests. One writer per key; concurrent readers of
// the same key wait for the writer to finish.
class CheckpointCache {
 public:
  using Handle = std::shared_ptr<const Checkpoint>;

  Handle get_or_train(const std::string& key, const std::function<Checkpoint()>& train);
  std::size_t hits() const;
  std::size_t misses() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_future<Handle>> entries_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

struct ExperimentContext {
  const DataStore* data = nullptr;
  TranslationProvider* provider = nullptr;
  TranslationCache* translation_cache = nullptr;
  TranslateOptions translate_options;
  CheckpointCache* checkpoints = nullptr;
};

RunResult run_zero_shot(const ExperimentManifest& m, ExperimentContext& ctx);
RunResult run_zs_tr_src(const ExperimentManifest& m, ExperimentContext& ctx);
RunResult run_zs_tr_trg(const ExperimentManifest& m, ExperimentContext& ctx);
RunResult run_few_shot(const ExperimentManifest& m, ExperimentContext& ctx);
RunResult run_adversarial(const ExperimentManifest& m, ExperimentContext& ctx);
RunResult run_multilingual(const ExperimentManifest& m, ExperimentContext& ctx);
// Dispatches on m.setup.
RunResult run_manifest(const ExperimentManifest& m, ExperimentContext& ctx);

struct RunFailure {
  std::string manifest_id;
  std::string error;
};

struct StudyResult {
  std::vector<RunResult> results;
  std::vector<RunFailure> failures;
};

// Runs every manifest (bounded worker pool), then fills paired t-test comparisons: against
// the baseline of the same target, and against every id listed in compare_with.
StudyResult run_study(std::span<const ExperimentManifest> manifests, ExperimentContext& ctx,
                      std::size_t workers = 1);

// Fills r.comparisons from finished results (used by run_study).
void fill_comparisons(std::span<const ExperimentManifest> manifests,
                      std::vector<RunResult>& results);

struct LeakageReport {
  std::size_t checked_manifests = 0;
  std::vector<std::string> violations;
};

// Training-audit checks: no target test ids in training; no original target-language
// training examples except exactly k labeled shots for FS and unlabeled pools for ZS_ADV.
LeakageReport audit_leakage(std::span<const ExperimentManifest> manifests,
                            std::span<const RunResult> results, const DataStore& data);

}  // namespace xlcw
