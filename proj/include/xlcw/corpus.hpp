#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xlcw {

enum class Origin { original, translated };
enum class Role { train, test };

inline constexpr int kNegative = 0;
inline constexpr int kPositive = 1;
// Label carried by unlabeled target examples handed to adversarial training.
inline constexpr int kUnlabeled = -1;

// Language code of a pooled multilingual split.
inline constexpr std::string_view kMultiLanguage = "multi";

struct Example {
  std::string id;
  std::string text;
  std::string language;
  int label = kNegative;
  Origin origin = Origin::original;
  std::optional<std::string> source_language;
  // Name of the raw split the example came from ("train", "dev"); empty when unknown.
  std::string provenance;

  bool operator==(const Example&) const = default;
};

struct Split {
  std::string language;
  Role role = Role::train;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  std::size_t positives() const;
  std::size_t negatives() const { return size() - positives(); }

  bool operator==(const Split&) const = default;
};

struct SamplingSpec {
  std::size_t n_positive = 300;
  std::size_t n_negative = 1400;
  std::uint64_t seed = 0;

  bool operator==(const SamplingSpec&) const = default;
};

std::string_view to_string(Origin origin);
std::string_view to_string(Role role);
Origin origin_from_string(std::string_view text);
Role role_from_string(std::string_view text);

// Throws ValidationError when an example breaks the data-model invariants.
void validate_example(const Example& example);
// Checks every example plus split-level invariants (shared language, unique ids).
void validate_split(const Split& split);

// Column names used by the CT21 tab-separated release.
struct TsvColumns {
  std::string id = "tweet_id";
  std::string text = "tweet_text";
  std::string label = "check_worthiness";
};

Split ingest_ct21_tsv(const std::filesystem::path& path, std::string_view language, Role role,
                      const TsvColumns& columns = {});
Split parse_ct21_tsv(std::istream& in, std::string_view language, Role role,
                     const TsvColumns& columns = {});

// Canonical JSONL: one {id, text, language, label, origin, source_language} object per line.
void write_jsonl(std::ostream& out, std::span<const Example> examples);
std::vector<Example> read_jsonl(std::istream& in);
void save_split(const std::filesystem::path& path, const Split& split);
Split load_split(const std::filesystem::path& path, std::string_view language, Role role);

Split merge_train_dev(const Split& train, const Split& dev);

Split stratified_downsample(const Split& split, const SamplingSpec& spec);

struct FewShotCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Odd k puts the extra example in the negative class unless positive_majority is set:
// k=17 gives 8 positives and 9 negatives, k=9 gives 4 and 5.
FewShotCounts few_shot_counts(std::size_t k, bool positive_majority = false);

std::vector<Example> sample_few_shots(const Split& split, std::size_t k, std::uint64_t seed,
                                      bool positive_majority = false);

// Equal-representation pool over several languages. Per-language quotas are
// total/n and total_positive/n; remainders go to languages in ascending code order.
Split build_multilingual_pool(std::span<const Split> splits, std::size_t total,
                              std::size_t total_positive, std::uint64_t seed);

}  // namespace xlcw
