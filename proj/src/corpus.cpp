#include "xlcw/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "xlcw/errors.hpp"
#include "xlcw/rng.hpp"

namespace xlcw {
namespace {

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char ch) {
    return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
  });
}

struct ClassIndex {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};

ClassIndex index_by_class(const Split& split) {
  ClassIndex index;
  for (std::size_t i = 0; i < split.examples.size(); ++i) {
    (split.examples[i].label == kPositive ? index.positive : index.negative).push_back(i);
  }
  return index;
}

// Seeded shuffle of each class then prefix-take; the union is shuffled again.
std::vector<Example> draw_by_class(const Split& split, std::size_t n_positive,
                                   std::size_t n_negative, std::uint64_t seed,
                                   std::string_view what) {
  auto index = index_by_class(split);
  if (index.positive.size() < n_positive || index.negative.size() < n_negative) {
    throw CapacityError(fmt::format(
        "{}: language '{}' has {} positive / {} negative examples, requested {} / {}", what,
        split.language, index.positive.size(), index.negative.size(), n_positive, n_negative));
  }
  Rng rng(seed);
  rng.shuffle(std::span(index.positive));
  rng.shuffle(std::span(index.negative));
  std::vector<std::size_t> chosen(index.positive.begin(),
                                  index.positive.begin() + static_cast<std::ptrdiff_t>(n_positive));
  chosen.insert(chosen.end(), index.negative.begin(),
                index.negative.begin() + static_cast<std::ptrdiff_t>(n_negative));
  rng.shuffle(std::span(chosen));

  std::vector<Example> out;
  out.reserve(chosen.size());
  for (const auto i : chosen) out.push_back(split.examples[i]);
  return out;
}

}  // namespace

std::size_t Split::positives() const {
  return static_cast<std::size_t>(std::count_if(
      examples.begin(), examples.end(), [](const Example& e) { return e.label == kPositive; }));
}

std::string_view to_string(Origin origin) {
  return origin == Origin::original ? "original" : "translated";
}

std::string_view to_string(Role role) { return role == Role::train ? "train" : "test"; }

Origin origin_from_string(std::string_view text) {
  if (text == "original") return Origin::original;
  if (text == "translated") return Origin::translated;
  throw ValidationError(fmt::format("unknown origin '{}'", text));
}

Role role_from_string(std::string_view text) {
  if (text == "train") return Role::train;
  if (text == "test") return Role::test;
  throw ValidationError(fmt::format("unknown role '{}'", text));
}

void validate_example(const Example& example) {
  if (example.id.empty()) throw ValidationError("example with empty id");
  if (is_blank(example.text)) {
    throw ValidationError(fmt::format("example '{}' has empty text", example.id));
  }
  if (example.label != kPositive && example.label != kNegative) {
    throw ValidationError(
        fmt::format("example '{}' has label {} outside {{0,1}}", example.id, example.label));
  }
  const bool translated = example.origin == Origin::translated;
  if (translated != example.source_language.has_value()) {
    throw ValidationError(fmt::format(
        "example '{}': source_language must be set exactly when origin=translated", example.id));
  }
}

void validate_split(const Split& split) {
  std::unordered_set<std::string_view> seen;
  const bool pooled = split.language == kMultiLanguage;
  for (const auto& example : split.examples) {
    validate_example(example);
    if (!pooled && example.language != split.language) {
      throw ValidationError(fmt::format("example '{}' has language '{}' in a '{}' split",
                                        example.id, example.language, split.language));
    }
    if (!seen.insert(example.id).second) {
      throw ValidationError(fmt::format("duplicate id '{}' in '{}' split", example.id,
                                        split.language));
    }
  }
}

Split merge_train_dev(const Split& train, const Split& dev) {
  if (train.language != dev.language) {
    throw ValidationError(fmt::format("cannot merge '{}' train with '{}' dev", train.language,
                                      dev.language));
  }
  std::set<std::string> train_ids;
  for (const auto& e : train.examples) train_ids.insert(e.id);
  std::vector<std::string> duplicates;
  for (const auto& e : dev.examples) {
    if (train_ids.contains(e.id)) duplicates.push_back(e.id);
  }
  if (!duplicates.empty()) {
    throw ValidationError(
        fmt::format("duplicate ids across train and dev: {}", fmt::join(duplicates, ", ")));
  }

  Split merged{train.language, Role::train, {}};
  merged.examples.reserve(train.size() + dev.size());
  for (auto e : train.examples) {
    if (e.provenance.empty()) e.provenance = "train";
    merged.examples.push_back(std::move(e));
  }
  for (auto e : dev.examples) {
    if (e.provenance.empty()) e.provenance = "dev";
    merged.examples.push_back(std::move(e));
  }
  return merged;
}

Split stratified_downsample(const Split& split, const SamplingSpec& spec) {
  return Split{split.language, split.role,
               draw_by_class(split, spec.n_positive, spec.n_negative, spec.seed,
                             "stratified_downsample")};
}

FewShotCounts few_shot_counts(std::size_t k, bool positive_majority) {
  const std::size_t half = k / 2;
  const std::size_t extra = k % 2;
  if (positive_majority) return {half + extra, half};
  return {half, half + extra};
}

std::vector<Example> sample_few_shots(const Split& split, std::size_t k, std::uint64_t seed,
                                      bool positive_majority) {
  if (k == 0) throw PreconditionError("sample_few_shots: k must be at least 1");
  const auto counts = few_shot_counts(k, positive_majority);
  return draw_by_class(split, counts.positives, counts.negatives, seed, "sample_few_shots");
}

Split build_multilingual_pool(std::span<const Split> splits, std::size_t total,
                              std::size_t total_positive, std::uint64_t seed) {
  if (splits.empty()) throw PreconditionError("build_multilingual_pool: no source splits");
  if (total_positive > total) {
    throw PreconditionError("build_multilingual_pool: total_positive exceeds total");
  }

  std::map<std::string, const Split*> by_language;
  for (const auto& split : splits) {
    if (!by_language.emplace(split.language, &split).second) {
      throw ValidationError(fmt::format("language '{}' given twice", split.language));
    }
  }

  const std::size_t n = by_language.size();
  std::size_t rank = 0;
  std::vector<Example> pooled;
  pooled.reserve(total);
  for (const auto& [language, split] : by_language) {
    const std::size_t quota = total / n + (rank < total % n ? 1 : 0);
    const std::size_t positives = total_positive / n + (rank < total_positive % n ? 1 : 0);
    if (positives > quota) {
      throw PreconditionError(fmt::format(
          "build_multilingual_pool: positive quota {} exceeds total quota {} for '{}'",
          positives, quota, language));
    }
    auto drawn = draw_by_class(*split, positives, quota - positives, seed,
                               "build_multilingual_pool");
    std::move(drawn.begin(), drawn.end(), std::back_inserter(pooled));
    ++rank;
  }

  if (n > 1) {
    Rng rng(derive_seed(seed, "multilingual-pool"));
    rng.shuffle(std::span(pooled));
  }
  Split out{std::string(kMultiLanguage), Role::train, std::move(pooled)};
  validate_split(out);
  return out;
}

}  // namespace xlcw
