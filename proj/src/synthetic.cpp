#include "xlcw/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "xlcw/encoder.hpp"
#include "xlcw/errors.hpp"
#include "xlcw/rng.hpp"

namespace xlcw {
namespace {

constexpr std::string_view kOnsets = "bcdfghjklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::string random_word(Rng& rng) {
  std::string w;
  const auto syllables = 2 + rng.below(2);
  for (std::uint64_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.below(kOnsets.size())];
    w += kVowels[rng.below(kVowels.size())];
  }
  return w;
}

Split make_split(const std::string& language, Role role, const SyntheticLexicon& lex,
                 std::size_t size, double positive_rate, std::size_t min_words,
                 std::size_t max_words, Rng& rng) {
  const auto n_pos = static_cast<std::size_t>(std::llround(positive_rate * static_cast<double>(size)));
  std::vector<int> labels(size, kNegative);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), kPositive);
  rng.shuffle(std::span(labels));

  Split split{language, role, {}};
  split.examples.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const auto n_words = min_words + rng.below(max_words - min_words + 1);
    const auto& cues = labels[i] == kPositive ? lex.positive_cues : lex.negative_cues;
    const auto n_cues = 1 + rng.below(2);
    std::vector<std::string> words;
    for (std::uint64_t w = 0; w < n_words - n_cues; ++w) {
      words.push_back(lex.fillers[rng.below(lex.fillers.size())]);
    }
    for (std::uint64_t c = 0; c < n_cues; ++c) {
      const auto at = rng.below(words.size() + 1);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), cues[rng.below(cues.size())]);
    }
    std::string text;
    for (const auto& w : words) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    split.examples.push_back({fmt::format("{}-{}-{:05}", language, to_string(role), i),
                              std::move(text), language, labels[i], Origin::original,
                              std::nullopt, std::string(to_string(role))});
  }
  return split;
}

}  // namespace

std::vector<std::string> SyntheticLexicon::all() const {
  std::vector<std::string> out = fillers;
  out.insert(out.end(), positive_cues.begin(), positive_cues.end());
  out.insert(out.end(), negative_cues.begin(), negative_cues.end());
  return out;
}

std::vector<std::string> words_in_id_range(std::size_t count, int lo, int hi, std::uint64_t seed) {
  if (lo < HashTokenizer::kFirstWordId || hi > 512 || lo >= hi ||
      count > static_cast<std::size_t>(hi - lo)) {
    throw PreconditionError(
        fmt::format("words_in_id_range: cannot place {} words in ids [{}, {})", count, lo, hi));
  }
  const HashTokenizer tokenizer(512);
  Rng rng(seed);
  std::set<int> used;
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (std::size_t attempts = 0; out.size() < count; ++attempts) {
    if (attempts > 1'000'000) throw CapacityError("words_in_id_range: search exhausted");
    auto w = random_word(rng);
    const int id = tokenizer.word_id(w);
    if (id < lo || id >= hi || used.contains(id) || !seen.insert(w).second) continue;
    used.insert(id);
    out.push_back(std::move(w));
  }
  return out;
}

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.first_language == spec.second_language) {
    throw PreconditionError("synthetic languages must have distinct codes");
  }
  if (spec.min_words < 3 || spec.max_words < spec.min_words) {
    throw PreconditionError("synthetic sentence lengths must satisfy 3 <= min_words <= max_words");
  }
  if (spec.fillers == 0 || spec.cues_per_class == 0) {
    throw PreconditionError("synthetic lexicon needs fillers and cue words");
  }
  const std::size_t words = spec.fillers + 2 * spec.cues_per_class;
  const int split_point = (HashTokenizer::kFirstWordId + 512) / 2;

  auto lexicon_from = [&](std::vector<std::string> list) {
    SyntheticLexicon lex;
    const auto f = static_cast<std::ptrdiff_t>(spec.fillers);
    const auto c = static_cast<std::ptrdiff_t>(spec.cues_per_class);
    lex.fillers.assign(list.begin(), list.begin() + f);
    lex.positive_cues.assign(list.begin() + f, list.begin() + f + c);
    lex.negative_cues.assign(list.begin() + f + c, list.end());
    return lex;
  };

  SyntheticCorpus corpus;
  corpus.spec = spec;
  const auto first = words_in_id_range(words, HashTokenizer::kFirstWordId, split_point,
                                       derive_seed(spec.seed, "lexicon-first"));
  const auto second = spec.shared_vocabulary
                          ? first
                          : words_in_id_range(words, split_point, 512,
                                              derive_seed(spec.seed, "lexicon-second"));
  corpus.lexicons[spec.first_language] = lexicon_from(first);
  corpus.lexicons[spec.second_language] = lexicon_from(second);

  DictionaryProvider::Dictionary forward, backward;
  for (std::size_t i = 0; i < words; ++i) {
    forward[first[i]] = second[i];
    backward[second[i]] = first[i];
  }
  corpus.dictionary.add(spec.first_language, spec.second_language, std::move(forward));
  corpus.dictionary.add(spec.second_language, spec.first_language, std::move(backward));

  for (const auto& language : {spec.first_language, spec.second_language}) {
    Rng rng(derive_seed(spec.seed, "sentences-" + language));
    const auto& lex = corpus.lexicons[language];
    corpus.train[language] = make_split(language, Role::train, lex, spec.train_size,
                                        spec.train_positive_rate, spec.min_words, spec.max_words,
                                        rng);
    corpus.test[language] = make_split(language, Role::test, lex, spec.test_size,
                                       spec.test_positive_rate, spec.min_words, spec.max_words,
                                       rng);
  }
  return corpus;
}

}  // namespace xlcw
