#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xlcw/corpus.hpp"
#include "xlcw/translation.hpp"

namespace xlcw {

// Two toy languages that share one labeling rule. A sentence is positive iff it contains a
// "claim" cue word and negative iff it contains a "chatter" cue word; the remaining words
// are label-neutral fillers. Every word in one language has a dictionary counterpart in the
// other. With disjoint vocabularies the two languages hash into disjoint token-id ranges of
// the reference tokenizer, so nothing learned on one transfers to the other by surface form.
struct SyntheticSpec {
  std::string first_language = "xa";
  std::string second_language = "xb";
  std::size_t train_size = 400;
  std::size_t test_size = 400;
  double train_positive_rate = 0.5;
  double test_positive_rate = 0.5;
  std::size_t fillers = 48;
  std::size_t cues_per_class = 8;
  std::size_t min_words = 6;
  std::size_t max_words = 12;
  bool shared_vocabulary = false;
  std::uint64_t seed = 7;
};

struct SyntheticLexicon {
  std::vector<std::string> fillers;
  std::vector<std::string> positive_cues;
  std::vector<std::string> negative_cues;

  std::vector<std::string> all() const;
};

struct SyntheticCorpus {
  SyntheticSpec spec;
  std::map<std::string, SyntheticLexicon> lexicons;
  std::map<std::string, Split> train;
  std::map<std::string, Split> test;
  DictionaryProvider dictionary;
};

// Words whose reference-tokenizer ids fall in [lo, hi), pairwise distinct ids.
std::vector<std::string> words_in_id_range(std::size_t count, int lo, int hi, std::uint64_t seed);

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec);

}  // namespace xlcw
