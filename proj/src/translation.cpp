#include "xlcw/translation.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlcw/errors.hpp"
#include "xlcw/rng.hpp"

namespace xlcw {

std::string translation_cache_key(std::string_view source_text, std::string_view source_language,
                                  std::string_view target_language, std::string_view provider) {
  std::string buf;
  for (const auto field : {source_text, source_language, target_language, provider}) {
    buf += std::to_string(field.size());
    buf += ':';
    buf += field;
  }
  return fmt::format("{:016x}", fnv1a64(buf));
}

void to_json(nlohmann::json& j, const TranslationRecord& r) {
  j = nlohmann::json{{"cache_key", r.cache_key},
                     {"provider", r.provider},
                     {"source_language", r.source_language},
                     {"source_text", r.source_text},
                     {"target_language", r.target_language},
                     {"translated_text", r.translated_text}};
}

void from_json(const nlohmann::json& j, TranslationRecord& r) {
  r.source_text = j.at("source_text").get<std::string>();
  r.source_language = j.at("source_language").get<std::string>();
  r.target_language = j.at("target_language").get<std::string>();
  r.provider = j.at("provider").get<std::string>();
  r.translated_text = j.at("translated_text").get<std::string>();
  r.cache_key = translation_cache_key(r.source_text, r.source_language, r.target_language,
                                      r.provider);
  if (j.contains("cache_key") && j.at("cache_key").get<std::string>() != r.cache_key) {
    throw ValidationError(fmt::format("cache record key mismatch for '{}'", r.source_text));
  }
}

void DictionaryProvider::add(const std::string& source_language,
                             const std::string& target_language, Dictionary dictionary) {
  tables_[{source_language, target_language}] = std::move(dictionary);
}

DictionaryProvider DictionaryProvider::from_json(const nlohmann::json& j) {
  DictionaryProvider provider;
  for (const auto& [pair, table] : j.items()) {
    const auto arrow = pair.find("->");
    if (arrow == std::string::npos) {
      throw ValidationError(fmt::format("dictionary key '{}' is not of the form 'src->tgt'", pair));
    }
    provider.add(pair.substr(0, arrow), pair.substr(arrow + 2), table.get<Dictionary>());
  }
  return provider;
}

nlohmann::json DictionaryProvider::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [pair, table] : tables_) {
    // std::map keeps the written file byte-stable.
    j[pair.first + "->" + pair.second] = std::map<std::string, std::string>(table.begin(), table.end());
  }
  return j;
}

DictionaryProvider DictionaryProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open dictionary '{}'", path.string()));
  return from_json(nlohmann::json::parse(in));
}

std::string DictionaryProvider::apply(const std::string& text, const std::string& source_language,
                                      const std::string& target_language) const {
  const auto it = tables_.find({source_language, target_language});
  if (it == tables_.end()) {
    throw ProviderError(
        fmt::format("dictionary has no table for {} -> {}", source_language, target_language));
  }
  std::istringstream words(text);
  std::string word, out;
  while (words >> word) {
    if (!out.empty()) out += ' ';
    const auto hit = it->second.find(word);
    out += hit == it->second.end() ? word : hit->second;
  }
  return out;
}

std::string DictionaryProvider::translate(const std::string& text,
                                          const std::string& source_language,
                                          const std::string& target_language) {
  count_call();
  return apply(text, source_language, target_language);
}

ReplayProvider::ReplayProvider(const std::filesystem::path& cache_path,
                               std::string replayed_provider)
    : replayed_provider_(std::move(replayed_provider)) {
  std::ifstream in(cache_path);
  if (!in) throw ProviderError(fmt::format("cannot open replay cache '{}'", cache_path.string()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    TranslationRecord r;
    try {
      r = nlohmann::json::parse(line).get<TranslationRecord>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(fmt::format("bad replay record: {}", e.what()), line_no);
    }
    if (r.provider == replayed_provider_) by_key_.emplace(r.cache_key, r.translated_text);
  }
}

std::string ReplayProvider::translate(const std::string& text, const std::string& source_language,
                                      const std::string& target_language) {
  count_call();
  const auto it = by_key_.find(
      translation_cache_key(text, source_language, target_language, replayed_provider_));
  if (it == by_key_.end()) {
    throw ProviderError(fmt::format("replay cache has no {} -> {} entry for '{}'", source_language,
                                    target_language, text));
  }
  return it->second;
}

namespace {

struct Job {
  std::string text;
  std::string key;
  std::vector<std::string> ids;
};

}  // namespace

Split translate_corpus(const Split& split, const std::string& target_language,
                       TranslationProvider& provider, TranslationCache& cache,
                       const TranslateOptions& options) {
  if (target_language == split.language) {
    throw PreconditionError(
        fmt::format("translate_corpus: split is already in '{}'", target_language));
  }
  if (options.max_attempts == 0) throw PreconditionError("translate_corpus: max_attempts is 0");
  const std::string provider_name = provider.name();

  std::vector<std::string> sent(split.size());
  std::vector<std::string> keys(split.size());
  std::vector<Job> jobs;
  std::unordered_map<std::string, std::size_t> job_of_key;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& e = split.examples[i];
    sent[i] = options.preprocess ? options.preprocess(e.text) : e.text;
    keys[i] = translation_cache_key(sent[i], split.language, target_language, provider_name);
    if (cache.lookup(keys[i])) continue;
    const auto [it, fresh] = job_of_key.emplace(keys[i], jobs.size());
    if (fresh) jobs.push_back({sent[i], keys[i], {}});
    jobs[it->second].ids.push_back(e.id);
  }

  std::vector<std::string> failed;
  std::vector<std::string> empty;
  std::mutex failure_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const auto& job = jobs[j];
      std::optional<std::string> result;
      for (std::size_t attempt = 0; attempt < options.max_attempts && !result; ++attempt) {
        if (attempt > 0 && options.base_backoff.count() > 0) {
          std::this_thread::sleep_for(options.base_backoff * (1LL << (attempt - 1)));
        }
        try {
          result = provider.translate(job.text, split.language, target_language);
        } catch (const std::exception&) {
          // retried below; the final failure is reported with the example ids
        }
      }
      if (!result) {
        std::lock_guard lock(failure_mutex);
        failed.insert(failed.end(), job.ids.begin(), job.ids.end());
        continue;
      }
      if (result->find_first_not_of(" \t\r\n") == std::string::npos) {
        std::lock_guard lock(failure_mutex);
        empty.insert(empty.end(), job.ids.begin(), job.ids.end());
        continue;
      }
      cache.insert({job.text, split.language, target_language, provider_name, *result, job.key});
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.workers, jobs.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  if (!failed.empty()) {
    std::sort(failed.begin(), failed.end());
    throw ProviderError(fmt::format("provider '{}' failed after {} attempts for ids: {}",
                                    provider_name, options.max_attempts, fmt::join(failed, ", ")),
                        failed);
  }
  if (!empty.empty()) {
    std::sort(empty.begin(), empty.end());
    throw ValidationError(
        fmt::format("empty translation for ids: {}", fmt::join(empty, ", ")));
  }

  Split out{target_language, split.role, {}};
  out.examples.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    Example e = split.examples[i];
    e.text = *cache.lookup(keys[i]);
    e.language = target_language;
    e.origin = Origin::translated;
    e.source_language = split.language;
    out.examples.push_back(std::move(e));
  }
  return out;
}

AlignmentReport verify_alignment(const Split& original, const Split& translated) {
  AlignmentReport report;
  const auto n = std::min(original.size(), translated.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = original.examples[i];
    const auto& b = translated.examples[i];
    if (a.id != b.id) {
      report.diffs.push_back(fmt::format("position {}: id '{}' vs '{}'", i, a.id, b.id));
    } else if (a.label != b.label) {
      report.diffs.push_back(
          fmt::format("position {}: id '{}' label {} vs {}", i, a.id, a.label, b.label));
    }
  }
  for (std::size_t i = n; i < original.size(); ++i) {
    report.diffs.push_back(fmt::format("missing id '{}' at position {}", original.examples[i].id, i));
  }
  for (std::size_t i = n; i < translated.size(); ++i) {
    report.diffs.push_back(
        fmt::format("extra id '{}' at position {}", translated.examples[i].id, i));
  }
  report.ok = report.diffs.empty();
  return report;
}

}  // namespace xlcw
