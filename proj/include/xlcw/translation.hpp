#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xlcw/corpus.hpp"

namespace xlcw {

struct TranslationRecord {
  std::string source_text;
  std::string source_language;
  std::string target_language;
  std::string provider;
  std::string translated_text;
  std::string cache_key;

  bool operator==(const TranslationRecord&) const = default;
};

// Pure function of the four key fields (length-prefixed, FNV-1a 64, hex).
std::string translation_cache_key(std::string_view source_text, std::string_view source_language,
                                  std::string_view target_language, std::string_view provider);

void to_json(nlohmann::json& j, const TranslationRecord& r);
void from_json(const nlohmann::json& j, TranslationRecord& r);

class TranslationProvider {
 public:
  TranslationProvider() = default;
  TranslationProvider(const TranslationProvider& other) : calls_(other.calls()) {}
  TranslationProvider& operator=(const TranslationProvider&) = delete;
  virtual ~TranslationProvider() = default;
  virtual std::string name() const = 0;
  virtual std::string translate(const std::string& text, const std::string& source_language,
                                const std::string& target_language) = 0;
  std::size_t calls() const { return calls_.load(); }

 protected:
  void count_call() { ++calls_; }

 private:
  std::atomic<std::size_t> calls_{0};
};

// Word-by-word substitution from a fixed bilingual dictionary. Unknown words pass through.
class DictionaryProvider : public TranslationProvider {
 public:
  using Dictionary = std::unordered_map<std::string, std::string>;

  DictionaryProvider() = default;
  void add(const std::string& source_language, const std::string& target_language,
           Dictionary dictionary);
  // JSON object {"src->tgt": {"word": "translation", ...}, ...}.
  static DictionaryProvider from_json(const nlohmann::json& j);
  static DictionaryProvider load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::string name() const override { return "dictionary"; }
  std::string translate(const std::string& text, const std::string& source_language,
                        const std::string& target_language) override;

  // Direct dictionary application, no call counting.
  std::string apply(const std::string& text, const std::string& source_language,
                    const std::string& target_language) const;

 private:
  std::map<std::pair<std::string, std::string>, Dictionary> tables_;
};

// Serves translations from a pre-built cache file; a miss is a provider error.
class ReplayProvider : public TranslationProvider {
 public:
  explicit ReplayProvider(const std::filesystem::path& cache_path, std::string replayed_provider);

  std::string name() const override { return replayed_provider_; }
  std::string translate(const std::string& text, const std::string& source_language,
                        const std::string& target_language) override;

 private:
  std::string replayed_provider_;
  std::unordered_map<std::string, std::string> by_key_;
};

struct HttpProviderConfig {
  // Base URL such as "http://127.0.0.1:5000".
  std::string base_url;
  std::string path = "/translate";
  // Environment variable holding the API key; the key is sent as "api_key" when set.
  std::string api_key_env = "XLCW_TRANSLATE_API_KEY";
  std::string provider_name = "http";
  std::chrono::seconds timeout{30};
};

// POSTs {"q", "source", "target"[, "api_key"]} and reads {"translatedText"}.
class HttpProvider : public TranslationProvider {
 public:
  explicit HttpProvider(HttpProviderConfig config);

  std::string name() const override { return config_.provider_name; }
  std::string translate(const std::string& text, const std::string& source_language,
                        const std::string& target_language) override;

 private:
  HttpProviderConfig config_;
};

// Append-only JSONL cache. Many concurrent readers, one writer at a time; appends to the
// file are serialized in-process by a mutex and across processes by an advisory lock.
class TranslationCache {
 public:
  TranslationCache() = default;  // memory only
  explicit TranslationCache(std::filesystem::path path);

  std::optional<std::string> lookup(const std::string& key) const;
  // Returns false (and leaves the existing record untouched) if the key is already present.
  bool insert(const TranslationRecord& record);
  std::size_t size() const;
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, TranslationRecord> records_;
};

struct TranslateOptions {
  std::size_t max_attempts = 3;
  std::chrono::milliseconds base_backoff{200};
  // Applied to the source text before it is sent to the provider; the cache is keyed on
  // the text actually sent. Identity by default.
  std::function<std::string(const std::string&)> preprocess;
  std::size_t workers = 1;
};

Split translate_corpus(const Split& split, const std::string& target_language,
                       TranslationProvider& provider, TranslationCache& cache,
                       const TranslateOptions& options = {});

struct AlignmentReport {
  bool ok = true;
  std::vector<std::string> diffs;
};

// Equal id and label sequences, position by position.
AlignmentReport verify_alignment(const Split& original, const Split& translated);

}  // namespace xlcw
