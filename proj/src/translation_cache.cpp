#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlcw/errors.hpp"
#include "xlcw/translation.hpp"

namespace xlcw {
namespace {

// Holds an exclusive advisory lock on an open file descriptor.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path)
      : fd_(::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644)) {
    if (fd_ < 0) throw ValidationError(fmt::format("cannot open cache '{}'", path.string()));
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw ValidationError(fmt::format("cannot lock cache '{}'", path.string()));
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

  void append(const std::string& line) {
    std::size_t done = 0;
    while (done < line.size()) {
      const auto n = ::write(fd_, line.data() + done, line.size() - done);
      if (n < 0) throw ValidationError("write to translation cache failed");
      done += static_cast<std::size_t>(n);
    }
  }

 private:
  int fd_;
};

}  // namespace

TranslationCache::TranslationCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    TranslationRecord r;
    try {
      r = nlohmann::json::parse(line).get<TranslationRecord>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(fmt::format("bad translation cache record: {}", e.what()), line_no);
    }
    records_.emplace(r.cache_key, std::move(r));
  }
}

std::optional<std::string> TranslationCache::lookup(const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  return it->second.translated_text;
}

bool TranslationCache::insert(const TranslationRecord& record) {
  if (record.translated_text.empty()) {
    throw ValidationError(fmt::format("refusing to cache an empty translation of '{}'",
                                      record.source_text));
  }
  const auto key = translation_cache_key(record.source_text, record.source_language,
                                         record.target_language, record.provider);
  if (!record.cache_key.empty() && record.cache_key != key) {
    throw ValidationError("translation record carries a stale cache key");
  }
  std::unique_lock lock(mutex_);
  if (records_.contains(key)) return false;
  TranslationRecord stored = record;
  stored.cache_key = key;
  if (path_) {
    FileLock file(*path_);
    file.append(nlohmann::json(stored).dump() + "\n");
  }
  records_.emplace(key, std::move(stored));
  return true;
}

std::size_t TranslationCache::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

}  // namespace xlcw
