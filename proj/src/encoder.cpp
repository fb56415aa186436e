#include "xlcw/encoder.hpp"

#include <algorithm>
#include <map>
#include <mutex>

#include <fmt/format.h>

#include "xlcw/errors.hpp"
#include "xlcw/reference_encoder.hpp"
#include "xlcw/rng.hpp"

namespace xlcw {
namespace {

bool is_space(unsigned char ch) {
  return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
}

struct Registry {
  std::mutex mutex;
  std::map<std::string, BackendFactory> factories;

  Registry() { factories.emplace("reference", &ReferenceEncoder::from_name); }
};

Registry& registry() {
  static Registry instance;
  return instance;
}

}  // namespace

std::size_t TokenizedInput::real_length() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

TokenizedInput pad_to(const TokenizedInput& input, std::size_t length, int pad_id) {
  if (length < input.length()) {
    throw PreconditionError(
        fmt::format("cannot pad a length-{} input down to {}", input.length(), length));
  }
  TokenizedInput out = input;
  out.token_ids.resize(length, pad_id);
  out.attention_mask.resize(length, 0);
  return out;
}

std::vector<TokenizedInput> pad_batch(std::span<const TokenizedInput> batch, int pad_id) {
  std::size_t longest = 0;
  for (const auto& item : batch) longest = std::max(longest, item.length());
  std::vector<TokenizedInput> out;
  out.reserve(batch.size());
  for (const auto& item : batch) out.push_back(pad_to(item, longest, pad_id));
  return out;
}

HashTokenizer::HashTokenizer(int vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size <= kFirstWordId) {
    throw PreconditionError("vocabulary must leave room beyond the special tokens");
  }
}

int HashTokenizer::word_id(std::string_view word) const {
  const auto buckets = static_cast<std::uint64_t>(vocab_size_ - kFirstWordId);
  return kFirstWordId + static_cast<int>(fnv1a64(word) % buckets);
}

TokenizedInput HashTokenizer::tokenize(std::string_view text, std::size_t max_length) const {
  if (max_length < 3) throw PreconditionError("max_length must be at least 3");
  TokenizedInput out;
  out.token_ids.push_back(kCls);
  const std::size_t word_budget = max_length - 2;
  std::size_t i = 0;
  while (i < text.size() && out.token_ids.size() - 1 < word_budget) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.token_ids.push_back(word_id(text.substr(start, i - start)));
  }
  out.token_ids.push_back(kSep);
  out.attention_mask.assign(out.token_ids.size(), 1);
  return out;
}

TokenizedInput tokenize(std::string_view text, std::size_t max_length) {
  static const HashTokenizer reference_tokenizer(512);
  return reference_tokenizer.tokenize(text, max_length);
}

std::vector<std::uint8_t> pooling_mask(std::span<const std::uint8_t> attention_mask,
                                       const PoolingOptions& options) {
  std::vector<std::uint8_t> mask(attention_mask.begin(), attention_mask.end());
  if (!options.include_special_tokens) {
    const auto real = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
    // Attention masks are a prefix of ones: [CLS] at 0, [SEP] at real - 1.
    if (real >= 1) mask[0] = 0;
    if (real >= 2) mask[real - 1] = 0;
  }
  return mask;
}

Vector mean_pool(const Matrix& hidden_states, std::span<const std::uint8_t> mask) {
  if (mask.size() != static_cast<std::size_t>(hidden_states.rows())) {
    throw PreconditionError(fmt::format("mask length {} does not match {} hidden rows",
                                        mask.size(), hidden_states.rows()));
  }
  Vector sum = Vector::Zero(hidden_states.cols());
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) continue;
    sum += hidden_states.row(static_cast<Eigen::Index>(i)).transpose();
    ++count;
  }
  if (count == 0) throw PreconditionError("mean_pool: mask selects no rows");
  return sum / static_cast<double>(count);
}

std::vector<EncoderOutput> encode(std::span<const TokenizedInput> batch,
                                  const EncoderBackend& backend, const PoolingOptions& pooling) {
  std::vector<EncoderOutput> out;
  if (batch.empty()) return out;
  const std::size_t length = batch.front().length();
  out.reserve(batch.size());
  for (const auto& item : batch) {
    if (item.length() != length || item.attention_mask.size() != length) {
      throw BackendError(fmt::format(
          "encode: batch inputs must share one padded length (expected {}, got {})", length,
          item.length()));
    }
    EncoderOutput result;
    result.hidden_states = backend.forward(item);
    if (result.hidden_states.cols() != backend.hidden_dim()) {
      throw BackendError("encode: backend returned hidden states of the wrong width");
    }
    result.pooled = mean_pool(result.hidden_states, pooling_mask(item.attention_mask, pooling));
    out.push_back(std::move(result));
  }
  return out;
}

void register_backend(const std::string& prefix, BackendFactory factory) {
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  reg.factories[prefix] = std::move(factory);
}

std::unique_ptr<EncoderBackend> load_backend(const std::string& name) {
  auto& reg = registry();
  BackendFactory factory;
  {
    std::lock_guard lock(reg.mutex);
    std::size_t best = 0;
    for (const auto& [prefix, candidate] : reg.factories) {
      const bool matches =
          name == prefix || (name.size() > prefix.size() && name.starts_with(prefix) &&
                             name[prefix.size()] == ':');
      if (matches && prefix.size() >= best) {
        best = prefix.size();
        factory = candidate;
      }
    }
  }
  if (!factory) {
    throw BackendError(fmt::format(
        "no encoder backend registered for '{}' (register one with register_backend)", name));
  }
  auto backend = factory(name);
  if (!backend) throw BackendError(fmt::format("backend factory for '{}' returned null", name));
  return backend;
}

}  // namespace xlcw
