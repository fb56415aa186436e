#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace xlcw {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Token sequence shaped [CLS] S [SEP] followed by optional padding.
struct TokenizedInput {
  std::vector<int> token_ids;
  std::vector<std::uint8_t> attention_mask;

  std::size_t length() const { return token_ids.size(); }
  std::size_t real_length() const;
};

// Right-pads with `pad_id` and mask zeros up to `length`.
TokenizedInput pad_to(const TokenizedInput& input, std::size_t length, int pad_id = 0);
std::vector<TokenizedInput> pad_batch(std::span<const TokenizedInput> batch, int pad_id = 0);

// Whitespace split, each word hashed (FNV-1a 64) into [first_word_id, vocab_size).
// Ids 0..3 are [PAD], [CLS], [SEP], [UNK]. Synthetic languages with disjoint
// vocabulary get their words by picking strings whose word_id falls in disjoint ranges.
class HashTokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;
  static constexpr int kFirstWordId = 4;

  explicit HashTokenizer(int vocab_size = 512);

  int vocab_size() const { return vocab_size_; }
  int word_id(std::string_view word) const;
  // Keeps the head of long inputs; the trailing [SEP] always survives.
  TokenizedInput tokenize(std::string_view text, std::size_t max_length) const;

 private:
  int vocab_size_;
};

// Tokenizes with the reference vocabulary (512 ids).
TokenizedInput tokenize(std::string_view text, std::size_t max_length);

struct PoolingOptions {
  // Whether [CLS] and the final real token ([SEP]) take part in the mean.
  bool include_special_tokens = true;
};

// Rows that enter the mean: the attention mask, minus the special positions when excluded.
std::vector<std::uint8_t> pooling_mask(std::span<const std::uint8_t> attention_mask,
                                       const PoolingOptions& options = {});

Vector mean_pool(const Matrix& hidden_states, std::span<const std::uint8_t> mask);

struct EncoderOutput {
  Matrix hidden_states;
  Vector pooled;
};

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  // Biases are exempt from weight decay.
  bool decay = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Saved forward activations, consumed by EncoderBackend::backward.
class Activations {
 public:
  virtual ~Activations() = default;
};

// A token-level encoder. Evaluation (forward) is const and thread-safe; training
// (backward, parameter updates) mutates the handle and stays on one thread.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual const std::string& name() const = 0;
  virtual int hidden_dim() const = 0;
  virtual TokenizedInput tokenize(std::string_view text, std::size_t max_length) const = 0;

  // Hidden states [length x hidden_dim]. Fills `saved` when a backward pass will follow.
  virtual Matrix forward(const TokenizedInput& input,
                         std::unique_ptr<Activations>* saved = nullptr) const = 0;
  // Accumulates parameter gradients for d(loss)/d(hidden states).
  virtual void backward(const Activations& saved, const Matrix& d_hidden) = 0;

  virtual std::vector<Param*> trainable_parameters() = 0;
  virtual std::unique_ptr<EncoderBackend> clone() const = 0;
};

// Inputs must share one padded length.
std::vector<EncoderOutput> encode(std::span<const TokenizedInput> batch,
                                  const EncoderBackend& backend,
                                  const PoolingOptions& pooling = {});

using BackendFactory = std::function<std::unique_ptr<EncoderBackend>(const std::string& name)>;

// Names starting with `prefix` are routed to `factory`. "reference" is pre-registered.
void register_backend(const std::string& prefix, BackendFactory factory);
std::unique_ptr<EncoderBackend> load_backend(const std::string& name);

}  // namespace xlcw
