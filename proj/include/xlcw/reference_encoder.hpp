#pragma once

#include <cstdint>

#include "xlcw/encoder.hpp"

namespace xlcw {

// Seed the reference weights are drawn from unless a backend name overrides it.
inline constexpr std::uint64_t kReferenceEncoderSeed = 20220523;

struct ReferenceEncoderConfig {
  int vocab_size = 512;
  int hidden_dim = 32;
  int layers = 2;
  int ffn_dim = 64;
  int max_positions = 128;
  std::uint64_t seed = kReferenceEncoderSeed;
};

// Small single-head self-attention encoder used for tests and synthetic studies.
//
// Each layer: Y = X + softmax(XWq (XWk)^T / sqrt(d), key mask) XWv Wo,
//             out = Y + relu(Y W1 + b1) W2 + b2.
// Input rows are token embedding + position embedding. No layer norm.
// Weights: embeddings ~ N(0, 1), positions ~ N(0, 0.1^2), projections ~ N(0, 1/fan_in),
// biases zero; drawn in declaration order from Rng(seed).
//
// Backend names: "reference" or "reference:seed=<n>".
class ReferenceEncoder final : public EncoderBackend {
 public:
  explicit ReferenceEncoder(ReferenceEncoderConfig config = {});

  static std::unique_ptr<EncoderBackend> from_name(const std::string& name);

  const std::string& name() const override { return name_; }
  int hidden_dim() const override { return config_.hidden_dim; }
  const ReferenceEncoderConfig& config() const { return config_; }
  const HashTokenizer& tokenizer() const { return tokenizer_; }

  TokenizedInput tokenize(std::string_view text, std::size_t max_length) const override;
  Matrix forward(const TokenizedInput& input,
                 std::unique_ptr<Activations>* saved = nullptr) const override;
  void backward(const Activations& saved, const Matrix& d_hidden) override;
  std::vector<Param*> trainable_parameters() override;
  std::unique_ptr<EncoderBackend> clone() const override;

 private:
  struct Layer {
    Param wq, wk, wv, wo, w1, b1, w2, b2;
  };

  ReferenceEncoderConfig config_;
  std::string name_;
  HashTokenizer tokenizer_;
  Param token_embedding_;
  Param position_embedding_;
  std::vector<Layer> layers_;
};

}  // namespace xlcw
