#include "xlcw/reference_encoder.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "xlcw/errors.hpp"
#include "xlcw/rng.hpp"

namespace xlcw {
namespace {

struct LayerActivations {
  Matrix input, q, k, v, attn, mixed, y, pre_ffn, relu;
};

struct ReferenceActivations final : Activations {
  std::vector<int> token_ids;
  std::vector<std::uint8_t> key_mask;
  std::vector<LayerActivations> layers;
};

Param make_param(std::string name, Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Param p{std::move(name), Matrix(rows, cols), Matrix::Zero(rows, cols), stddev != 0.0};
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) p.value(r, c) = stddev == 0.0 ? 0.0 : rng.normal(0.0, stddev);
  }
  return p;
}

// Row-wise softmax over unmasked key columns; masked columns get exactly zero weight.
Matrix masked_softmax(const Matrix& scores, const std::vector<std::uint8_t>& key_mask) {
  Matrix out = Matrix::Zero(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (key_mask[static_cast<std::size_t>(j)] != 0) peak = std::max(peak, scores(i, j));
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (key_mask[static_cast<std::size_t>(j)] == 0) continue;
      out(i, j) = std::exp(scores(i, j) - peak);
      total += out(i, j);
    }
    out.row(i) /= total;
  }
  return out;
}

}  // namespace

ReferenceEncoder::ReferenceEncoder(ReferenceEncoderConfig config)
    : config_(config), tokenizer_(config.vocab_size) {
  name_ = config_.seed == kReferenceEncoderSeed ? std::string("reference")
                                                : fmt::format("reference:seed={}", config_.seed);
  const Eigen::Index d = config_.hidden_dim;
  const Eigen::Index f = config_.ffn_dim;
  Rng rng(config_.seed);
  token_embedding_ = make_param("token_embedding", config_.vocab_size, d, 1.0, rng);
  position_embedding_ = make_param("position_embedding", config_.max_positions, d, 0.1, rng);
  const double inv_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double inv_f = 1.0 / std::sqrt(static_cast<double>(f));
  for (int l = 0; l < config_.layers; ++l) {
    const auto prefix = fmt::format("layer{}.", l);
    Layer layer{
        make_param(prefix + "wq", d, d, inv_d, rng),  make_param(prefix + "wk", d, d, inv_d, rng),
        make_param(prefix + "wv", d, d, inv_d, rng),  make_param(prefix + "wo", d, d, inv_d, rng),
        make_param(prefix + "w1", d, f, inv_d, rng),  make_param(prefix + "b1", 1, f, 0.0, rng),
        make_param(prefix + "w2", f, d, inv_f, rng),  make_param(prefix + "b2", 1, d, 0.0, rng),
    };
    layers_.push_back(std::move(layer));
  }
}

std::unique_ptr<EncoderBackend> ReferenceEncoder::from_name(const std::string& name) {
  ReferenceEncoderConfig config;
  if (name != "reference") {
    constexpr std::string_view kSeedPrefix = "reference:seed=";
    if (!name.starts_with(kSeedPrefix)) {
      throw BackendError(fmt::format("unrecognized reference backend name '{}'", name));
    }
    const auto digits = std::string_view(name).substr(kSeedPrefix.size());
    const auto [ptr, ec] =
        std::from_chars(digits.data(), digits.data() + digits.size(), config.seed);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
      throw BackendError(fmt::format("bad seed in backend name '{}'", name));
    }
  }
  return std::make_unique<ReferenceEncoder>(config);
}

TokenizedInput ReferenceEncoder::tokenize(std::string_view text, std::size_t max_length) const {
  return tokenizer_.tokenize(text, std::min<std::size_t>(max_length, config_.max_positions));
}

Matrix ReferenceEncoder::forward(const TokenizedInput& input,
                                 std::unique_ptr<Activations>* saved) const {
  const auto length = static_cast<Eigen::Index>(input.length());
  if (length == 0 || length > config_.max_positions) {
    throw BackendError(fmt::format("reference encoder: sequence length {} outside [1, {}]",
                                   length, config_.max_positions));
  }
  const Eigen::Index d = config_.hidden_dim;
  Matrix x(length, d);
  for (Eigen::Index i = 0; i < length; ++i) {
    const int id = input.token_ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= config_.vocab_size) {
      throw BackendError(fmt::format("token id {} outside vocabulary", id));
    }
    x.row(i) = token_embedding_.value.row(id) + position_embedding_.value.row(i);
  }

  auto acts = saved ? std::make_unique<ReferenceActivations>() : nullptr;
  if (acts) {
    acts->token_ids = input.token_ids;
    acts->key_mask = input.attention_mask;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (const auto& layer : layers_) {
    LayerActivations a;
    a.input = x;
    a.q = x * layer.wq.value;
    a.k = x * layer.wk.value;
    a.v = x * layer.wv.value;
    a.attn = masked_softmax(a.q * a.k.transpose() * scale, input.attention_mask);
    a.mixed = a.attn * a.v;
    a.y = x + a.mixed * layer.wo.value;
    a.pre_ffn = (a.y * layer.w1.value).rowwise() + layer.b1.value.row(0);
    a.relu = a.pre_ffn.cwiseMax(0.0);
    x = a.y + Matrix((a.relu * layer.w2.value).rowwise() + layer.b2.value.row(0));
    if (acts) acts->layers.push_back(std::move(a));
  }
  if (saved) *saved = std::move(acts);
  return x;
}

void ReferenceEncoder::backward(const Activations& saved, const Matrix& d_hidden) {
  const auto& acts = dynamic_cast<const ReferenceActivations&>(saved);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.hidden_dim));
  Matrix dx = d_hidden;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    auto& layer = layers_[l];
    const auto& a = acts.layers[l];

    // out = y + relu(y W1 + b1) W2 + b2
    Matrix dy = dx;
    layer.w2.grad += a.relu.transpose() * dx;
    layer.b2.grad += dx.colwise().sum();
    Matrix d_pre = (dx * layer.w2.value.transpose()).cwiseProduct(
        (a.pre_ffn.array() > 0.0).cast<double>().matrix());
    layer.w1.grad += a.y.transpose() * d_pre;
    layer.b1.grad += d_pre.colwise().sum();
    dy += d_pre * layer.w1.value.transpose();

    // y = x + softmax(q k^T * scale) v Wo
    layer.wo.grad += a.mixed.transpose() * dy;
    const Matrix d_mixed = dy * layer.wo.value.transpose();
    const Matrix d_attn = d_mixed * a.v.transpose();
    const Matrix dv = a.attn.transpose() * d_mixed;
    const Eigen::VectorXd row_dot = (d_attn.cwiseProduct(a.attn)).rowwise().sum();
    const Matrix d_scores = a.attn.cwiseProduct(d_attn.colwise() - row_dot) * scale;
    const Matrix dq = d_scores * a.k;
    const Matrix dk = d_scores.transpose() * a.q;
    layer.wq.grad += a.input.transpose() * dq;
    layer.wk.grad += a.input.transpose() * dk;
    layer.wv.grad += a.input.transpose() * dv;
    dx = dy + dq * layer.wq.value.transpose() + dk * layer.wk.value.transpose() +
         dv * layer.wv.value.transpose();
  }
  for (Eigen::Index i = 0; i < dx.rows(); ++i) {
    token_embedding_.grad.row(acts.token_ids[static_cast<std::size_t>(i)]) += dx.row(i);
    position_embedding_.grad.row(i) += dx.row(i);
  }
}

std::vector<Param*> ReferenceEncoder::trainable_parameters() {
  std::vector<Param*> params{&token_embedding_, &position_embedding_};
  for (auto& layer : layers_) {
    for (Param* p : {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w1, &layer.b1,
                     &layer.w2, &layer.b2}) {
      params.push_back(p);
    }
  }
  return params;
}

std::unique_ptr<EncoderBackend> ReferenceEncoder::clone() const {
  return std::make_unique<ReferenceEncoder>(*this);
}

}  // namespace xlcw
