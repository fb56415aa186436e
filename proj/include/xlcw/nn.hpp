#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlcw/encoder.hpp"

namespace xlcw {

// Feed-forward block: in -> hidden (ReLU) -> out logits.
class Mlp {
 public:
  struct Cache {
    Vector input;
    Vector pre;
    Vector hidden;
  };

  Mlp() = default;
  Mlp(std::string prefix, int in_dim, int hidden_dim, int out_dim, std::uint64_t seed);

  int in_dim() const { return static_cast<int>(w1_.value.rows()); }
  int hidden_dim() const { return static_cast<int>(w1_.value.cols()); }
  int out_dim() const { return static_cast<int>(w2_.value.cols()); }

  Vector forward(const Vector& input, Cache* cache = nullptr) const;
  // Returns d(loss)/d(input). Parameter gradients are accumulated only when asked.
  Vector backward(const Cache& cache, const Vector& d_logits, bool accumulate = true);

  std::vector<Param*> parameters() { return {&w1_, &b1_, &w2_, &b2_}; }
  std::vector<const Param*> parameters() const { return {&w1_, &b1_, &w2_, &b2_}; }

 private:
  Param w1_, b1_, w2_, b2_;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
 public:
  AdamW(std::vector<Param*> params, AdamWConfig config = {});

  void zero_grad();
  void step(double learning_rate);
  std::size_t steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamWConfig config_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

// Linear decay from `base` at step 0 to zero at `total_steps`, no warmup.
double linear_decay(double base, std::size_t step, std::size_t total_steps);

}  // namespace xlcw
