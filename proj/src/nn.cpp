#include "xlcw/nn.hpp"

#include <cmath>

#include "xlcw/errors.hpp"
#include "xlcw/rng.hpp"

namespace xlcw {
namespace {

Param glorot(std::string name, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(rows + cols));
  Param p{std::move(name), Matrix(rows, cols), Matrix::Zero(rows, cols)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) p.value(r, c) = rng.normal(0.0, stddev);
  }
  return p;
}

Param zeros(std::string name, Eigen::Index cols) {
  return Param{std::move(name), Matrix::Zero(1, cols), Matrix::Zero(1, cols), false};
}

}  // namespace

Mlp::Mlp(std::string prefix, int in_dim, int hidden_dim, int out_dim, std::uint64_t seed) {
  Rng rng(seed);
  w1_ = glorot(prefix + ".w1", in_dim, hidden_dim, rng);
  b1_ = zeros(prefix + ".b1", hidden_dim);
  w2_ = glorot(prefix + ".w2", hidden_dim, out_dim, rng);
  b2_ = zeros(prefix + ".b2", out_dim);
}

Vector Mlp::forward(const Vector& input, Cache* cache) const {
  if (input.size() != w1_.value.rows()) {
    throw PreconditionError("dimension mismatch: input width " + std::to_string(input.size()) +
                            ", expected " + std::to_string(w1_.value.rows()));
  }
  Vector pre = w1_.value.transpose() * input + b1_.value.row(0).transpose();
  Vector hidden = pre.cwiseMax(0.0);
  Vector logits = w2_.value.transpose() * hidden + b2_.value.row(0).transpose();
  if (cache) *cache = Cache{input, std::move(pre), std::move(hidden)};
  return logits;
}

Vector Mlp::backward(const Cache& cache, const Vector& d_logits, bool accumulate) {
  const Vector d_hidden = w2_.value * d_logits;
  const Vector d_pre = d_hidden.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
  if (accumulate) {
    w2_.grad.noalias() += cache.hidden * d_logits.transpose();
    b2_.grad.row(0) += d_logits.transpose();
    w1_.grad.noalias() += cache.input * d_pre.transpose();
    b1_.grad.row(0) += d_pre.transpose();
  }
  return w1_.value * d_pre;
}

AdamW::AdamW(std::vector<Param*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Param* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void AdamW::step(double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    if (learning_rate == 0.0) continue;
    const double decay = p.decay ? config_.weight_decay : 0.0;
    p.value.array() -= learning_rate * ((m_[i].array() / c1) /
                                            ((v_[i].array() / c2).sqrt() + config_.epsilon) +
                                        decay * p.value.array());
  }
}

double linear_decay(double base, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  return base * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

}  // namespace xlcw
