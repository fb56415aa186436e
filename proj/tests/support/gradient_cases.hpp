#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "xlcw/adversarial.hpp"
#include "xlcw/classifier.hpp"
#include "xlcw/reference_encoder.hpp"

namespace xlcw::testing {

// A small random batch on the reference encoder with a fresh head and discriminator.
struct GradientFixture {
  Classifier model;
  Discriminator discriminator;
  std::vector<TokenizedInput> source_inputs;
  std::vector<TokenizedInput> target_inputs;
  std::vector<int> labels;

  std::vector<const TokenizedInput*> source() const {
    std::vector<const TokenizedInput*> out;
    for (const auto& t : source_inputs) out.push_back(&t);
    return out;
  }
  std::vector<const TokenizedInput*> target() const {
    std::vector<const TokenizedInput*> out;
    for (const auto& t : target_inputs) out.push_back(&t);
    return out;
  }

  void zero_grad() {
    for (auto* p : model.parameters()) p->zero_grad();
    for (auto* p : discriminator.parameters()) p->zero_grad();
  }
};

inline std::string random_sentence(Rng& rng, std::size_t words) {
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += "w" + std::to_string(rng.below(400));
  }
  return s;
}

inline GradientFixture make_gradient_fixture(std::uint64_t seed) {
  Rng rng(seed);
  GradientFixture f{Classifier(std::make_unique<ReferenceEncoder>(), 16, derive_seed(seed, "head")),
                    Discriminator(32, 16, derive_seed(seed, "disc")),
                    {},
                    {},
                    {}};
  for (int i = 0; i < 3; ++i) {
    f.source_inputs.push_back(tokenize(random_sentence(rng, 3 + rng.below(5)), 12));
    f.labels.push_back(static_cast<int>(rng.below(2)));
  }
  for (int i = 0; i < 2; ++i) {
    f.target_inputs.push_back(tokenize(random_sentence(rng, 3 + rng.below(5)), 12));
  }
  return f;
}

inline double worst(const std::vector<GradientCheck>& checks) {
  double w = 0.0;
  for (const auto& c : checks) w = std::max(w, c.relative_error);
  return w;
}

inline std::vector<Param*> concat(std::vector<Param*> a, const std::vector<Param*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline bool all_zero(const std::vector<Param*>& params) {
  for (const auto* p : params) {
    if (!p->grad.isZero(0.0)) return false;
  }
  return true;
}

constexpr std::size_t kCoordsPerTensor = 12;

// Cross-entropy task loss: encoder and head gradients.
inline double task_gradient_error(std::uint64_t seed) {
  auto f = make_gradient_fixture(seed);
  const auto src = f.source();
  f.zero_grad();
  task_objective(f.model, src, f.labels);
  return worst(check_gradients(f.model.parameters(), [&] {
    return task_objective(f.model, src, f.labels, false);
  }, kCoordsPerTensor, seed));
}

// Alternating schedule, generator step: L_task + lambda * L_G on encoder and head.
// Returns -1 if the discriminator received gradients.
inline double generator_gradient_error(std::uint64_t seed, double lambda) {
  auto f = make_gradient_fixture(seed);
  const auto src = f.source();
  const auto trg = f.target();
  f.zero_grad();
  adversarial_objective(f.model, f.discriminator, src, f.labels, trg, lambda, AdvPhase::generator);
  if (!all_zero(f.discriminator.parameters())) return -1.0;
  return worst(check_gradients(f.model.parameters(), [&] {
    const auto l = adversarial_objective(f.model, f.discriminator, src, f.labels, trg, lambda,
                                         AdvPhase::generator, {.accumulate = false});
    return l.task + lambda * l.generator;
  }, kCoordsPerTensor, seed));
}

// Alternating schedule, discriminator step: L_D on the discriminator only.
inline double discriminator_gradient_error(std::uint64_t seed) {
  auto f = make_gradient_fixture(seed);
  const auto src = f.source();
  const auto trg = f.target();
  f.zero_grad();
  adversarial_objective(f.model, f.discriminator, src, f.labels, trg, 1.0,
                        AdvPhase::discriminator);
  if (!all_zero(f.model.parameters())) return -1.0;
  return worst(check_gradients(f.discriminator.parameters(), [&] {
    return adversarial_objective(f.model, f.discriminator, src, f.labels, trg, 1.0,
                                 AdvPhase::discriminator, {.accumulate = false})
        .discriminator;
  }, kCoordsPerTensor, seed));
}

// Gradient reversal: encoder sees L_task - lambda * L_D, head sees L_task,
// discriminator sees L_D.
inline double reversal_gradient_error(std::uint64_t seed, double lambda) {
  auto f = make_gradient_fixture(seed);
  const auto src = f.source();
  const auto trg = f.target();
  f.zero_grad();
  adversarial_objective(f.model, f.discriminator, src, f.labels, trg, lambda,
                        AdvPhase::reversal);
  auto losses = [&] {
    return adversarial_objective(f.model, f.discriminator, src, f.labels, trg, lambda,
                                 AdvPhase::reversal, {.accumulate = false});
  };
  double w = 0.0;
  w = std::max(w, worst(check_gradients(f.model.encoder_parameters(), [&] {
    const auto l = losses();
    return l.task - lambda * l.discriminator;
  }, kCoordsPerTensor, seed)));
  w = std::max(w, worst(check_gradients(f.model.head_parameters(),
                                        [&] { return losses().task; }, kCoordsPerTensor, seed)));
  w = std::max(w, worst(check_gradients(f.discriminator.parameters(),
                                        [&] { return losses().discriminator; }, kCoordsPerTensor,
                                        seed)));
  return w;
}

// Encoder gradient of the adversarial term alone under reversal, against
// -lambda times the finite-difference gradient of L_D without reversal.
inline double reversal_sign_error(std::uint64_t seed, double lambda) {
  auto f = make_gradient_fixture(seed);
  const auto src = f.source();
  const auto trg = f.target();
  f.zero_grad();
  adversarial_objective(f.model, f.discriminator, src, f.labels, trg, lambda, AdvPhase::reversal,
                        {.include_task = false});
  return worst(check_gradients(f.model.encoder_parameters(), [&] {
    return -lambda * adversarial_objective(f.model, f.discriminator, src, f.labels, trg, lambda,
                                           AdvPhase::discriminator, {.accumulate = false})
                         .discriminator;
  }, kCoordsPerTensor, seed));
}

}  // namespace xlcw::testing
