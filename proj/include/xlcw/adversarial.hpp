#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xlcw/classifier.hpp"

namespace xlcw {

enum class AdvSchedule { alternating, gradient_reversal };

struct AdvConfig {
  // Defaults to min(|source train|, |target train|) when unset.
  std::optional<std::size_t> unlabeled_target_size;
  double adversarial_weight = 1.0;
  int discriminator_hidden = 256;
  AdvSchedule schedule = AdvSchedule::alternating;

  void validate() const;
  bool operator==(const AdvConfig&) const = default;
};

void to_json(nlohmann::json& j, const AdvConfig& adv);
void from_json(const nlohmann::json& j, AdvConfig& adv);

// Language discriminator over pooled sentence vectors: one hidden ReLU layer, sigmoid output.
class Discriminator {
 public:
  Discriminator(int in_dim, int hidden_units, std::uint64_t seed);

  double logit(const Vector& pooled, Mlp::Cache* cache = nullptr) const;
  // Probability that `pooled` comes from the source language.
  double forward(const Vector& pooled) const;

  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }
  std::vector<Param*> parameters() { return mlp_.parameters(); }

 private:
  Mlp mlp_;
};

double sigmoid(double z);

// Uniform draw without replacement; labels are replaced by kUnlabeled.
std::vector<Example> sample_unlabeled_target(const Split& split, std::size_t n,
                                             std::uint64_t seed);

enum class AdvPhase {
  // Discriminator loss L_D; gradients reach the discriminator only.
  discriminator,
  // L_task + lambda * L_G (flipped domain labels); gradients reach encoder and head only.
  generator,
  // L_task for encoder/head plus L_D for the discriminator, with the encoder
  // receiving -lambda * dL_D/d(encoder).
  reversal,
};

struct AdversarialLosses {
  double task = 0.0;
  double discriminator = 0.0;
  double generator = 0.0;
};

struct AdvObjectiveOptions {
  bool include_task = true;
  bool accumulate = true;
};

// Source examples carry domain label 1, target examples 0. Task loss is averaged over
// the source batch; domain losses over source and target together.
AdversarialLosses adversarial_objective(Classifier& model, Discriminator& discriminator,
                                        std::span<const TokenizedInput* const> source,
                                        std::span<const int> source_labels,
                                        std::span<const TokenizedInput* const> target,
                                        double lambda, AdvPhase phase,
                                        const AdvObjectiveOptions& options = {});

struct AdversarialRun {
  Checkpoint checkpoint;
  std::vector<double> discriminator_losses;
};

AdversarialRun train_adversarial_run(const Split& source_train,
                                     std::span<const Example> target_unlabeled,
                                     const EncoderBackend& backend, const Hyperparams& hp,
                                     const AdvConfig& adv,
                                     const StageInfo& stage = {"adversarial", {}, {}},
                                     TrainingLog* log = nullptr,
                                     const PoolingOptions& pooling = {});

Checkpoint train_adversarial(const Split& source_train, std::span<const Example> target_unlabeled,
                             const EncoderBackend& backend, const Hyperparams& hp,
                             const AdvConfig& adv,
                             const StageInfo& stage = {"adversarial", {}, {}},
                             TrainingLog* log = nullptr, const PoolingOptions& pooling = {});

}  // namespace xlcw
