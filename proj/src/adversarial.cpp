#include "xlcw/adversarial.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlcw/errors.hpp"
#include "xlcw/rng.hpp"

namespace xlcw {
namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Binary cross-entropy on a logit: -y log s(z) - (1 - y) log(1 - s(z)).
double bce(double z, double y) { return softplus(z) - y * z; }

// Cycles through a seeded permutation of the unlabeled pool, reshuffling on wrap.
class TargetStream {
 public:
  TargetStream(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(std::span(order_));
  }

  std::size_t next() {
    if (cursor_ == order_.size()) {
      rng_.shuffle(std::span(order_));
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t cursor_ = 0;
};

}  // namespace

void AdvConfig::validate() const {
  if (unlabeled_target_size && *unlabeled_target_size < 1) {
    throw ValidationError("unlabeled_target_size must be at least 1");
  }
  if (!(adversarial_weight >= 0.0) || !std::isfinite(adversarial_weight)) {
    throw ValidationError("adversarial_weight must be a finite non-negative number");
  }
  if (discriminator_hidden <= 0) throw ValidationError("discriminator_hidden must be positive");
}

void to_json(nlohmann::json& j, const AdvConfig& adv) {
  j = nlohmann::json{
      {"adversarial_weight", adv.adversarial_weight},
      {"discriminator_hidden", adv.discriminator_hidden},
      {"schedule",
       adv.schedule == AdvSchedule::alternating ? "alternating" : "gradient_reversal"}};
  j["unlabeled_target_size"] =
      adv.unlabeled_target_size ? nlohmann::json(*adv.unlabeled_target_size) : nlohmann::json();
}

void from_json(const nlohmann::json& j, AdvConfig& adv) {
  for (const auto& [key, value] : j.items()) {
    if (key == "unlabeled_target_size") {
      if (value.is_null()) adv.unlabeled_target_size.reset();
      else adv.unlabeled_target_size = value.get<std::size_t>();
    } else if (key == "adversarial_weight" || key == "lambda") {
      adv.adversarial_weight = value.get<double>();
    } else if (key == "discriminator_hidden") {
      adv.discriminator_hidden = value.get<int>();
    } else if (key == "schedule") {
      const auto s = value.get<std::string>();
      if (s == "alternating") adv.schedule = AdvSchedule::alternating;
      else if (s == "gradient_reversal") adv.schedule = AdvSchedule::gradient_reversal;
      else throw ValidationError(fmt::format("unknown adversarial schedule '{}'", s));
    } else {
      throw ValidationError(fmt::format("unknown adversarial setting '{}'", key));
    }
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Discriminator::Discriminator(int in_dim, int hidden_units, std::uint64_t seed)
    : mlp_("discriminator", in_dim, hidden_units, 1, seed) {}

double Discriminator::logit(const Vector& pooled, Mlp::Cache* cache) const {
  return mlp_.forward(pooled, cache)(0);
}

double Discriminator::forward(const Vector& pooled) const { return sigmoid(logit(pooled)); }

std::vector<Example> sample_unlabeled_target(const Split& split, std::size_t n,
                                             std::uint64_t seed) {
  if (n == 0) throw PreconditionError("sample_unlabeled_target: n must be at least 1");
  if (n > split.size()) {
    throw CapacityError(fmt::format("sample_unlabeled_target: '{}' has {} examples, requested {}",
                                    split.language, split.size(), n));
  }
  std::vector<std::size_t> order(split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Example e = split.examples[order[i]];
    e.label = kUnlabeled;
    out.push_back(std::move(e));
  }
  return out;
}

AdversarialLosses adversarial_objective(Classifier& model, Discriminator& discriminator,
                                        std::span<const TokenizedInput* const> source,
                                        std::span<const int> source_labels,
                                        std::span<const TokenizedInput* const> target,
                                        double lambda, AdvPhase phase,
                                        const AdvObjectiveOptions& options) {
  AdversarialLosses losses;
  const std::size_t n_domain = source.size() + target.size();
  const double inv_domain = n_domain ? 1.0 / static_cast<double>(n_domain) : 0.0;
  auto domain_input = [&](std::size_t i) { return i < source.size() ? source[i] : target[i - source.size()]; };
  auto domain_label = [&](std::size_t i) { return i < source.size() ? 1.0 : 0.0; };

  if (phase == AdvPhase::discriminator) {
    for (std::size_t i = 0; i < n_domain; ++i) {
      Mlp::Cache cache;
      const double z = discriminator.logit(model.pooled(*domain_input(i)), &cache);
      const double y = domain_label(i);
      losses.discriminator += bce(z, y) * inv_domain;
      if (options.accumulate) {
        Vector dz(1);
        dz(0) = (sigmoid(z) - y) * inv_domain;
        discriminator.mlp().backward(cache, dz);
      }
    }
    return losses;
  }

  if (phase == AdvPhase::generator && lambda == 0.0) {
    if (options.include_task) {
      losses.task = task_objective(model, source, source_labels, options.accumulate);
    }
    return losses;
  }

  std::vector<Classifier::Encoded> encoded(n_domain);
  std::vector<Vector> d_pooled(n_domain);
  for (std::size_t i = 0; i < n_domain; ++i) {
    encoded[i] = model.encode_for_training(*domain_input(i));
    d_pooled[i] = Vector::Zero(encoded[i].pooled.size());
  }

  if (options.include_task) {
    const double inv_source = 1.0 / static_cast<double>(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
      const int label = source_labels[i];
      if (label != kPositive && label != kNegative) {
        throw PreconditionError("adversarial_objective: source example without a binary label");
      }
      Mlp::Cache cache;
      const Vector logits = model.head().forward(encoded[i].pooled, &cache);
      const double peak = logits.maxCoeff();
      const double log_norm = peak + std::log((logits.array() - peak).exp().sum());
      losses.task += (log_norm - logits(label)) * inv_source;
      if (!options.accumulate) continue;
      Vector d_logits = (logits.array() - log_norm).exp().matrix();
      d_logits(label) -= 1.0;
      d_logits *= inv_source;
      d_pooled[i] += model.head().backward(cache, d_logits);
    }
  }

  for (std::size_t i = 0; i < n_domain; ++i) {
    Mlp::Cache cache;
    const double z = discriminator.logit(encoded[i].pooled, &cache);
    const double y = domain_label(i);
    Vector dz(1);
    if (phase == AdvPhase::generator) {
      losses.generator += bce(z, 1.0 - y) * inv_domain;
      dz(0) = lambda * (sigmoid(z) - (1.0 - y)) * inv_domain;
      if (options.accumulate) d_pooled[i] += discriminator.mlp().backward(cache, dz, false);
    } else {
      losses.discriminator += bce(z, y) * inv_domain;
      dz(0) = (sigmoid(z) - y) * inv_domain;
      if (options.accumulate) d_pooled[i] -= lambda * discriminator.mlp().backward(cache, dz, true);
    }
  }

  if (options.accumulate) {
    for (std::size_t i = 0; i < n_domain; ++i) model.backprop_pooled(encoded[i], d_pooled[i]);
  }
  return losses;
}

AdversarialRun train_adversarial_run(const Split& source_train,
                                     std::span<const Example> target_unlabeled,
                                     const EncoderBackend& backend, const Hyperparams& hp,
                                     const AdvConfig& adv, const StageInfo& stage,
                                     TrainingLog* log, const PoolingOptions& pooling) {
  hp.validate();
  adv.validate();
  if (source_train.examples.empty()) {
    throw PreconditionError("train_adversarial: source training split is empty");
  }
  if (target_unlabeled.empty()) throw PreconditionError("train_adversarial: empty unlabeled pool");
  validate_split(source_train);
  for (const auto& e : target_unlabeled) {
    if (e.language == source_train.language) {
      throw PreconditionError(fmt::format(
          "train_adversarial: unlabeled example '{}' is in the source language", e.id));
    }
  }

  Classifier model(backend.clone(), hp.hidden_units, derive_seed(hp.seed, "head-init"), pooling);
  Discriminator discriminator(model.encoder().hidden_dim(), adv.discriminator_hidden,
                              derive_seed(hp.seed, "discriminator-init"));
  const auto source = prepare_training_set(source_train.examples, model.encoder(),
                                           hp.max_sequence_length);
  const auto target = prepare_training_set(target_unlabeled, model.encoder(),
                                           hp.max_sequence_length);

  AdversarialRun run;
  if (hp.epochs > 0) {
    BatchSchedule schedule(source.inputs.size(), hp.batch_size,
                           derive_seed(hp.seed, "batch-order"));
    TargetStream target_stream(target.inputs.size(), derive_seed(hp.seed, "adversarial-target"));
    AdamW model_opt(model.parameters(), AdamWConfig{.weight_decay = hp.weight_decay});
    AdamW disc_opt(discriminator.parameters(), AdamWConfig{.weight_decay = hp.weight_decay});
    const std::size_t total_steps = hp.epochs * schedule.batches_per_epoch();
    const double lambda = adv.adversarial_weight;
    std::size_t step = 0;
    std::vector<const TokenizedInput*> src_inputs, tgt_inputs;
    std::vector<int> labels;
    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
      double epoch_loss = 0.0;
      const auto batches = schedule.next_epoch();
      for (const auto& batch : batches) {
        src_inputs.clear();
        tgt_inputs.clear();
        labels.clear();
        for (const auto i : batch) {
          src_inputs.push_back(&source.inputs[i]);
          labels.push_back(source.labels[i]);
          tgt_inputs.push_back(&target.inputs[target_stream.next()]);
        }
        const double lr = linear_decay(hp.learning_rate, step, total_steps);
        double objective = 0.0;
        if (adv.schedule == AdvSchedule::alternating) {
          disc_opt.zero_grad();
          const auto d = adversarial_objective(model, discriminator, src_inputs, labels,
                                               tgt_inputs, lambda, AdvPhase::discriminator);
          disc_opt.step(lr);
          model_opt.zero_grad();
          const auto g = adversarial_objective(model, discriminator, src_inputs, labels,
                                               tgt_inputs, lambda, AdvPhase::generator);
          model_opt.step(lr);
          objective = lambda == 0.0 ? g.task : g.task + lambda * g.generator;
          run.discriminator_losses.push_back(d.discriminator);
        } else {
          model_opt.zero_grad();
          disc_opt.zero_grad();
          const auto r = adversarial_objective(model, discriminator, src_inputs, labels,
                                               tgt_inputs, lambda, AdvPhase::reversal);
          model_opt.step(lr);
          disc_opt.step(lr);
          objective = r.task;
          run.discriminator_losses.push_back(r.discriminator);
        }
        if (!std::isfinite(objective) || !std::isfinite(run.discriminator_losses.back())) {
          throw NumericError(fmt::format(
              "non-finite adversarial loss in stage '{}' (epoch {}, step {})", stage.stage, epoch,
              step));
        }
        if (log) {
          log->record({stage.stage, "step", epoch, step, objective});
          log->record({stage.stage, "discriminator", epoch, step,
                       run.discriminator_losses.back()});
        }
        epoch_loss += objective;
        ++step;
      }
      if (log) {
        log->record({stage.stage, "epoch", epoch, step,
                     epoch_loss / static_cast<double>(batches.size())});
      }
    }
  }

  run.checkpoint = model.to_checkpoint(hp);
  run.checkpoint.lineage.push_back({stage.stage, stage.manifest_id, hp.seed});
  run.checkpoint.manifest_snapshot = stage.manifest_snapshot;
  for (const auto& e : source_train.examples) {
    run.checkpoint.audit.push_back({stage.stage, e.id, e.language, e.origin, true});
  }
  for (const auto& e : target_unlabeled) {
    run.checkpoint.audit.push_back({stage.stage, e.id, e.language, e.origin, false});
  }
  return run;
}

Checkpoint train_adversarial(const Split& source_train, std::span<const Example> target_unlabeled,
                             const EncoderBackend& backend, const Hyperparams& hp,
                             const AdvConfig& adv, const StageInfo& stage, TrainingLog* log,
                             const PoolingOptions& pooling) {
  return train_adversarial_run(source_train, target_unlabeled, backend, hp, adv, stage, log,
                               pooling)
      .checkpoint;
}

}  // namespace xlcw
