#include "xlcw/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlcw/errors.hpp"

namespace xlcw {

void Hyperparams::validate() const {
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be a finite non-negative number");
  }
  if (max_sequence_length < 3) throw ValidationError("max_sequence_length must be at least 3");
  if (hidden_units <= 0) throw ValidationError("hidden_units must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("threshold must lie strictly inside (0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
}

void to_json(nlohmann::json& j, const Hyperparams& hp) {
  j = nlohmann::json{{"batch_size", hp.batch_size},
                     {"learning_rate", hp.learning_rate},
                     {"max_sequence_length", hp.max_sequence_length},
                     {"epochs", hp.epochs},
                     {"hidden_units", hp.hidden_units},
                     {"threshold", hp.threshold},
                     {"seed", hp.seed},
                     {"weight_decay", hp.weight_decay}};
}

void from_json(const nlohmann::json& j, Hyperparams& hp) {
  for (const auto& [key, value] : j.items()) {
    if (key == "batch_size") hp.batch_size = value.get<std::size_t>();
    else if (key == "learning_rate") hp.learning_rate = value.get<double>();
    else if (key == "max_sequence_length") hp.max_sequence_length = value.get<std::size_t>();
    else if (key == "epochs") hp.epochs = value.get<std::size_t>();
    else if (key == "hidden_units") hp.hidden_units = value.get<int>();
    else if (key == "threshold") hp.threshold = value.get<double>();
    else if (key == "seed") hp.seed = value.get<std::uint64_t>();
    else if (key == "weight_decay") hp.weight_decay = value.get<double>();
    else throw ValidationError(fmt::format("unknown hyperparameter '{}'", key));
  }
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  return backend_name == other.backend_name &&
         pooling.include_special_tokens == other.pooling.include_special_tokens &&
         encoder_weights == other.encoder_weights && head_weights == other.head_weights &&
         lineage == other.lineage && hyperparams == other.hyperparams && audit == other.audit &&
         manifest_snapshot == other.manifest_snapshot;
}

std::vector<TensorBlob> snapshot(std::span<const Param* const> params) {
  std::vector<TensorBlob> blobs;
  blobs.reserve(params.size());
  for (const Param* p : params) {
    TensorBlob blob{p->name, p->value.rows(), p->value.cols(), {}};
    blob.data.assign(p->value.data(), p->value.data() + p->value.size());
    blobs.push_back(std::move(blob));
  }
  return blobs;
}

void restore(std::span<Param* const> params, std::span<const TensorBlob> blobs) {
  if (params.size() != blobs.size()) {
    throw BackendError(fmt::format("checkpoint holds {} tensors, model expects {}", blobs.size(),
                                   params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    const TensorBlob& blob = blobs[i];
    if (blob.name != p.name || blob.rows != p.value.rows() || blob.cols != p.value.cols()) {
      throw BackendError(fmt::format("checkpoint tensor '{}' [{}x{}] does not fit '{}' [{}x{}]",
                                     blob.name, blob.rows, blob.cols, p.name, p.value.rows(),
                                     p.value.cols()));
    }
    std::copy(blob.data.begin(), blob.data.end(), p.value.data());
    p.zero_grad();
  }
}

std::pair<double, double> softmax2(double logit_neg, double logit_pos) {
  const double peak = std::max(logit_neg, logit_pos);
  const double e_neg = std::exp(logit_neg - peak);
  const double e_pos = std::exp(logit_pos - peak);
  const double total = e_neg + e_pos;
  return {e_neg / total, e_pos / total};
}

Classifier::Classifier(std::unique_ptr<EncoderBackend> encoder, int hidden_units,
                       std::uint64_t head_seed, PoolingOptions pooling)
    : encoder_(std::move(encoder)),
      head_("head", encoder_->hidden_dim(), hidden_units, 2, head_seed),
      pooling_(pooling) {}

Classifier Classifier::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.head_weights.empty()) throw BackendError("checkpoint has no head weights");
  const auto hidden_units = static_cast<int>(ckpt.head_weights.front().cols);
  Classifier model(load_backend(ckpt.backend_name), hidden_units, 0, ckpt.pooling);
  restore(model.encoder_parameters(), ckpt.encoder_weights);
  restore(model.head_parameters(), ckpt.head_weights);
  return model;
}

Vector Classifier::pooled(const TokenizedInput& input) const {
  return mean_pool(encoder_->forward(input), pooling_mask(input.attention_mask, pooling_));
}

Classifier::Encoded Classifier::encode_for_training(const TokenizedInput& input) const {
  Encoded out;
  const Matrix hidden = encoder_->forward(input, &out.activations);
  out.pool_mask = pooling_mask(input.attention_mask, pooling_);
  out.pooled = mean_pool(hidden, out.pool_mask);
  return out;
}

void Classifier::backprop_pooled(const Encoded& encoded, const Vector& d_pooled) {
  const auto rows = static_cast<Eigen::Index>(encoded.pool_mask.size());
  const auto count = std::count(encoded.pool_mask.begin(), encoded.pool_mask.end(), 1);
  Matrix d_hidden = Matrix::Zero(rows, d_pooled.size());
  const Eigen::RowVectorXd share = d_pooled.transpose() / static_cast<double>(count);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (encoded.pool_mask[static_cast<std::size_t>(i)] != 0) d_hidden.row(i) = share;
  }
  encoder_->backward(*encoded.activations, d_hidden);
}

std::pair<double, double> Classifier::head_forward(const Vector& pooled) const {
  const Vector logits = head_.forward(pooled);
  return softmax2(logits(0), logits(1));
}

std::pair<double, double> Classifier::probabilities(const TokenizedInput& input) const {
  return head_forward(pooled(input));
}

std::vector<Param*> Classifier::parameters() {
  auto params = encoder_->trainable_parameters();
  for (Param* p : head_.parameters()) params.push_back(p);
  return params;
}

Checkpoint Classifier::to_checkpoint(const Hyperparams& hp) const {
  Checkpoint ckpt;
  ckpt.backend_name = encoder_->name();
  ckpt.pooling = pooling_;
  auto enc_params = const_cast<EncoderBackend&>(*encoder_).trainable_parameters();
  std::vector<const Param*> enc(enc_params.begin(), enc_params.end());
  ckpt.encoder_weights = snapshot(enc);
  const auto head = head_.parameters();
  ckpt.head_weights = snapshot(head);
  ckpt.hyperparams = hp;
  return ckpt;
}

void TrainingLog::record(TrainLogEntry entry) {
  if (jsonl_) {
    *jsonl_ << nlohmann::json{{"stage", entry.stage},
                              {"kind", entry.kind},
                              {"epoch", entry.epoch},
                              {"step", entry.step},
                              {"loss", entry.loss}}
                   .dump()
            << '\n';
  }
  entries_.push_back(std::move(entry));
}

void TrainingLog::warn(std::string message) {
  if (jsonl_) *jsonl_ << nlohmann::json{{"kind", "warning"}, {"message", message}}.dump() << '\n';
  warnings_.push_back(std::move(message));
}

std::vector<double> TrainingLog::epoch_losses(std::string_view stage) const {
  std::vector<double> out;
  for (const auto& e : entries_) {
    if (e.kind == "epoch" && (stage.empty() || e.stage == stage)) out.push_back(e.loss);
  }
  return out;
}

std::vector<double> TrainingLog::step_losses(std::string_view stage) const {
  std::vector<double> out;
  for (const auto& e : entries_) {
    if (e.kind == "step" && (stage.empty() || e.stage == stage)) out.push_back(e.loss);
  }
  return out;
}

TrainingBatchSource prepare_training_set(std::span<const Example> examples,
                                         const EncoderBackend& encoder,
                                         std::size_t max_sequence_length) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].id < examples[b].id;
  });
  TrainingBatchSource source;
  for (const auto i : order) {
    source.inputs.push_back(encoder.tokenize(examples[i].text, max_sequence_length));
    source.labels.push_back(examples[i].label);
    source.examples.push_back(&examples[i]);
  }
  return source;
}

double task_objective(Classifier& model, std::span<const TokenizedInput* const> inputs,
                      std::span<const int> labels, bool accumulate) {
  const double inv_batch = 1.0 / static_cast<double>(inputs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const int label = labels[i];
    if (label != kPositive && label != kNegative) {
      throw PreconditionError("task_objective: training example without a binary label");
    }
    Classifier::Encoded encoded;
    if (accumulate) {
      encoded = model.encode_for_training(*inputs[i]);
    } else {
      encoded.pooled = model.pooled(*inputs[i]);
    }
    Mlp::Cache cache;
    const Vector logits = model.head().forward(encoded.pooled, accumulate ? &cache : nullptr);
    const double peak = logits.maxCoeff();
    const double log_norm = peak + std::log((logits.array() - peak).exp().sum());
    total += log_norm - logits(label);
    if (!accumulate) continue;

    Vector d_logits = (logits.array() - log_norm).exp().matrix();
    d_logits(label) -= 1.0;
    d_logits *= inv_batch;
    const Vector d_pooled = model.head().backward(cache, d_logits);
    model.backprop_pooled(encoded, d_pooled);
  }
  return total * inv_batch;
}

BatchSchedule::BatchSchedule(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), rng_(seed) {}

std::size_t BatchSchedule::batches_per_epoch() const {
  return (n_ + batch_size_ - 1) / batch_size_;
}

std::vector<std::vector<std::size_t>> BatchSchedule::next_epoch() {
  std::vector<std::size_t> order(n_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng_.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n_; start += batch_size_) {
    const auto end = std::min(n_, start + batch_size_);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

void check_finite(double loss, const std::string& stage, std::size_t epoch, std::size_t step,
                  const TrainingBatchSource& data, const std::vector<std::size_t>& batch) {
  if (std::isfinite(loss)) return;
  std::vector<std::string> ids;
  for (const auto i : batch) ids.push_back(data.examples[i]->id);
  throw NumericError(fmt::format("non-finite loss {} in stage '{}' (epoch {}, step {}); batch ids: {}",
                                 loss, stage, epoch, step, fmt::join(ids, ", ")));
}

void fit(Classifier& model, const TrainingBatchSource& data, const Hyperparams& hp,
         const std::string& stage, TrainingLog* log) {
  if (hp.epochs == 0 || data.inputs.empty()) return;
  BatchSchedule schedule(data.inputs.size(), hp.batch_size, derive_seed(hp.seed, "batch-order"));
  AdamW optimizer(model.parameters(), AdamWConfig{.weight_decay = hp.weight_decay});
  const std::size_t total_steps = hp.epochs * schedule.batches_per_epoch();
  std::size_t step = 0;
  std::vector<const TokenizedInput*> inputs;
  std::vector<int> labels;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    double epoch_loss = 0.0;
    const auto batches = schedule.next_epoch();
    for (const auto& batch : batches) {
      inputs.clear();
      labels.clear();
      for (const auto i : batch) {
        inputs.push_back(&data.inputs[i]);
        labels.push_back(data.labels[i]);
      }
      optimizer.zero_grad();
      const double loss = task_objective(model, inputs, labels);
      check_finite(loss, stage, epoch, step, data, batch);
      optimizer.step(linear_decay(hp.learning_rate, step, total_steps));
      if (log) log->record({stage, "step", epoch, step, loss});
      epoch_loss += loss;
      ++step;
    }
    if (log) {
      log->record({stage, "epoch", epoch, step, epoch_loss / static_cast<double>(batches.size())});
    }
  }
}

void append_audit(Checkpoint& ckpt, const std::string& stage, std::span<const Example> examples,
                  bool labeled) {
  for (const auto& e : examples) {
    ckpt.audit.push_back({stage, e.id, e.language, e.origin, labeled});
  }
}

}  // namespace

Checkpoint train_supervised(const Split& train, const EncoderBackend& backend,
                            const Hyperparams& hp, const StageInfo& stage, TrainingLog* log,
                            const PoolingOptions& pooling) {
  hp.validate();
  if (train.examples.empty()) {
    throw PreconditionError(fmt::format("train_supervised: '{}' training split is empty",
                                        train.language));
  }
  validate_split(train);
  const auto positives = train.positives();
  if (log && (positives == 0 || positives == train.size())) {
    log->warn(fmt::format("training split '{}' contains a single class", train.language));
  }

  Classifier model(backend.clone(), hp.hidden_units, derive_seed(hp.seed, "head-init"), pooling);
  const auto data = prepare_training_set(train.examples, model.encoder(), hp.max_sequence_length);
  fit(model, data, hp, stage.stage, log);

  Checkpoint ckpt = model.to_checkpoint(hp);
  ckpt.lineage.push_back({stage.stage, stage.manifest_id, hp.seed});
  ckpt.manifest_snapshot = stage.manifest_snapshot;
  append_audit(ckpt, stage.stage, train.examples, true);
  return ckpt;
}

Checkpoint continue_training(const Checkpoint& start, std::span<const Example> shots,
                             const Hyperparams& hp, const StageInfo& stage, TrainingLog* log) {
  hp.validate();
  if (shots.empty()) throw PreconditionError("continue_training: no examples given");
  if (start.lineage.empty()) throw PreconditionError("continue_training: start has no lineage");
  for (const auto& entry : start.lineage) {
    if (entry.stage == stage.stage) {
      throw PreconditionError(
          fmt::format("continue_training: stage '{}' already in lineage", stage.stage));
    }
  }
  for (const auto& e : shots) validate_example(e);

  Classifier model = Classifier::from_checkpoint(start);
  const auto data = prepare_training_set(shots, model.encoder(), hp.max_sequence_length);
  fit(model, data, hp, stage.stage, log);

  Checkpoint ckpt = model.to_checkpoint(hp);
  ckpt.lineage = start.lineage;
  ckpt.lineage.push_back({stage.stage, stage.manifest_id, hp.seed});
  ckpt.audit = start.audit;
  append_audit(ckpt, stage.stage, shots, true);
  ckpt.manifest_snapshot =
      stage.manifest_snapshot.empty() ? start.manifest_snapshot : stage.manifest_snapshot;
  return ckpt;
}

int decide(double p_pos, double threshold) { return p_pos > threshold ? kPositive : kNegative; }

std::vector<Prediction> predict(const Checkpoint& ckpt, std::span<const Example> examples) {
  const Classifier model = Classifier::from_checkpoint(ckpt);
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    const auto input = model.encoder().tokenize(e.text, ckpt.hyperparams.max_sequence_length);
    const auto [p_neg, p_pos] = model.probabilities(input);
    (void)p_neg;
    out.push_back({decide(p_pos, ckpt.hyperparams.threshold), p_pos});
  }
  return out;
}

}  // namespace xlcw
