#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xlcw/corpus.hpp"
#include "xlcw/encoder.hpp"
#include "xlcw/nn.hpp"
#include "xlcw/rng.hpp"

#include <nlohmann/json_fwd.hpp>

namespace xlcw {

struct Hyperparams {
  std::size_t batch_size = 32;
  double learning_rate = 3e-5;
  std::size_t max_sequence_length = 128;
  // Zero epochs is accepted and makes training a no-op.
  std::size_t epochs = 3;
  int hidden_units = 256;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;

  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

void to_json(nlohmann::json& j, const Hyperparams& hp);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, Hyperparams& hp);

struct TensorBlob {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<double> data;

  bool operator==(const TensorBlob&) const = default;
};

struct LineageEntry {
  std::string stage;
  std::string manifest_id;
  std::uint64_t seed = 0;

  bool operator==(const LineageEntry&) const = default;
};

// One training example seen by a stage. Unlabeled entries come from adversarial target pools.
struct AuditEntry {
  std::string stage;
  std::string id;
  std::string language;
  Origin origin = Origin::original;
  bool labeled = true;

  bool operator==(const AuditEntry&) const = default;
};

struct Checkpoint {
  std::string backend_name;
  PoolingOptions pooling;
  std::vector<TensorBlob> encoder_weights;
  std::vector<TensorBlob> head_weights;
  std::vector<LineageEntry> lineage;
  Hyperparams hyperparams;
  std::vector<AuditEntry> audit;
  // JSON text of the manifest that produced the checkpoint, if any.
  std::string manifest_snapshot;

  bool operator==(const Checkpoint& other) const;
};

// Single-file container: magic line, header length, JSON header, raw float64 payload.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

std::vector<TensorBlob> snapshot(std::span<const Param* const> params);
void restore(std::span<Param* const> params, std::span<const TensorBlob> blobs);

// Softmax over two logits as (p_neg, p_pos).
std::pair<double, double> softmax2(double logit_neg, double logit_pos);

// Encoder + mean pooling + two-way feed-forward head.
class Classifier {
 public:
  struct Encoded {
    Vector pooled;
    std::unique_ptr<Activations> activations;
    std::vector<std::uint8_t> pool_mask;
  };

  Classifier(std::unique_ptr<EncoderBackend> encoder, int hidden_units, std::uint64_t head_seed,
             PoolingOptions pooling = {});
  static Classifier from_checkpoint(const Checkpoint& ckpt);

  EncoderBackend& encoder() { return *encoder_; }
  const EncoderBackend& encoder() const { return *encoder_; }
  Mlp& head() { return head_; }
  const Mlp& head() const { return head_; }
  const PoolingOptions& pooling() const { return pooling_; }

  Vector pooled(const TokenizedInput& input) const;
  // Forward pass that keeps activations for backprop_pooled.
  Encoded encode_for_training(const TokenizedInput& input) const;
  // Pushes d(loss)/d(pooled) back through mean pooling into the encoder.
  void backprop_pooled(const Encoded& encoded, const Vector& d_pooled);

  std::pair<double, double> head_forward(const Vector& pooled) const;
  std::pair<double, double> probabilities(const TokenizedInput& input) const;

  std::vector<Param*> parameters();
  std::vector<Param*> encoder_parameters() { return encoder_->trainable_parameters(); }
  std::vector<Param*> head_parameters() { return head_.parameters(); }

  // Weights-only checkpoint (empty lineage) for this model.
  Checkpoint to_checkpoint(const Hyperparams& hp) const;

 private:
  std::unique_ptr<EncoderBackend> encoder_;
  Mlp head_;
  PoolingOptions pooling_;
};

struct TrainLogEntry {
  std::string stage;
  std::string kind;  // "step" or "epoch"
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
};

// Collects the per-step and per-epoch training losses; optionally mirrors them as JSONL.
class TrainingLog {
 public:
  TrainingLog() = default;
  explicit TrainingLog(std::ostream* jsonl) : jsonl_(jsonl) {}

  void record(TrainLogEntry entry);
  void warn(std::string message);

  const std::vector<TrainLogEntry>& entries() const { return entries_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::vector<double> epoch_losses(std::string_view stage = {}) const;
  std::vector<double> step_losses(std::string_view stage = {}) const;

 private:
  std::ostream* jsonl_ = nullptr;
  std::vector<TrainLogEntry> entries_;
  std::vector<std::string> warnings_;
};

struct StageInfo {
  std::string stage = "source";
  std::string manifest_id;
  std::string manifest_snapshot;
};

// Tokenized training set with labels, in canonical (id-sorted) order.
struct TrainingBatchSource {
  std::vector<TokenizedInput> inputs;
  std::vector<int> labels;
  std::vector<const Example*> examples;
};
TrainingBatchSource prepare_training_set(std::span<const Example> examples,
                                         const EncoderBackend& encoder,
                                         std::size_t max_sequence_length);

// Mean cross-entropy over the batch. Gradients (scaled by 1/batch) are
// accumulated into encoder and head unless `accumulate` is false.
double task_objective(Classifier& model, std::span<const TokenizedInput* const> inputs,
                      std::span<const int> labels, bool accumulate = true);

// Per-epoch seeded shuffles of [0, n), then consecutive batches.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::size_t batches_per_epoch() const;
  // Batches of the next epoch.
  std::vector<std::vector<std::size_t>> next_epoch();

 private:
  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
};

Checkpoint train_supervised(const Split& train, const EncoderBackend& backend,
                            const Hyperparams& hp, const StageInfo& stage = {},
                            TrainingLog* log = nullptr, const PoolingOptions& pooling = {});

Checkpoint continue_training(const Checkpoint& start, std::span<const Example> shots,
                             const Hyperparams& hp, const StageInfo& stage = {"few_shot", {}, {}},
                             TrainingLog* log = nullptr);

struct Prediction {
  int label = kNegative;
  double p_pos = 0.0;

  bool operator==(const Prediction&) const = default;
};

// label = 1 iff p_pos > threshold; a tie goes to the negative class.
int decide(double p_pos, double threshold);

std::vector<Prediction> predict(const Checkpoint& ckpt, std::span<const Example> examples);

}  // namespace xlcw
