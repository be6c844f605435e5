#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kgan/kge.hpp"
#include "kgan/metrics.hpp"
#include "kgan/network.hpp"

namespace kgan::training {

enum class Selection {
  kBestTest,  ///< keep the epoch with the best test accuracy
  kHeldOut,   ///< carve a dev split out of train and select on it
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 50;
  std::uint64_t seed = 14;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int eval_every = 1;
  double noise_ratio = 0.0;
  double clip_norm = 5.0;  ///< 0 disables clipping
  Selection selection = Selection::kBestTest;
  double holdout_fraction = 0.1;
  bool record_wall_time = false;

  /// Throws ConfigError.
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(std::string_view text);
  bool operator==(const TrainConfig&) const = default;
};

/// Batch size used in the published setup for each benchmark.
int default_batch_size(corpus::DatasetName name);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  ///< summed over the epoch's instances
  double train_accuracy = 0.0;
  std::optional<evaluation::MetricReport> test;  ///< absent on non-eval epochs
  std::optional<evaluation::MetricReport> dev;
  double wall_seconds = 0.0;
};

struct RunRecord {
  std::string config_json;  ///< model and train config snapshot
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  evaluation::MetricReport best;

  /// One JSON object per line: a config line, one line per epoch, a final
  /// summary line. Wall time is written only when it was recorded.
  std::string to_jsonl() const;
};

struct TrainingData {
  std::vector<network::ModelInput> train;
  std::vector<network::ModelInput> test;
};

struct TrainResult {
  network::KganModel model;  ///< parameters of the selected epoch
  RunRecord record;
};

/// Optional per-epoch hook, e.g. for progress logging.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam over summed cross-entropy. Word embeddings train (except PAD); the
/// knowledge matrix inside `model` is never touched. Throws NumericError on a
/// non-finite loss or gradient.
TrainResult train(network::KganModel model, const TrainConfig& config, const TrainingData& data,
                  const EpochCallback& on_epoch = {});

/// Summed loss of `batch` under `model` without dropout, and (optionally) its
/// gradient left in the parameters' grad fields.
double batch_loss(network::KganModel& model, std::span<const network::ModelInput> batch,
                  bool with_gradient);

/// Predictions for every input, evaluation mode.
std::vector<int> predict_all(const network::KganModel& model,
                             std::span<const network::ModelInput> inputs);
evaluation::MetricReport evaluate(const network::KganModel& model,
                                  std::span<const network::ModelInput> inputs);

/// Replaces floor(ratio * rows) distinct rows, chosen with `seed`, by
/// uniform(-0.1, 0.1) vectors. Other rows are untouched.
kge::KnowledgeTable apply_noise_attack(const kge::KnowledgeTable& table, double ratio,
                                       std::uint64_t seed);

}  // namespace kgan::training
