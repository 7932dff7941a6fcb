#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "encoder.hpp"

namespace rest::model {

enum class Optimizer { kGradientDescent, kAdamW };

std::string to_string(Optimizer opt);
Optimizer parse_optimizer(std::string_view text);

struct TrainSettings {
  Optimizer optimizer = Optimizer::kAdamW;
  double learning_rate = 2e-3;
  double weight_decay = 0.01;
  std::size_t epochs = 60;
  std::size_t batch_size = 16;
  bool cosine_schedule = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct TrainingItem {
  std::string id;
  std::size_t class_id = 0;
  Tensor frames;                    // [T×p]
  std::vector<std::size_t> words;  // label token ids
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_cls = 0.0;
  double loss_mtl = 0.0;
  double loss_total = 0.0;
  double train_top1 = 0.0;
};

struct BatchStats {
  double loss_cls = 0.0;
  double loss_mtl = 0.0;
  double loss_total = 0.0;
  std::size_t correct = 0;
};

// Forward + backward over one batch with the given plans (one per item,
// ignored in CLS_ONLY mode). Items are padded to the batch maxima and the
// padding is masked out of attention. Gradients of the batch-mean total
// loss are accumulated into params.
BatchStats accumulate_batch(ModelParams& params, const EncoderConfig& config, const Vocabulary& vocab,
                            std::span<const TrainingItem* const> batch,
                            std::span<const MaskingPlan> plans, bool with_grad = true);

// Single optimizer state over a parameter set.
class OptimizerState {
 public:
  OptimizerState(const TrainSettings& settings, ModelParams& params);
  void step(ModelParams& params, double learning_rate);

 private:
  TrainSettings settings_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Deterministic given config.seed: shuffling and masking draw from one
// stream derived from the seed.
TrainResult train(ModelParams params, const EncoderConfig& config, const Vocabulary& vocab,
                  std::span<const TrainingItem> dataset, const TrainSettings& settings,
                  const EpochCallback& on_epoch = {});

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace rest::model
