#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "errors.hpp"

namespace rest::model {

std::string to_string(Optimizer opt) {
  return opt == Optimizer::kAdamW ? "adamw" : "sgd";
}

Optimizer parse_optimizer(std::string_view text) {
  if (text == "adamw" || text == "adam") return Optimizer::kAdamW;
  if (text == "sgd" || text == "gd") return Optimizer::kGradientDescent;
  throw ConfigError("unknown optimizer '" + std::string(text) + "' (expected adamw or sgd)");
}

void TrainSettings::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("training: learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("training: weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("training: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
}

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Tensor pad_frames(const Tensor& frames, std::size_t rows) {
  if (frames.rows() == rows) return frames;
  std::vector<double> data(frames.values().begin(), frames.values().end());
  data.resize(rows * frames.cols(), 0.0);
  return Tensor::matrix(rows, frames.cols(), std::move(data));
}

}  // namespace

BatchStats accumulate_batch(ModelParams& params, const EncoderConfig& config, const Vocabulary& vocab,
                            std::span<const TrainingItem* const> batch,
                            std::span<const MaskingPlan> plans, bool with_grad) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  const bool needs_plan = config.loss_mode != LossMode::kClsOnly;
  if (needs_plan && plans.size() != batch.size()) {
    throw ContractError("one masking plan per batch item is required");
  }
  std::size_t max_t = 0, max_w = 0;
  for (const auto* item : batch) {
    max_t = std::max(max_t, item->frames.rows());
    max_w = std::max(max_w, item->words.size());
  }
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  BatchStats stats;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainingItem& item = *batch[b];
    if (item.class_id >= config.num_seen_classes) {
      throw IndexError("training item '" + item.id + "' has class id " +
                       std::to_string(item.class_id) + " >= " +
                       std::to_string(config.num_seen_classes));
    }
    std::vector<std::size_t> words = item.words;
    words.resize(max_w, vocab.pad_id());
    const Tensor frames = pad_frames(item.frames, max_t);
    const Padding padding{item.frames.rows(), item.words.size()};
    const MaskingPlan* plan = needs_plan ? &plans[b] : nullptr;

    Tape tape(with_grad);
    const ForwardResult r = forward(params, config, vocab, tape, frames, words, plan, padding);
    const Tensor l_cls = loss_cls(tape, r.cls_logits, item.class_id);
    Tensor l_mtl;
    if (plan) l_mtl = loss_mtl(tape, r.mtl_logits, plan->original_tokens);
    const Tensor total = total_loss(tape, l_cls, l_mtl, config);
    if (!std::isfinite(total.item())) {
      throw NumericError("non-finite loss on item '" + item.id + "' (L_cls=" +
                         std::to_string(l_cls.item()) + ")");
    }
    stats.loss_cls += l_cls.item() * inv_batch;
    if (l_mtl.defined()) stats.loss_mtl += l_mtl.item() * inv_batch;
    stats.loss_total += total.item() * inv_batch;
    if (argmax(r.cls_logits.values()) == item.class_id) ++stats.correct;
    if (with_grad) tape.backward(tape.scale(total, inv_batch));
  }
  return stats;
}

OptimizerState::OptimizerState(const TrainSettings& settings, ModelParams& params)
    : settings_(settings) {
  settings_.validate();
  if (settings_.optimizer == Optimizer::kAdamW) {
    for (auto& [name, t] : params.named()) {
      m_.emplace_back(t->numel(), 0.0);
      v_.emplace_back(t->numel(), 0.0);
    }
  }
}

void OptimizerState::step(ModelParams& params, double lr) {
  ++steps_;
  auto named = params.named();
  const double wd = settings_.weight_decay;
  if (settings_.optimizer == Optimizer::kGradientDescent) {
    for (auto& [name, t] : named) {
      auto w = t->mutable_values();
      auto g = t->grad();
      const bool decay = t->rank() == 2;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (g[i] + (decay ? wd * w[i] : 0.0));
    }
    return;
  }
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t p = 0; p < named.size(); ++p) {
    Tensor& t = *named[p].second;
    auto w = t.mutable_values();
    auto g = t.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    // Decoupled decay on matrices only; biases and LN gains stay undecayed.
    const bool decay = t.rank() == 2;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + settings_.adam_eps);
      if (decay) w[i] -= lr * wd * w[i];
      w[i] -= lr * update;
    }
  }
}

TrainResult train(ModelParams params, const EncoderConfig& config, const Vocabulary& vocab,
                  std::span<const TrainingItem> dataset, const TrainSettings& settings,
                  const EpochCallback& on_epoch) {
  config.validate();
  settings.validate();
  if (dataset.empty()) throw InvalidArgument("train: empty dataset");
  for (const auto& item : dataset) {
    if (item.class_id >= config.num_seen_classes) {
      throw IndexError("train: item '" + item.id + "' has class id " +
                       std::to_string(item.class_id) + " >= " +
                       std::to_string(config.num_seen_classes));
    }
  }

  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    0x7261696eu};
  Rng rng(seq);
  OptimizerState optimizer(settings, params);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batches_per_epoch = (dataset.size() + settings.batch_size - 1) / settings.batch_size;
  const double total_steps = static_cast<double>(settings.epochs * batches_per_epoch);
  std::size_t step = 0;

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog entry;
    entry.epoch = epoch;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
      const std::size_t end = std::min(order.size(), start + settings.batch_size);
      std::vector<const TrainingItem*> batch;
      std::vector<MaskingPlan> plans;
      for (std::size_t i = start; i < end; ++i) {
        const TrainingItem& item = dataset[order[i]];
        batch.push_back(&item);
        if (config.loss_mode != LossMode::kClsOnly) {
          plans.push_back(make_masking_plan(item.words, config.mask_prob, rng));
        }
      }
      params.zero_grad();
      const BatchStats stats = accumulate_batch(params, config, vocab, batch, plans);
      const double weight = static_cast<double>(batch.size());
      entry.loss_cls += stats.loss_cls * weight;
      entry.loss_mtl += stats.loss_mtl * weight;
      entry.loss_total += stats.loss_total * weight;
      correct += stats.correct;

      double lr = settings.learning_rate;
      if (settings.cosine_schedule) {
        lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
      }
      optimizer.step(params, lr);
      ++step;
    }
    const double n = static_cast<double>(dataset.size());
    entry.loss_cls /= n;
    entry.loss_mtl /= n;
    entry.loss_total /= n;
    entry.train_top1 = static_cast<double>(correct) / n;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  params.zero_grad();
  result.params = std::move(params);
  return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log " + path.string());
  out.precision(10);
  out << "epoch,loss_cls,loss_mtl,loss_total,train_top1\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.loss_cls << ',' << e.loss_mtl << ',' << e.loss_total << ','
        << e.train_top1 << '\n';
  }
  if (!out) throw IoError("failed writing training log " + path.string());
}

}  // namespace rest::model
