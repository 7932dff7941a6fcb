#pragma once

// Stage-level glue: each function consumes and produces the documents
// exchanged between pipeline stages.

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "encoder.hpp"
#include "formats.hpp"
#include "run_config.hpp"
#include "trainer.hpp"
#include "transfer.hpp"
#include "zeroshot_eval.hpp"

namespace rest::pipeline {

// Fills the data-dependent encoder fields (vocabulary, lengths, class count).
model::EncoderConfig encoder_config_for(const io::Dataset& data, const model::EncoderConfig& base,
                                        const model::Vocabulary& vocab, std::uint64_t seed);

std::vector<model::TrainingItem> training_items(const io::Dataset& data, const model::Vocabulary& vocab);

struct TrainedModel {
  model::Model model;
  std::vector<model::EpochLog> log;
};

TrainedModel train_model(const io::Dataset& data, const RunConfig& config, std::uint64_t seed,
                         const model::EpochCallback& on_epoch = {});

io::RepresentationSet represent_dataset(const model::Model& model, const io::Dataset& data);

// Top-1 of the classification head on a labelled dataset.
double head_accuracy(const model::Model& model, const io::Dataset& data);

// Seen embeddings reordered to match the prototype entries; label text must agree.
struct SeenContext {
  std::vector<labels::LabelEmbedding> embeddings;
  std::vector<std::vector<double>> prototypes;
  std::vector<int> class_ids;
};

SeenContext align_seen(const io::PrototypeSet& prototypes,
                       const std::vector<labels::LabelEmbedding>& seen_embeddings);

struct TransferRequest {
  transfer::TransferParams params;
  bool cv = false;
  std::vector<transfer::TransferParams> grid;  // empty = default grid
  const io::RepresentationSet* seen_reps = nullptr;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
};

struct TransferStage {
  transfer::TransferParams params;
  std::optional<transfer::CvResult> cv;
  SeenContext seen;
  std::vector<labels::LabelEmbedding> unseen;
  transfer::TransferOutcome outcome;
};

TransferStage run_transfer_stage(const io::PrototypeSet& seen_prototypes,
                                 const std::vector<labels::LabelEmbedding>& seen_embeddings,
                                 const std::vector<labels::LabelEmbedding>& unseen_embeddings,
                                 const TransferRequest& request);

// {params, objective, rows, prototypes, context, cv?}
nlohmann::json transfer_to_json(const TransferStage& stage);

// Reads back params and context from a transfer document.
struct TransferContext {
  transfer::TransferParams params;
  std::vector<labels::LabelEmbedding> seen_embeddings;
  std::vector<std::vector<double>> seen_prototypes;
  std::vector<labels::LabelEmbedding> unseen_embeddings;
};

TransferContext transfer_context_from_json(const nlohmann::json& doc);

// Grid file: {"theta": [...], "k": [...], "rho": [...]} (Cartesian product)
// or an array of {theta, k, rho} objects.
std::vector<transfer::TransferParams> grid_from_json(const nlohmann::json& doc);

eval::EvalReport evaluate(const io::RepresentationSet& test, const TransferContext& context,
                          const transfer::TransferParams& params, const eval::ProtocolOptions& options);

}  // namespace rest::pipeline
