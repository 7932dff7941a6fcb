#pragma once

// Compositional toy datasets: every unseen class is an equal-weight mixture
// of c seen anchors in both the label space and the visual space.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "formats.hpp"

namespace rest::synth {

struct SynthConfig {
  std::size_t num_seen = 20;
  std::size_t num_unseen = 8;
  std::size_t instances_per_class = 16;
  std::size_t frames = 6;
  std::size_t feature_dim = 16;
  std::size_t label_dim = 12;
  std::size_t composition_degree = 3;
  double noise_sigma = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

using VectorEntry = std::pair<std::string, std::vector<double>>;

struct SynthData {
  io::Dataset train;  // seen classes
  io::Dataset test;   // unseen classes, class_id indexes unseen_labels
  std::vector<std::string> seen_labels;
  std::vector<std::string> unseen_labels;
  std::vector<VectorEntry> seen_vectors;    // word vectors for seen-label tokens
  std::vector<VectorEntry> unseen_vectors;  // word vectors for tokens used by unseen labels
  // Ground truth.
  std::vector<std::vector<double>> seen_semantic;
  std::vector<std::vector<double>> seen_visual;
  std::vector<std::vector<std::size_t>> anchors;  // per unseen class, ascending
  std::vector<std::vector<double>> weights;       // mixing weights, aligned with anchors
  std::vector<std::vector<double>> unseen_semantic;
  std::vector<std::vector<double>> unseen_visual;
};

std::string seen_token(std::size_t index, std::size_t num_seen);

SynthData generate(const SynthConfig& config);

nlohmann::json config_to_json(const SynthConfig& config);
nlohmann::json truth_to_json(const SynthData& data);

std::string vectors_text(const std::vector<VectorEntry>& entries, std::size_t dim);
std::string labels_text(const std::vector<std::string>& labels);

// Writes train.json, test.json, seen_labels.txt, unseen_labels.txt,
// seen_vectors.txt, unseen_vectors.txt and truth.json into dir.
void write(const SynthData& data, const SynthConfig& config, const std::filesystem::path& dir);

}  // namespace rest::synth
