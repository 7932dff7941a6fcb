#pragma once

// JSON documents exchanged between pipeline stages.
//
//   dataset          {feature_dim, labels, instances: [{id, class_id, frames}]}
//   representations  {dim, labels, instances: [{id, class_id, vector}]}
//   prototypes       {dim, entries: [{class_id, label, vector, count}]}
//   label embeddings {dim, labels: [{class_id, label, vector}]}

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "label_embeddings.hpp"

namespace rest::io {

using nlohmann::json;

struct Instance {
  std::string id;
  std::size_t class_id = 0;
  std::vector<std::vector<double>> frames;
  bool operator==(const Instance&) const = default;
};

struct Dataset {
  std::size_t feature_dim = 0;
  std::vector<std::string> labels;
  std::vector<Instance> instances;
  bool operator==(const Dataset&) const = default;
};

struct Representation {
  std::string id;
  std::size_t class_id = 0;
  std::vector<double> vector;
  bool operator==(const Representation&) const = default;
};

struct RepresentationSet {
  std::size_t dim = 0;
  std::vector<std::string> labels;
  std::vector<Representation> instances;
  bool operator==(const RepresentationSet&) const = default;
};

struct Prototype {
  int class_id = 0;
  std::string label;
  std::vector<double> vector;
  std::size_t count = 0;
  bool operator==(const Prototype&) const = default;
};

struct PrototypeSet {
  std::size_t dim = 0;
  std::vector<Prototype> entries;
  bool operator==(const PrototypeSet&) const = default;
};

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& doc);
void write_text(const std::filesystem::path& path, const std::string& text);

json to_json(const Dataset& d);
Dataset dataset_from_json(const json& j);
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

json to_json(const RepresentationSet& r);
RepresentationSet representations_from_json(const json& j);
RepresentationSet load_representations(const std::filesystem::path& path);

json to_json(const PrototypeSet& p);
PrototypeSet prototypes_from_json(const json& j);
PrototypeSet load_prototypes(const std::filesystem::path& path);

json embeddings_to_json(const std::vector<labels::LabelEmbedding>& e);
std::vector<labels::LabelEmbedding> embeddings_from_json(const json& j);
std::vector<labels::LabelEmbedding> load_embeddings(const std::filesystem::path& path);

}  // namespace rest::io
