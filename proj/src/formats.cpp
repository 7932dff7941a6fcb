#include "formats.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace rest::io {

namespace {

const json& field(const json& j, const char* key, const char* where) {
  if (!j.is_object()) throw FormatError(std::string(where) + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string(where) + ": missing field '" + key + "'");
  return *it;
}

std::size_t get_size(const json& j, const char* key, const char* where) {
  const json& v = field(j, key, where);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw FormatError(std::string(where) + ": '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string get_string(const json& j, const char* key, const char* where) {
  const json& v = field(j, key, where);
  if (!v.is_string()) throw FormatError(std::string(where) + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<double> get_vector(const json& v, std::size_t expected, const std::string& where) {
  if (!v.is_array()) throw FormatError(where + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw FormatError(where + ": non-numeric entry");
    out.push_back(x.get<double>());
    if (!std::isfinite(out.back())) throw FormatError(where + ": non-finite entry");
  }
  if (expected != 0 && out.size() != expected) {
    throw FormatError(where + ": vector has " + std::to_string(out.size()) + " entries, expected " +
                      std::to_string(expected));
  }
  return out;
}

std::vector<std::string> get_labels(const json& j, const char* where) {
  const json& v = field(j, "labels", where);
  if (!v.is_array()) throw FormatError(std::string(where) + ": 'labels' must be an array");
  std::vector<std::string> out;
  for (const auto& l : v) {
    if (!l.is_string()) throw FormatError(std::string(where) + ": labels must be strings");
    out.push_back(l.get<std::string>());
  }
  return out;
}

}  // namespace

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const json& doc) {
  write_text(path, doc.dump(1) + "\n");
}

// ---------------------------------------------------------------------------

json to_json(const Dataset& d) {
  json instances = json::array();
  for (const auto& inst : d.instances) {
    instances.push_back({{"id", inst.id}, {"class_id", inst.class_id}, {"frames", inst.frames}});
  }
  return {{"feature_dim", d.feature_dim}, {"labels", d.labels}, {"instances", std::move(instances)}};
}

Dataset dataset_from_json(const json& j) {
  constexpr const char* where = "dataset";
  Dataset d;
  d.feature_dim = get_size(j, "feature_dim", where);
  if (d.feature_dim == 0) throw FormatError("dataset: feature_dim must be positive");
  d.labels = get_labels(j, where);
  if (d.labels.empty()) throw FormatError("dataset: no labels");
  const json& instances = field(j, "instances", where);
  if (!instances.is_array() || instances.empty()) {
    throw FormatError("dataset: 'instances' must be a non-empty array");
  }
  for (const auto& ij : instances) {
    Instance inst;
    inst.id = get_string(ij, "id", "dataset instance");
    const std::string here = "dataset instance '" + inst.id + "'";
    inst.class_id = get_size(ij, "class_id", here.c_str());
    if (inst.class_id >= d.labels.size()) {
      throw FormatError(here + ": class_id " + std::to_string(inst.class_id) + " >= " +
                        std::to_string(d.labels.size()) + " labels");
    }
    const json& frames = field(ij, "frames", here.c_str());
    if (!frames.is_array() || frames.empty()) throw FormatError(here + ": no frames");
    for (const auto& f : frames) inst.frames.push_back(get_vector(f, d.feature_dim, here));
    d.instances.push_back(std::move(inst));
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_json(read_json(path)); }

void save_dataset(const Dataset& d, const std::filesystem::path& path) { write_json(path, to_json(d)); }

// ---------------------------------------------------------------------------

json to_json(const RepresentationSet& r) {
  json instances = json::array();
  for (const auto& x : r.instances) {
    instances.push_back({{"id", x.id}, {"class_id", x.class_id}, {"vector", x.vector}});
  }
  return {{"dim", r.dim}, {"labels", r.labels}, {"instances", std::move(instances)}};
}

RepresentationSet representations_from_json(const json& j) {
  constexpr const char* where = "representations";
  RepresentationSet r;
  r.dim = get_size(j, "dim", where);
  r.labels = get_labels(j, where);
  const json& instances = field(j, "instances", where);
  if (!instances.is_array() || instances.empty()) {
    throw FormatError("representations: 'instances' must be a non-empty array");
  }
  for (const auto& ij : instances) {
    Representation x;
    x.id = get_string(ij, "id", where);
    x.class_id = get_size(ij, "class_id", where);
    if (x.class_id >= r.labels.size()) throw FormatError("representations: class_id out of range");
    x.vector = get_vector(field(ij, "vector", where), r.dim, "representation '" + x.id + "'");
    r.instances.push_back(std::move(x));
  }
  return r;
}

RepresentationSet load_representations(const std::filesystem::path& path) {
  return representations_from_json(read_json(path));
}

// ---------------------------------------------------------------------------

json to_json(const PrototypeSet& p) {
  json entries = json::array();
  for (const auto& e : p.entries) {
    entries.push_back(
        {{"class_id", e.class_id}, {"label", e.label}, {"vector", e.vector}, {"count", e.count}});
  }
  return {{"dim", p.dim}, {"entries", std::move(entries)}};
}

PrototypeSet prototypes_from_json(const json& j) {
  constexpr const char* where = "prototypes";
  PrototypeSet p;
  p.dim = get_size(j, "dim", where);
  const json& entries = field(j, "entries", where);
  if (!entries.is_array() || entries.empty()) throw FormatError("prototypes: no entries");
  for (const auto& ej : entries) {
    Prototype e;
    e.class_id = static_cast<int>(get_size(ej, "class_id", where));
    e.label = get_string(ej, "label", where);
    e.vector = get_vector(field(ej, "vector", where), p.dim, "prototype '" + e.label + "'");
    e.count = get_size(ej, "count", where);
    p.entries.push_back(std::move(e));
  }
  return p;
}

PrototypeSet load_prototypes(const std::filesystem::path& path) {
  json j = read_json(path);
  // A transfer result carries its composite prototypes under "prototypes".
  if (j.is_object() && j.contains("prototypes") && !j.contains("entries")) {
    return prototypes_from_json(j["prototypes"]);
  }
  return prototypes_from_json(j);
}

// ---------------------------------------------------------------------------

json embeddings_to_json(const std::vector<labels::LabelEmbedding>& e) {
  json items = json::array();
  std::size_t dim = e.empty() ? 0 : e.front().vector.size();
  for (const auto& x : e) {
    items.push_back({{"class_id", x.class_id}, {"label", x.label_text}, {"vector", x.vector}});
  }
  return {{"dim", dim}, {"labels", std::move(items)}};
}

std::vector<labels::LabelEmbedding> embeddings_from_json(const json& j) {
  constexpr const char* where = "label embeddings";
  const std::size_t dim = get_size(j, "dim", where);
  const json& items = field(j, "labels", where);
  if (!items.is_array() || items.empty()) throw FormatError("label embeddings: no labels");
  std::vector<labels::LabelEmbedding> out;
  for (const auto& ij : items) {
    labels::LabelEmbedding e;
    e.class_id = static_cast<int>(get_size(ij, "class_id", where));
    e.label_text = get_string(ij, "label", where);
    e.vector = get_vector(field(ij, "vector", where), dim, "embedding '" + e.label_text + "'");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<labels::LabelEmbedding> load_embeddings(const std::filesystem::path& path) {
  return embeddings_from_json(read_json(path));
}

}  // namespace rest::io
