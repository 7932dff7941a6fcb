#include "checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace rest::model {

using nlohmann::json;

namespace {

std::vector<unsigned char> pack_f32le(std::span<const double> values) {
  std::vector<unsigned char> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return out;
}

std::vector<double> unpack_f32le(const std::vector<unsigned char>& bytes) {
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

template <typename T>
T get_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("checkpoint config: missing '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config: bad '") + key + "': " + e.what());
  }
}

}  // namespace

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) throw FormatError("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw FormatError("invalid base64 payload");
  std::size_t padding = 0;
  if (text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

json config_to_json(const EncoderConfig& c) {
  return {
      {"num_layers", c.num_layers},
      {"hidden_dim", c.hidden_dim},
      {"num_heads", c.num_heads},
      {"mlp_dim", c.mlp_dim},
      {"input_feature_dim", c.input_feature_dim},
      {"vocab_size", c.vocab_size},
      {"max_visual_len", c.max_visual_len},
      {"max_word_len", c.max_word_len},
      {"num_seen_classes", c.num_seen_classes},
      {"attention_scheme", attention::to_string(c.attention_scheme)},
      {"loss_mode", to_string(c.loss_mode)},
      {"omega_mtl", c.omega_mtl},
      {"mask_prob", c.mask_prob},
      {"seed", c.seed},
  };
}

EncoderConfig config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("checkpoint config must be an object");
  EncoderConfig c;
  c.num_layers = get_field<std::size_t>(j, "num_layers");
  c.hidden_dim = get_field<std::size_t>(j, "hidden_dim");
  c.num_heads = get_field<std::size_t>(j, "num_heads");
  c.mlp_dim = get_field<std::size_t>(j, "mlp_dim");
  c.input_feature_dim = get_field<std::size_t>(j, "input_feature_dim");
  c.vocab_size = get_field<std::size_t>(j, "vocab_size");
  c.max_visual_len = get_field<std::size_t>(j, "max_visual_len");
  c.max_word_len = get_field<std::size_t>(j, "max_word_len");
  c.num_seen_classes = get_field<std::size_t>(j, "num_seen_classes");
  c.attention_scheme = attention::parse_scheme(get_field<std::string>(j, "attention_scheme"));
  c.loss_mode = parse_loss_mode(get_field<std::string>(j, "loss_mode"));
  c.omega_mtl = get_field<double>(j, "omega_mtl");
  c.mask_prob = get_field<double>(j, "mask_prob");
  c.seed = get_field<std::uint64_t>(j, "seed");
  c.validate();
  return c;
}

std::string serialize_checkpoint(const Model& model) {
  json params = json::object();
  for (const auto& [name, t] : model.params.named()) {
    params[name] = {{"shape", t->shape()},
                    {"dtype", "f32le"},
                    {"data", base64_encode(pack_f32le(t->values()))}};
  }
  json vocab = json::object();
  for (const auto& [token, id] : model.vocab.tokens()) vocab[token] = id;
  json doc = {{"format_version", kCheckpointVersion},
              {"config", config_to_json(model.config)},
              {"vocabulary", std::move(vocab)},
              {"params", std::move(params)}};
  return doc.dump() + "\n";
}

Model deserialize_checkpoint(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version")) {
    throw FormatError("checkpoint lacks format_version");
  }
  if (doc["format_version"] != kCheckpointVersion) {
    throw FormatError("checkpoint format_version " + doc["format_version"].dump() +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  for (const char* key : {"config", "vocabulary", "params"}) {
    if (!doc.contains(key)) throw FormatError(std::string("checkpoint lacks '") + key + "'");
  }
  Model model;
  model.config = config_from_json(doc["config"]);

  std::map<std::string, std::size_t> vocab;
  for (const auto& [token, id] : doc["vocabulary"].items()) {
    if (!id.is_number_unsigned()) throw FormatError("checkpoint vocabulary ids must be unsigned");
    vocab.emplace(token, id.get<std::size_t>());
  }
  model.vocab = Vocabulary::from_map(std::move(vocab));
  if (model.vocab.size() != model.config.vocab_size) {
    throw FormatError("checkpoint vocabulary size differs from config.vocab_size");
  }

  model.params.layers.resize(model.config.num_layers);
  const auto shapes = parameter_shapes(model.config);
  auto slots = model.params.named();
  const json& params = doc["params"];
  if (params.size() != shapes.size()) {
    throw FormatError("checkpoint has " + std::to_string(params.size()) + " tensors, expected " +
                      std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& [name, shape] = shapes[i];
    auto it = params.find(name);
    if (it == params.end()) throw FormatError("checkpoint lacks parameter '" + name + "'");
    if (!it->is_object() || it->value("dtype", "") != "f32le") {
      throw FormatError("parameter '" + name + "' must have dtype f32le");
    }
    if (it->value("shape", tensor::Shape{}) != shape) {
      throw FormatError("parameter '" + name + "' has shape " + it->at("shape").dump() +
                        ", expected " + tensor::to_string(shape));
    }
    const auto bytes = base64_decode(it->value("data", std::string{}));
    auto values = unpack_f32le(bytes);
    const std::size_t expected = tensor::Tensor::zeros(shape).numel();
    if (bytes.size() % 4 != 0 || values.size() != expected) {
      throw FormatError("parameter '" + name + "' payload holds " + std::to_string(bytes.size()) +
                        " bytes, expected " + std::to_string(expected * 4));
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw FormatError("parameter '" + name + "' has non-finite values");
    }
    *slots[i].second = tensor::Tensor(shape, std::move(values), true);
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(model);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace rest::model
