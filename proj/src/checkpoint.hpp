#pragma once

// Checkpoint document:
//   {format_version: 1, config: {...}, vocabulary: {token: id},
//    params: {name: {shape: [...], dtype: "f32le", data: <base64>}}}
// Parameters are stored as little-endian IEEE single precision.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "encoder.hpp"

namespace rest::model {

inline constexpr int kCheckpointVersion = 1;

nlohmann::json config_to_json(const EncoderConfig& config);
EncoderConfig config_from_json(const nlohmann::json& j);

std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::string& text);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace rest::model
