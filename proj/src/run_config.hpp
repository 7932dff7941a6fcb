#pragma once

// Run configuration document:
//   {seed, encoder: {...}, training: {...}, transfer: {...}, eval: {...}, synth: {...}}
// Every key is optional; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "encoder.hpp"
#include "synth.hpp"
#include "trainer.hpp"
#include "transfer.hpp"

namespace rest {

struct TransferSection {
  transfer::TransferParams params;
  bool cv = false;
  std::size_t folds = 5;
};

struct EvalSection {
  double fraction = 0.5;
  std::size_t splits = 10;
  std::size_t hubness_k = 1;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  model::EncoderConfig encoder;  // only the architecture/loss fields are read
  model::TrainSettings training;
  TransferSection transfer;
  EvalSection eval;
  synth::SynthConfig synth;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

// CLI seed wins over the document's; throws ConfigError when neither is set.
std::uint64_t resolve_seed(const RunConfig& config, const std::optional<std::uint64_t>& override_seed,
                           const std::string& command);

}  // namespace rest
