#pragma once

// Cross-modal transformer encoder: input assembly, post-LN blocks, the
// classification head on [CLS] and the masked-token head on the words.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attention.hpp"
#include "tensor.hpp"

namespace rest::model {

using tensor::Tape;
using tensor::Tensor;
using Rng = std::mt19937_64;

enum class LossMode { kClsOnly, kMlmOnly, kJoint };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view text);

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_dim = 32;
  std::size_t num_heads = 4;
  std::size_t mlp_dim = 64;
  std::size_t input_feature_dim = 16;
  std::size_t vocab_size = 0;
  std::size_t max_visual_len = 0;
  std::size_t max_word_len = 0;
  std::size_t num_seen_classes = 0;
  attention::Scheme attention_scheme = attention::Scheme::kModalitySpecific;
  LossMode loss_mode = LossMode::kJoint;
  double omega_mtl = 0.5;
  double mask_prob = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kMaskToken = "[MASK]";

// Sorted label tokens get ids 0..n-1, then [PAD] and [MASK].
class Vocabulary {
 public:
  Vocabulary() = default;
  static Vocabulary build(std::span<const std::string> seen_labels);
  // Restores a saved id map; ids must be dense and include both specials.
  static Vocabulary from_map(std::map<std::string, std::size_t> token_to_id);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::optional<std::size_t> find(std::string_view token) const;
  std::size_t id(std::string_view token) const;
  std::size_t pad_id() const noexcept { return pad_id_; }
  std::size_t mask_id() const noexcept { return mask_id_; }
  const std::map<std::string, std::size_t>& tokens() const noexcept { return tokens_; }
  std::vector<std::size_t> encode(std::string_view label) const;

  bool operator==(const Vocabulary&) const = default;

 private:
  std::map<std::string, std::size_t> tokens_;
  std::size_t pad_id_ = 0;
  std::size_t mask_id_ = 0;
};

struct LayerParams {
  Tensor q_weight, q_bias, k_weight, k_bias, v_weight, v_bias, o_weight, o_bias;
  Tensor ln1_gain, ln1_bias;
  Tensor fc1_weight, fc1_bias, fc2_weight, fc2_bias;
  Tensor ln2_gain, ln2_bias;
};

struct ModelParams {
  Tensor cls_token;
  Tensor visual_proj_weight, visual_proj_bias;
  Tensor word_embedding;
  Tensor visual_position;  // row 0 = [CLS], rows 1..T_max = frames
  Tensor word_position;    // rows 1..W_max = words; row 0 unused
  Tensor segment;          // row 0 = visual block, row 1 = words
  std::vector<LayerParams> layers;
  Tensor final_ln_gain, final_ln_bias;
  Tensor cls_hidden_weight, cls_hidden_bias, cls_out_weight, cls_out_bias;
  Tensor mtl_weight, mtl_bias;

  // Stable, checkpoint-facing order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::size_t parameter_count() const;
  void zero_grad();
  ModelParams clone() const;
};

// Expected shape of every named parameter for a config.
std::vector<std::pair<std::string, tensor::Shape>> parameter_shapes(const EncoderConfig& config);

// Weights ~ N(0, 0.02²); biases 0; LN gains 1.
ModelParams init_params(const EncoderConfig& config);

struct Model {
  EncoderConfig config;
  Vocabulary vocab;
  ModelParams params;
};

struct MaskingPlan {
  std::vector<std::size_t> positions;        // indices into the word block, ascending
  std::vector<std::size_t> original_tokens;  // ids before substitution
};

// Each word is masked with probability mask_prob; when none is drawn, one
// uniformly chosen position is masked instead.
MaskingPlan make_masking_plan(std::span<const std::size_t> word_ids, double mask_prob, Rng& rng);

struct Padding {
  std::size_t valid_visual = 0;  // 0 = no padding
  std::size_t valid_words = 0;
};

struct ForwardResult {
  Tensor x;           // [1×D], LN of the final [CLS] state
  Tensor cls_logits;  // [1×κ]
  Tensor mtl_logits;  // [|masked|×V]; undefined without a masking plan
  Tensor states;      // [n×D], final layer output before the last LN
};

// frames: [T×p]. word_ids: the unmasked label tokens; masked positions are
// replaced with [MASK] per the plan.
ForwardResult forward(const ModelParams& params, const EncoderConfig& config, const Vocabulary& vocab,
                      Tape& tape, const Tensor& frames, std::span<const std::size_t> word_ids,
                      const MaskingPlan* plan = nullptr, Padding padding = {});

Tensor loss_cls(Tape& tape, const Tensor& cls_logits, std::size_t class_id);
Tensor loss_mtl(Tape& tape, const Tensor& mtl_logits, std::span<const std::size_t> original_tokens);
// Either loss may be undefined when the mode does not use it.
Tensor total_loss(Tape& tape, const Tensor& l_cls, const Tensor& l_mtl, const EncoderConfig& config);

// Word block is a single [MASK].
std::vector<double> represent(const ModelParams& params, const EncoderConfig& config,
                              const Vocabulary& vocab, const Tensor& frames);

Tensor frames_tensor(const std::vector<std::vector<double>>& frames);

}  // namespace rest::model
