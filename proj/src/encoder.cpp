#include "encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "errors.hpp"
#include "label_embeddings.hpp"

namespace rest::model {

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kClsOnly: return "cls_only";
    case LossMode::kMlmOnly: return "mlm_only";
    case LossMode::kJoint: return "joint";
  }
  return "joint";
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "cls_only" || text == "cls") return LossMode::kClsOnly;
  if (text == "mlm_only" || text == "mlm") return LossMode::kMlmOnly;
  if (text == "joint") return LossMode::kJoint;
  throw ConfigError("unknown loss mode '" + std::string(text) +
                    "' (expected cls_only, mlm_only or joint)");
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("encoder config: " + msg); };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (num_heads < 1) fail("num_heads must be >= 1");
  if (hidden_dim < 1 || hidden_dim % num_heads != 0) fail("hidden_dim must be divisible by num_heads");
  if (mlp_dim < 1) fail("mlp_dim must be >= 1");
  if (input_feature_dim < 1) fail("input_feature_dim must be >= 1");
  if (vocab_size < 3) fail("vocab_size must cover at least one token and two specials");
  if (max_visual_len < 1 || max_word_len < 1) fail("max lengths must be >= 1");
  if (num_seen_classes < 1) fail("num_seen_classes must be >= 1");
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) fail("mask_prob must lie in (0, 1)");
  if (!(omega_mtl >= 0.0)) fail("omega_mtl must be >= 0");
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::build(std::span<const std::string> seen_labels) {
  std::set<std::string> words;
  for (const auto& label : seen_labels) {
    for (auto& t : labels::tokenize_label(label)) words.insert(std::move(t));
  }
  if (words.empty()) throw InvalidArgument("vocabulary: no tokens in the seen labels");
  std::map<std::string, std::size_t> ids;
  std::size_t next = 0;
  for (const auto& w : words) ids.emplace(w, next++);
  ids.emplace(std::string(kPadToken), next++);
  ids.emplace(std::string(kMaskToken), next++);
  return from_map(std::move(ids));
}

Vocabulary Vocabulary::from_map(std::map<std::string, std::size_t> token_to_id) {
  std::vector<bool> used(token_to_id.size(), false);
  for (const auto& [token, id] : token_to_id) {
    if (id >= used.size() || used[id]) throw FormatError("vocabulary ids must be dense and unique");
    used[id] = true;
  }
  auto pad = token_to_id.find(std::string(kPadToken));
  auto mask = token_to_id.find(std::string(kMaskToken));
  if (pad == token_to_id.end() || mask == token_to_id.end()) {
    throw FormatError("vocabulary lacks [PAD] or [MASK]");
  }
  Vocabulary v;
  v.pad_id_ = pad->second;
  v.mask_id_ = mask->second;
  v.tokens_ = std::move(token_to_id);
  return v;
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = tokens_.find(std::string(token));
  if (it == tokens_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto found = find(token);
  if (!found) throw IndexError("token '" + std::string(token) + "' is not in the vocabulary");
  return *found;
}

std::vector<std::size_t> Vocabulary::encode(std::string_view label) const {
  std::vector<std::size_t> ids;
  for (const auto& t : labels::tokenize_label(label)) ids.push_back(id(t));
  return ids;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

template <typename Params, typename Out>
void collect_named(Params& p, Out& out) {
  out.emplace_back("cls_token", &p.cls_token);
  out.emplace_back("visual_projection.weight", &p.visual_proj_weight);
  out.emplace_back("visual_projection.bias", &p.visual_proj_bias);
  out.emplace_back("word_embedding", &p.word_embedding);
  out.emplace_back("visual_position", &p.visual_position);
  out.emplace_back("word_position", &p.word_position);
  out.emplace_back("segment", &p.segment);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    out.emplace_back(pre + "attn.q.weight", &L.q_weight);
    out.emplace_back(pre + "attn.q.bias", &L.q_bias);
    out.emplace_back(pre + "attn.k.weight", &L.k_weight);
    out.emplace_back(pre + "attn.k.bias", &L.k_bias);
    out.emplace_back(pre + "attn.v.weight", &L.v_weight);
    out.emplace_back(pre + "attn.v.bias", &L.v_bias);
    out.emplace_back(pre + "attn.o.weight", &L.o_weight);
    out.emplace_back(pre + "attn.o.bias", &L.o_bias);
    out.emplace_back(pre + "ln1.gain", &L.ln1_gain);
    out.emplace_back(pre + "ln1.bias", &L.ln1_bias);
    out.emplace_back(pre + "mlp.fc1.weight", &L.fc1_weight);
    out.emplace_back(pre + "mlp.fc1.bias", &L.fc1_bias);
    out.emplace_back(pre + "mlp.fc2.weight", &L.fc2_weight);
    out.emplace_back(pre + "mlp.fc2.bias", &L.fc2_bias);
    out.emplace_back(pre + "ln2.gain", &L.ln2_gain);
    out.emplace_back(pre + "ln2.bias", &L.ln2_bias);
  }
  out.emplace_back("final_ln.gain", &p.final_ln_gain);
  out.emplace_back("final_ln.bias", &p.final_ln_bias);
  out.emplace_back("cls_head.hidden.weight", &p.cls_hidden_weight);
  out.emplace_back("cls_head.hidden.bias", &p.cls_hidden_bias);
  out.emplace_back("cls_head.out.weight", &p.cls_out_weight);
  out.emplace_back("cls_head.out.bias", &p.cls_out_bias);
  out.emplace_back("mtl_head.weight", &p.mtl_weight);
  out.emplace_back("mtl_head.bias", &p.mtl_bias);
}

enum class InitKind { kNormal, kZero, kOne };

InitKind init_kind(const std::string& name) {
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".gain")) return InitKind::kOne;
  if (ends_with(".bias")) return InitKind::kZero;
  return InitKind::kNormal;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect_named(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect_named(*this, out);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named()) t->zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  auto src = named();
  auto dst = copy.named();
  for (std::size_t i = 0; i < src.size(); ++i) {
    *dst[i].second = src[i].second->detached();
    dst[i].second->set_requires_grad(src[i].second->requires_grad());
  }
  return copy;
}

std::vector<std::pair<std::string, tensor::Shape>> parameter_shapes(const EncoderConfig& c) {
  const std::size_t D = c.hidden_dim;
  std::vector<std::pair<std::string, tensor::Shape>> s;
  s.emplace_back("cls_token", tensor::Shape{1, D});
  s.emplace_back("visual_projection.weight", tensor::Shape{c.input_feature_dim, D});
  s.emplace_back("visual_projection.bias", tensor::Shape{D});
  s.emplace_back("word_embedding", tensor::Shape{c.vocab_size, D});
  s.emplace_back("visual_position", tensor::Shape{c.max_visual_len + 1, D});
  s.emplace_back("word_position", tensor::Shape{c.max_word_len + 1, D});
  s.emplace_back("segment", tensor::Shape{2, D});
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    for (const char* m : {"q", "k", "v", "o"}) {
      s.emplace_back(pre + "attn." + m + ".weight", tensor::Shape{D, D});
      s.emplace_back(pre + "attn." + m + ".bias", tensor::Shape{D});
    }
    s.emplace_back(pre + "ln1.gain", tensor::Shape{D});
    s.emplace_back(pre + "ln1.bias", tensor::Shape{D});
    s.emplace_back(pre + "mlp.fc1.weight", tensor::Shape{D, c.mlp_dim});
    s.emplace_back(pre + "mlp.fc1.bias", tensor::Shape{c.mlp_dim});
    s.emplace_back(pre + "mlp.fc2.weight", tensor::Shape{c.mlp_dim, D});
    s.emplace_back(pre + "mlp.fc2.bias", tensor::Shape{D});
    s.emplace_back(pre + "ln2.gain", tensor::Shape{D});
    s.emplace_back(pre + "ln2.bias", tensor::Shape{D});
  }
  s.emplace_back("final_ln.gain", tensor::Shape{D});
  s.emplace_back("final_ln.bias", tensor::Shape{D});
  s.emplace_back("cls_head.hidden.weight", tensor::Shape{D, D});
  s.emplace_back("cls_head.hidden.bias", tensor::Shape{D});
  s.emplace_back("cls_head.out.weight", tensor::Shape{D, c.num_seen_classes});
  s.emplace_back("cls_head.out.bias", tensor::Shape{c.num_seen_classes});
  s.emplace_back("mtl_head.weight", tensor::Shape{D, c.vocab_size});
  s.emplace_back("mtl_head.bias", tensor::Shape{c.vocab_size});
  return s;
}

ModelParams init_params(const EncoderConfig& config) {
  config.validate();
  ModelParams p;
  p.layers.resize(config.num_layers);
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  const auto shapes = parameter_shapes(config);
  auto slots = p.named();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& [name, shape] = shapes[i];
    Tensor t = Tensor::zeros(shape, true);
    auto values = t.mutable_values();
    switch (init_kind(name)) {
      case InitKind::kNormal:
        for (double& v : values) v = normal(rng);
        break;
      case InitKind::kOne:
        std::fill(values.begin(), values.end(), 1.0);
        break;
      case InitKind::kZero:
        break;
    }
    *slots[i].second = std::move(t);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Masking

MaskingPlan make_masking_plan(std::span<const std::size_t> word_ids, double mask_prob, Rng& rng) {
  if (word_ids.empty()) throw InvalidArgument("masking plan: empty word block");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  MaskingPlan plan;
  for (std::size_t i = 0; i < word_ids.size(); ++i) {
    if (uniform(rng) < mask_prob) plan.positions.push_back(i);
  }
  if (plan.positions.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, word_ids.size() - 1);
    plan.positions.push_back(pick(rng));
  }
  for (std::size_t pos : plan.positions) plan.original_tokens.push_back(word_ids[pos]);
  return plan;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

std::vector<std::size_t> iota_from(std::size_t first, std::size_t count) {
  std::vector<std::size_t> v(count);
  std::iota(v.begin(), v.end(), first);
  return v;
}

Tensor encoder_block(Tape& tape, const LayerParams& L, const Tensor& z, const tensor::Mask& mask,
                     std::size_t num_heads) {
  const Tensor q = tape.add_row(tape.matmul(z, L.q_weight), L.q_bias);
  const Tensor k = tape.add_row(tape.matmul(z, L.k_weight), L.k_bias);
  const Tensor v = tape.add_row(tape.matmul(z, L.v_weight), L.v_bias);
  const std::size_t head_dim = z.cols() / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const Tensor qh = tape.slice_cols(q, h * head_dim, head_dim);
    const Tensor kh = tape.slice_cols(k, h * head_dim, head_dim);
    const Tensor vh = tape.slice_cols(v, h * head_dim, head_dim);
    const Tensor scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
    heads.push_back(tape.matmul(tape.softmax_masked(scores, mask), vh));
  }
  const Tensor attended = tape.add_row(tape.matmul(tape.concat_cols(heads), L.o_weight), L.o_bias);
  const Tensor z1 = tape.layer_norm(tape.add(attended, z), L.ln1_gain, L.ln1_bias);
  const Tensor hidden = tape.gelu(tape.add_row(tape.matmul(z1, L.fc1_weight), L.fc1_bias));
  const Tensor mlp = tape.add_row(tape.matmul(hidden, L.fc2_weight), L.fc2_bias);
  return tape.layer_norm(tape.add(mlp, z1), L.ln2_gain, L.ln2_bias);
}

}  // namespace

ForwardResult forward(const ModelParams& P, const EncoderConfig& config, const Vocabulary& vocab,
                      Tape& tape, const Tensor& frames, std::span<const std::size_t> word_ids,
                      const MaskingPlan* plan, Padding padding) {
  const std::size_t T = frames.rows();
  const std::size_t N = word_ids.size();
  if (frames.rank() != 2 || frames.cols() != config.input_feature_dim) {
    throw DimensionError("forward: frames must be [T x " +
                         std::to_string(config.input_feature_dim) + "], got " +
                         tensor::to_string(frames.shape()));
  }
  if (N == 0) throw InvalidArgument("forward: empty word block");
  if (T > config.max_visual_len) {
    throw ConfigError("forward: " + std::to_string(T) + " frames exceed max_visual_len " +
                      std::to_string(config.max_visual_len));
  }
  if (N > config.max_word_len) {
    throw ConfigError("forward: " + std::to_string(N) + " words exceed max_word_len " +
                      std::to_string(config.max_word_len));
  }

  std::vector<std::size_t> ids(word_ids.begin(), word_ids.end());
  if (plan) {
    if (plan->positions.empty() || plan->positions.size() != plan->original_tokens.size()) {
      throw ContractError("forward: malformed masking plan");
    }
    for (std::size_t pos : plan->positions) {
      if (pos >= N) throw IndexError("forward: masked position outside the word block");
      ids[pos] = vocab.mask_id();
    }
  }
  for (std::size_t id : ids) {
    if (id >= config.vocab_size) throw IndexError("forward: token id out of vocabulary range");
  }

  const std::vector<std::size_t> zero_row{0};
  const Tensor cls_row = tape.add(tape.add(P.cls_token, tape.gather_rows(P.visual_position, zero_row)),
                                  tape.gather_rows(P.segment, zero_row));

  const Tensor projected =
      tape.add_row(tape.matmul(frames, P.visual_proj_weight), P.visual_proj_bias);
  const std::vector<std::size_t> visual_segment(T, 0);
  const Tensor visual = tape.add(
      tape.add(projected, tape.gather_rows(P.visual_position, iota_from(1, T))),
      tape.gather_rows(P.segment, visual_segment));

  const std::vector<std::size_t> word_segment(N, 1);
  const Tensor words = tape.add(
      tape.add(tape.gather_rows(P.word_embedding, ids), tape.gather_rows(P.word_position, iota_from(1, N))),
      tape.gather_rows(P.segment, word_segment));

  const std::vector<Tensor> blocks{cls_row, visual, words};
  Tensor z = tape.concat_rows(blocks);

  const attention::SequenceLayout layout{T, N};
  attention::AttentionMask mask = attention::build_mask(layout, config.attention_scheme);
  if (padding.valid_visual != 0 || padding.valid_words != 0) {
    attention::apply_padding(mask, layout, padding.valid_visual ? padding.valid_visual : T,
                             padding.valid_words ? padding.valid_words : N);
  }

  for (const auto& layer : P.layers) z = encoder_block(tape, layer, z, mask.allow, config.num_heads);

  ForwardResult out;
  out.states = z;
  out.x = tape.layer_norm(tape.gather_rows(z, zero_row), P.final_ln_gain, P.final_ln_bias);
  const Tensor hidden =
      tape.gelu(tape.add_row(tape.matmul(out.x, P.cls_hidden_weight), P.cls_hidden_bias));
  out.cls_logits = tape.add_row(tape.matmul(hidden, P.cls_out_weight), P.cls_out_bias);
  if (plan) {
    std::vector<std::size_t> rows;
    for (std::size_t pos : plan->positions) rows.push_back(layout.first_word() + pos);
    out.mtl_logits =
        tape.add_row(tape.matmul(tape.gather_rows(z, rows), P.mtl_weight), P.mtl_bias);
  }
  return out;
}

Tensor loss_cls(Tape& tape, const Tensor& cls_logits, std::size_t class_id) {
  const std::size_t target[] = {class_id};
  return tape.cross_entropy(cls_logits, target);
}

Tensor loss_mtl(Tape& tape, const Tensor& mtl_logits, std::span<const std::size_t> original_tokens) {
  if (mtl_logits.rows() != original_tokens.size()) {
    throw ContractError("loss_mtl: " + std::to_string(mtl_logits.rows()) + " logit rows for " +
                        std::to_string(original_tokens.size()) + " masked tokens");
  }
  return tape.cross_entropy(mtl_logits, original_tokens);
}

Tensor total_loss(Tape& tape, const Tensor& l_cls, const Tensor& l_mtl, const EncoderConfig& config) {
  switch (config.loss_mode) {
    case LossMode::kClsOnly:
      if (!l_cls.defined()) throw ContractError("total_loss: CLS loss missing");
      return l_cls;
    case LossMode::kMlmOnly:
      if (!l_mtl.defined()) throw ContractError("total_loss: MTL loss missing");
      return l_mtl;
    case LossMode::kJoint:
      if (!l_cls.defined() || !l_mtl.defined()) throw ContractError("total_loss: joint needs both losses");
      return tape.add(l_cls, tape.scale(l_mtl, config.omega_mtl));
  }
  throw ContractError("total_loss: unknown loss mode");
}

std::vector<double> represent(const ModelParams& params, const EncoderConfig& config,
                              const Vocabulary& vocab, const Tensor& frames) {
  Tape tape(false);
  const std::size_t mask_only[] = {vocab.mask_id()};
  const ForwardResult r = forward(params, config, vocab, tape, frames, mask_only);
  return {r.x.values().begin(), r.x.values().end()};
}

Tensor frames_tensor(const std::vector<std::vector<double>>& frames) {
  if (frames.empty()) throw DimensionError("no frames");
  const std::size_t p = frames.front().size();
  std::vector<double> flat;
  flat.reserve(frames.size() * p);
  for (const auto& f : frames) {
    if (f.size() != p) throw DimensionError("frames have inconsistent feature dimensions");
    flat.insert(flat.end(), f.begin(), f.end());
  }
  return Tensor::matrix(frames.size(), p, std::move(flat));
}

}  // namespace rest::model
