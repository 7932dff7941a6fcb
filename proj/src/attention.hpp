#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "tensor.hpp"

namespace rest::attention {

enum class Scheme { kModalitySpecific, kFullCross };

std::string to_string(Scheme scheme);
// Accepts "modality", "modality_specific", "cross", "full_cross".
Scheme parse_scheme(std::string_view text);

// Token order: [CLS] at 0, frames at 1..T, words at T+1..T+N_w.
struct SequenceLayout {
  std::size_t n_visual = 1;
  std::size_t n_words = 1;

  std::size_t total() const noexcept { return 1 + n_visual + n_words; }
  std::size_t first_word() const noexcept { return 1 + n_visual; }
  bool is_word(std::size_t pos) const noexcept { return pos >= first_word(); }
};

struct AttentionMask {
  tensor::Mask allow;  // allow(q, k): query q may attend to key k
  Scheme scheme = Scheme::kModalitySpecific;
};

// [CLS] is grouped with the visual block. Words see [CLS], every frame and
// the words at or before their own position. FULL_CROSS additionally lets
// [CLS]/frames see every word.
AttentionMask build_mask(const SequenceLayout& layout, Scheme scheme);

// Throws ValidationError naming the first offending (q, k) cell.
void validate_mask(const AttentionMask& mask, const SequenceLayout& layout);

// Disables keys in padded slots. A padded query keeps only its own diagonal
// so its softmax row stays well-defined; nothing real ever reads from it.
void apply_padding(AttentionMask& mask, const SequenceLayout& layout, std::size_t valid_visual,
                   std::size_t valid_words);

// One line per query row, cells as '0'/'1' separated by spaces.
std::string render(const AttentionMask& mask);

}  // namespace rest::attention
