#include "attention.hpp"

#include "errors.hpp"

namespace rest::attention {

namespace {

bool expected_cell(const SequenceLayout& layout, Scheme scheme, std::size_t q, std::size_t k) {
  if (!layout.is_word(q)) {
    return !layout.is_word(k) || scheme == Scheme::kFullCross;
  }
  return !layout.is_word(k) || k <= q;
}

}  // namespace

std::string to_string(Scheme scheme) {
  return scheme == Scheme::kModalitySpecific ? "modality" : "cross";
}

Scheme parse_scheme(std::string_view text) {
  if (text == "modality" || text == "modality_specific") return Scheme::kModalitySpecific;
  if (text == "cross" || text == "full_cross") return Scheme::kFullCross;
  throw ConfigError("unknown attention scheme '" + std::string(text) +
                    "' (expected modality or cross)");
}

AttentionMask build_mask(const SequenceLayout& layout, Scheme scheme) {
  if (layout.n_visual == 0 || layout.n_words == 0) {
    throw InvalidArgument("sequence layout needs at least one frame and one word");
  }
  const std::size_t n = layout.total();
  AttentionMask mask{tensor::Mask(n, n), scheme};
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < n; ++k) mask.allow.set(q, k, expected_cell(layout, scheme, q, k));
  return mask;
}

void validate_mask(const AttentionMask& mask, const SequenceLayout& layout) {
  const std::size_t n = layout.total();
  if (mask.allow.rows() != n || mask.allow.cols() != n) {
    throw DimensionError("attention mask is " + std::to_string(mask.allow.rows()) + "x" +
                         std::to_string(mask.allow.cols()) + ", layout needs " +
                         std::to_string(n) + "x" + std::to_string(n));
  }
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t k = 0; k < n; ++k) {
      if (mask.allow(q, k) != expected_cell(layout, mask.scheme, q, k)) {
        throw ValidationError("attention mask violates " + to_string(mask.scheme) +
                              " rule at (q=" + std::to_string(q) + ", k=" + std::to_string(k) +
                              ")");
      }
    }
  }
}

void apply_padding(AttentionMask& mask, const SequenceLayout& layout, std::size_t valid_visual,
                   std::size_t valid_words) {
  if (valid_visual == 0 || valid_visual > layout.n_visual || valid_words == 0 ||
      valid_words > layout.n_words) {
    throw InvalidArgument("padding lengths outside the layout");
  }
  const std::size_t n = layout.total();
  auto is_pad = [&](std::size_t pos) {
    if (pos == 0) return false;
    if (!layout.is_word(pos)) return pos > valid_visual;
    return pos - layout.first_word() >= valid_words;
  };
  for (std::size_t q = 0; q < n; ++q) {
    const bool pad_q = is_pad(q);
    for (std::size_t k = 0; k < n; ++k) {
      if (pad_q ? k != q : is_pad(k)) mask.allow.set(q, k, false);
    }
  }
}

std::string render(const AttentionMask& mask) {
  std::string out;
  for (std::size_t q = 0; q < mask.allow.rows(); ++q) {
    for (std::size_t k = 0; k < mask.allow.cols(); ++k) {
      if (k) out.push_back(' ');
      out.push_back(mask.allow(q, k) ? '1' : '0');
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace rest::attention
