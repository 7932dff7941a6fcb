#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rest::labels {

// Token -> vector lookup, immutable after load.
class WordVectorTable {
 public:
  WordVectorTable() = default;
  explicit WordVectorTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  // Returns nullptr for out-of-vocabulary tokens.
  const std::vector<double>* find(std::string_view token) const;
  // First insertion wins; returns false for a duplicate.
  bool insert(std::string token, std::vector<double> vector);

  // Diagnostics collected while loading (duplicate tokens and similar).
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> entries_;
  std::vector<std::string> warnings_;
};

// One token and `dim` reals per line. An optional leading "count dim" line
// is recognized as a header and skipped.
WordVectorTable load_word_vectors(const std::filesystem::path& path);
WordVectorTable parse_word_vectors(std::string_view text, const std::string& source = "<memory>");

// Lowercases, splits on whitespace, '_' and '-', strips ASCII punctuation.
std::vector<std::string> tokenize_label(std::string_view label);

struct LabelEmbedding {
  int class_id = 0;
  std::string label_text;
  std::vector<double> vector;
  std::size_t covered_tokens = 0;
  std::size_t total_tokens = 0;
};

// Mean of the in-vocabulary token vectors; OOV tokens are skipped.
LabelEmbedding embed_label(const WordVectorTable& table, std::string_view label, int class_id = 0);

std::vector<std::string> load_label_list(const std::filesystem::path& path);
std::vector<LabelEmbedding> embed_labels(const WordVectorTable& table,
                                         std::span<const std::string> labels);

double cosine(std::span<const double> a, std::span<const double> b);

// rows = unseen (γ), cols = seen (κ).
class RelatednessMatrix {
 public:
  RelatednessMatrix() = default;
  RelatednessMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t j, std::size_t i) const { return values_[j * cols_ + i]; }
  std::span<const double> row(std::size_t j) const {
    return std::span<const double>(values_).subspan(j * cols_, cols_);
  }
  RelatednessMatrix transposed() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Rejects label text shared between the two sets.
RelatednessMatrix relatedness_matrix(std::span<const LabelEmbedding> unseen,
                                     std::span<const LabelEmbedding> seen);

}  // namespace rest::labels
