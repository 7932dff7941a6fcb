#include "label_embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "errors.hpp"

namespace rest::labels {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_size(std::string_view s, std::size_t& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

const std::vector<double>* WordVectorTable::find(std::string_view token) const {
  auto it = entries_.find(std::string(token));
  return it == entries_.end() ? nullptr : &it->second;
}

bool WordVectorTable::insert(std::string token, std::vector<double> vector) {
  if (vector.size() != dim_) {
    throw FormatError("word vector for '" + token + "' has " + std::to_string(vector.size()) +
                      " components, expected " + std::to_string(dim_));
  }
  return entries_.emplace(std::move(token), std::move(vector)).second;
}

WordVectorTable parse_word_vectors(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::size_t header_dim = 0;
  WordVectorTable table;
  bool have_table = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    std::size_t count = 0, dim = 0;
    if (!have_table && header_dim == 0 && fields.size() == 2 && parse_size(fields[0], count) &&
        parse_size(fields[1], dim)) {
      if (dim == 0) throw FormatError(source + ":" + std::to_string(line_no) + ": header dim is 0");
      header_dim = dim;
      continue;
    }
    if (fields.size() < 2) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected a token and a vector");
    }
    const std::size_t n = fields.size() - 1;
    if (!have_table) {
      if (header_dim != 0 && header_dim != n) {
        throw FormatError(source + ":" + std::to_string(line_no) + ": header declares dim " +
                          std::to_string(header_dim) + " but entry has " + std::to_string(n));
      }
      table = WordVectorTable(n);
      have_table = true;
    }
    if (n != table.dim()) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": vector length " +
                        std::to_string(n) + " differs from established dim " +
                        std::to_string(table.dim()));
    }
    std::vector<double> vec(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!parse_double(fields[i + 1], vec[i])) {
        throw FormatError(source + ":" + std::to_string(line_no) + ": bad number '" +
                          std::string(fields[i + 1]) + "'");
      }
    }
    std::string token = lowercase(fields[0]);
    if (!table.insert(token, std::move(vec))) {
      table.add_warning(source + ":" + std::to_string(line_no) + ": duplicate token '" + token +
                        "' ignored (first occurrence kept)");
    }
  }
  if (!have_table) throw FormatError(source + ": no word vectors found");
  return table;
}

WordVectorTable load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open word-vector file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_word_vectors(buf.str(), path.string());
}

std::vector<std::string> tokenize_label(std::string_view label) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : label) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || c == '_' || c == '-') {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  if (tokens.empty()) {
    throw FormatError("label '" + std::string(label) + "' has no tokens after tokenization");
  }
  return tokens;
}

LabelEmbedding embed_label(const WordVectorTable& table, std::string_view label, int class_id) {
  const auto tokens = tokenize_label(label);
  LabelEmbedding e;
  e.class_id = class_id;
  e.label_text = std::string(label);
  e.total_tokens = tokens.size();
  e.vector.assign(table.dim(), 0.0);
  for (const auto& t : tokens) {
    const auto* v = table.find(t);
    if (!v) continue;
    ++e.covered_tokens;
    for (std::size_t i = 0; i < v->size(); ++i) e.vector[i] += (*v)[i];
  }
  if (e.covered_tokens == 0) {
    throw CoverageError("label '" + std::string(label) + "' has no in-vocabulary tokens");
  }
  for (double& x : e.vector) x /= static_cast<double>(e.covered_tokens);
  return e;
}

std::vector<std::string> load_label_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    labels.push_back(line);
  }
  while (!labels.empty() && labels.back().empty()) labels.pop_back();
  if (labels.empty()) throw FormatError(path.string() + ": no labels");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) {
      throw FormatError(path.string() + ":" + std::to_string(i + 1) + ": empty label");
    }
  }
  return labels;
}

std::vector<LabelEmbedding> embed_labels(const WordVectorTable& table,
                                         std::span<const std::string> labels) {
  std::vector<LabelEmbedding> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.push_back(embed_label(table, labels[i], static_cast<int>(i)));
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ContractError("cosine: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

RelatednessMatrix::RelatednessMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) throw DimensionError("relatedness matrix size mismatch");
}

RelatednessMatrix RelatednessMatrix::transposed() const {
  std::vector<double> t(values_.size());
  for (std::size_t j = 0; j < rows_; ++j)
    for (std::size_t i = 0; i < cols_; ++i) t[i * rows_ + j] = values_[j * cols_ + i];
  return RelatednessMatrix(cols_, rows_, std::move(t));
}

RelatednessMatrix relatedness_matrix(std::span<const LabelEmbedding> unseen,
                                     std::span<const LabelEmbedding> seen) {
  if (unseen.empty() || seen.empty()) {
    throw InvalidArgument("relatedness_matrix: both label sets must be non-empty");
  }
  std::unordered_set<std::string> seen_text;
  for (const auto& s : seen) seen_text.insert(s.label_text);
  for (const auto& u : unseen) {
    if (seen_text.count(u.label_text)) {
      throw DisjointnessError("label '" + u.label_text + "' appears in both seen and unseen sets");
    }
  }
  std::vector<double> m(unseen.size() * seen.size());
  for (std::size_t j = 0; j < unseen.size(); ++j)
    for (std::size_t i = 0; i < seen.size(); ++i)
      m[j * seen.size() + i] = cosine(unseen[j].vector, seen[i].vector);
  return RelatednessMatrix(unseen.size(), seen.size(), std::move(m));
}

}  // namespace rest::labels
