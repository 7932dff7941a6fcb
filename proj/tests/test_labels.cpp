#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "errors.hpp"
#include "label_embeddings.hpp"
#include "test_util.hpp"

using namespace rest::labels;

namespace {

LabelEmbedding emb(int id, std::string text, std::vector<double> v) {
  LabelEmbedding e;
  e.class_id = id;
  e.label_text = std::move(text);
  e.vector = std::move(v);
  e.covered_tokens = e.total_tokens = 1;
  return e;
}

}  // namespace

TEST_CASE("word vector parsing") {
  auto t = parse_word_vectors("jump 1.0 0.0\nrun 0.0 1.0\n");
  CHECK(t.dim() == 2);
  CHECK(t.size() == 2);
  REQUIRE(t.find("run"));
  CHECK(*t.find("run") == std::vector<double>{0.0, 1.0});
  CHECK(t.find("walk") == nullptr);

  auto h = parse_word_vectors("2 2\njump 1.0 0.0\nrun 0.0 1.0\n");
  CHECK(h.size() == 2);
  CHECK(*h.find("jump") == *t.find("jump"));

  CHECK_THROWS_AS(parse_word_vectors("jump 1.0 0.0\nrun 0.0\n"), rest::FormatError);
  CHECK_THROWS_AS(parse_word_vectors(""), rest::FormatError);
  CHECK_THROWS_AS(parse_word_vectors("jump 1.0 abc\n"), rest::FormatError);
}

TEST_CASE("duplicate tokens keep the first vector and warn") {
  auto t = parse_word_vectors("Jump 1 0\njump 0 1\n");
  CHECK(t.size() == 1);
  CHECK(*t.find("jump") == std::vector<double>{1.0, 0.0});
  CHECK(t.warnings().size() == 1);
}

TEST_CASE("load from file") {
  const auto path = std::filesystem::temp_directory_path() / "rest_test_vectors.txt";
  {
    std::ofstream out(path);
    out << "jump 1.0 0.0\nrun 0.0 1.0\n";
  }
  CHECK(load_word_vectors(path).size() == 2);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_word_vectors(path), rest::IoError);
}

TEST_CASE("tokenize_label") {
  CHECK(tokenize_label("Hula Hoop") == std::vector<std::string>{"hula", "hoop"});
  CHECK(tokenize_label("playing_beach-volleyball") == std::vector<std::string>{"playing", "beach", "volleyball"});
  CHECK(tokenize_label("pour") == std::vector<std::string>{"pour"});
  CHECK(tokenize_label("  (Tai-Chi!) ") == std::vector<std::string>{"tai", "chi"});
  CHECK_THROWS_AS(tokenize_label("--- !!"), rest::FormatError);
}

TEST_CASE("embed_label") {
  auto t = parse_word_vectors("jump 1 0\nrun 0 1\n");
  CHECK(embed_label(t, "jump").vector == std::vector<double>{1.0, 0.0});
  CHECK(embed_label(t, "jump run").vector == std::vector<double>{0.5, 0.5});
  auto partial = embed_label(t, "jump xqzzy");
  CHECK(partial.vector == std::vector<double>{1.0, 0.0});
  CHECK(partial.covered_tokens == 1);
  CHECK(partial.total_tokens == 2);
  CHECK_THROWS_AS(embed_label(t, "xqzzy"), rest::CoverageError);
  CHECK(embed_label(t, "run jump").vector == embed_label(t, "jump run").vector);
}

TEST_CASE("cosine") {
  const std::vector<double> x{1, 0}, y{0, 1}, d{1, 1}, z{0, 0};
  CHECK(cosine(x, x) == 1.0);
  CHECK(cosine(x, y) == 0.0);
  CHECK(cosine(d, x) == doctest::Approx(0.7071067811865475).epsilon(1e-15));
  CHECK_THROWS_AS(cosine(x, z), rest::ContractError);
  const std::vector<double> a{1e-3, 1e-3}, b{1e3, 1e3};
  CHECK(cosine(a, b) <= 1.0);
}

TEST_CASE("relatedness_matrix") {
  const LabelEmbedding unseen[] = {emb(0, "u", {1, 0})};
  const LabelEmbedding seen[] = {emb(0, "a", {1, 0}), emb(1, "b", {0, 1})};
  auto m = relatedness_matrix(unseen, seen);
  CHECK(m.rows() == 1);
  CHECK(m.cols() == 2);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(0, 1) == 0.0);
  CHECK_THROWS_AS(relatedness_matrix(seen, seen), rest::DisjointnessError);
}

TEST_CASE("relatedness properties on random embeddings") {
  std::mt19937_64 rng(1);
  std::vector<LabelEmbedding> a, b, a_scaled, b_scaled;
  for (int i = 0; i < 4; ++i) a.push_back(emb(i, "a" + std::to_string(i), testutil::uniform(rng, 6)));
  for (int i = 0; i < 5; ++i) b.push_back(emb(i, "b" + std::to_string(i), testutil::uniform(rng, 6)));
  for (auto e : a) {
    for (auto& v : e.vector) v *= 3.5;
    a_scaled.push_back(e);
  }
  for (auto e : b) {
    for (auto& v : e.vector) v *= 3.5;
    b_scaled.push_back(e);
  }
  auto ab = relatedness_matrix(a, b);
  auto ba = relatedness_matrix(b, a).transposed();
  auto scaled = relatedness_matrix(a_scaled, b_scaled);
  for (std::size_t j = 0; j < ab.rows(); ++j) {
    for (std::size_t i = 0; i < ab.cols(); ++i) {
      CHECK(std::abs(ab(j, i)) <= 1.0 + 1e-12);
      CHECK(ab(j, i) == doctest::Approx(ba(j, i)).epsilon(1e-14));
      CHECK(ab(j, i) == doctest::Approx(scaled(j, i)).epsilon(1e-12));
    }
  }
}
