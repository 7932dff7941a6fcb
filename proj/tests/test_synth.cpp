#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "errors.hpp"
#include "formats.hpp"
#include "label_embeddings.hpp"
#include "synth.hpp"
#include "zeroshot_eval.hpp"

using namespace rest::synth;

namespace {

std::vector<double> mean_frame(const rest::io::Instance& inst) {
  std::vector<double> m(inst.frames.front().size(), 0.0);
  for (const auto& f : inst.frames)
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += f[k] / static_cast<double>(inst.frames.size());
  return m;
}

}  // namespace

TEST_CASE("config validation") {
  SynthConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.num_seen = 1;
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
  bad = c;
  bad.num_unseen = 0;
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
  bad = c;
  bad.composition_degree = 1;
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
  bad = c;
  bad.composition_degree = 21;
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
  bad = c;
  bad.noise_sigma = -0.1;
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
  bad = c;
  bad.noise_sigma = std::nan("");
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
  bad = c;
  bad.num_seen = 4;
  bad.composition_degree = 2;
  bad.num_unseen = 7;  // C(4,2) = 6
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
  bad.num_unseen = 6;
  CHECK_NOTHROW(generate(bad));
}

TEST_CASE("token names sort in index order") {
  CHECK(seen_token(3, 20) == "act03");
  CHECK(seen_token(7, 150) == "act007");
  std::vector<std::string> t;
  for (std::size_t i = 0; i < 20; ++i) t.push_back(seen_token(i, 20));
  CHECK(std::is_sorted(t.begin(), t.end()));
  CHECK(rest::labels::tokenize_label(t[5]) == std::vector<std::string>{t[5]});
}

TEST_CASE("generation shape and determinism") {
  SynthConfig c;
  c.seed = 11;
  const auto a = generate(c);
  const auto b = generate(c);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.unseen_labels == b.unseen_labels);
  c.seed = 12;
  CHECK_FALSE(generate(c).train == a.train);

  CHECK(a.train.instances.size() == 20 * 16);
  CHECK(a.test.instances.size() == 8 * 16);
  CHECK(a.train.instances[0].frames.size() == 6);
  CHECK(a.train.instances[0].frames[0].size() == 16);
  CHECK(a.seen_vectors.size() == 20);

  std::set<std::vector<std::size_t>> subsets;
  for (std::size_t j = 0; j < a.anchors.size(); ++j) {
    CHECK(a.anchors[j].size() == 3);
    CHECK(std::is_sorted(a.anchors[j].begin(), a.anchors[j].end()));
    subsets.insert(a.anchors[j]);
    double w = 0.0;
    for (double x : a.weights[j]) w += x;
    CHECK(w == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(subsets.size() == a.anchors.size());
  for (const auto& u : a.unseen_labels) {
    CHECK(std::find(a.seen_labels.begin(), a.seen_labels.end(), u) == a.seen_labels.end());
  }
}

TEST_CASE("noiseless instances equal their class mean") {
  SynthConfig c;
  c.noise_sigma = 0.0;
  c.seed = 3;
  const auto d = generate(c);
  for (const auto& inst : d.train.instances)
    for (const auto& f : inst.frames) CHECK(f == d.seen_visual[inst.class_id]);
  for (const auto& inst : d.test.instances)
    for (const auto& f : inst.frames) CHECK(f == d.unseen_visual[inst.class_id]);
}

TEST_CASE("ground-truth composition classifies noiseless unseen instances perfectly") {
  SynthConfig c;
  c.noise_sigma = 0.0;
  c.seed = 4;
  const auto d = generate(c);
  std::vector<std::vector<double>> composed;
  for (std::size_t j = 0; j < d.anchors.size(); ++j) {
    std::vector<double> v(c.feature_dim, 0.0);
    for (std::size_t a = 0; a < d.anchors[j].size(); ++a)
      for (std::size_t k = 0; k < v.size(); ++k) v[k] += d.weights[j][a] * d.seen_visual[d.anchors[j][a]][k];
    for (std::size_t k = 0; k < v.size(); ++k) CHECK(v[k] == doctest::Approx(d.unseen_visual[j][k]).epsilon(1e-12));
    composed.push_back(std::move(v));
  }
  std::size_t correct = 0;
  for (const auto& inst : d.test.instances) {
    if (rest::eval::classify(mean_frame(inst), composed).front() == inst.class_id) ++correct;
  }
  CHECK(correct == d.test.instances.size());
}

TEST_CASE("noisy unseen instances stay closer to their anchors") {
  SynthConfig c;
  c.instances_per_class = 13;  // 8 classes × 13 > 100 draws
  c.seed = 5;
  const auto d = generate(c);
  std::size_t wins = 0, total = 0;
  for (const auto& inst : d.test.instances) {
    const auto x = mean_frame(inst);
    const auto& anchors = d.anchors[inst.class_id];
    for (std::size_t a : anchors) {
      for (std::size_t i = 0; i < c.num_seen; ++i) {
        if (std::find(anchors.begin(), anchors.end(), i) != anchors.end()) continue;
        ++total;
        if (rest::labels::cosine(x, d.seen_visual[a]) > rest::labels::cosine(x, d.seen_visual[i])) ++wins;
      }
    }
  }
  CHECK(static_cast<double>(wins) / static_cast<double>(total) > 0.9);
}

TEST_CASE("unseen label embeddings match the semantic mixture") {
  SynthConfig c;
  c.seed = 6;
  const auto d = generate(c);
  auto table = rest::labels::parse_word_vectors(vectors_text(d.unseen_vectors, c.label_dim));
  for (std::size_t j = 0; j < d.unseen_labels.size(); ++j) {
    const auto e = rest::labels::embed_label(table, d.unseen_labels[j]);
    for (std::size_t k = 0; k < c.label_dim; ++k) CHECK(e.vector[k] == doctest::Approx(d.unseen_semantic[j][k]).epsilon(1e-12));
  }
}

TEST_CASE("written files round-trip") {
  SynthConfig c;
  c.num_seen = 5;
  c.num_unseen = 3;
  c.instances_per_class = 2;
  c.seed = 8;
  const auto d = generate(c);
  const auto dir = std::filesystem::temp_directory_path() / "rest_test_synth";
  write(d, c, dir);
  CHECK(rest::io::load_dataset(dir / "train.json") == d.train);
  CHECK(rest::io::load_dataset(dir / "test.json") == d.test);
  CHECK(rest::labels::load_word_vectors(dir / "seen_vectors.txt").size() == 5);
  const auto truth = rest::io::read_json(dir / "truth.json");
  CHECK(truth.at("config").at("seed") == 8);
  CHECK(truth.at("unseen").size() == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset validation") {
  SynthConfig c;
  c.num_seen = 3;
  c.num_unseen = 1;
  c.instances_per_class = 1;
  const auto d = generate(c);
  auto doc = rest::io::to_json(d.train);
  CHECK(rest::io::dataset_from_json(doc) == d.train);

  auto out_of_range = doc;
  out_of_range["instances"][0]["class_id"] = 3;
  CHECK_THROWS_AS(rest::io::dataset_from_json(out_of_range), rest::FormatError);
  auto empty = doc;
  empty["instances"] = nlohmann::json::array();
  CHECK_THROWS_AS(rest::io::dataset_from_json(empty), rest::FormatError);
  auto ragged = doc;
  ragged["instances"][0]["frames"][0].push_back(1.0);
  CHECK_THROWS_AS(rest::io::dataset_from_json(ragged), rest::FormatError);
}
