#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "errors.hpp"

namespace rest::synth {

using nlohmann::json;

namespace {

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double sigma) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = sigma * dist(rng);
  return v;
}

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

io::Instance make_instance(std::mt19937_64& rng, const std::string& id, std::size_t class_id,
                           const std::vector<double>& mean, std::size_t frames, double sigma) {
  io::Instance inst;
  inst.id = id;
  inst.class_id = class_id;
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<double> f = mean;
    // noise_sigma = 0 draws nothing, so noiseless frames equal the mean exactly.
    if (sigma > 0.0) {
      for (auto& x : f) x += sigma * dist(rng);
    }
    inst.frames.push_back(std::move(f));
  }
  return inst;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_seen < 2) throw ConfigError("synth: num_seen must be >= 2");
  if (num_unseen < 1) throw ConfigError("synth: num_unseen must be >= 1");
  if (instances_per_class < 1) throw ConfigError("synth: instances_per_class must be >= 1");
  if (frames < 1) throw ConfigError("synth: frames must be >= 1");
  if (feature_dim < 1 || label_dim < 1) throw ConfigError("synth: dimensions must be >= 1");
  if (composition_degree < 2 || composition_degree > num_seen) {
    throw ConfigError("synth: composition_degree must lie in [2, num_seen]");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("synth: noise_sigma must be finite and >= 0");
  }
  if (static_cast<double>(num_unseen) > binomial(num_seen, composition_degree)) {
    throw ConfigError("synth: not enough distinct anchor subsets for num_unseen classes");
  }
}

std::string seen_token(std::size_t index, std::size_t num_seen) {
  const std::size_t width = std::max<std::size_t>(2, std::to_string(num_seen - 1).size());
  std::string digits = std::to_string(index);
  return "act" + std::string(width - digits.size(), '0') + digits;
}

SynthData generate(const SynthConfig& c) {
  c.validate();
  std::mt19937_64 rng(c.seed);
  SynthData d;

  for (std::size_t i = 0; i < c.num_seen; ++i) {
    auto s = gaussian(rng, c.label_dim, 1.0);
    const double n = std::sqrt(std::inner_product(s.begin(), s.end(), s.begin(), 0.0));
    for (auto& x : s) x /= n;
    d.seen_semantic.push_back(std::move(s));
    d.seen_visual.push_back(gaussian(rng, c.feature_dim, 1.0));
    d.seen_labels.push_back(seen_token(i, c.num_seen));
    d.seen_vectors.emplace_back(d.seen_labels.back(), d.seen_semantic.back());
  }

  std::set<std::vector<std::size_t>> used;
  std::vector<std::size_t> pool(c.num_seen);
  std::set<std::size_t> unseen_tokens;
  while (d.anchors.size() < c.num_unseen) {
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::size_t> pick(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(c.composition_degree));
    std::sort(pick.begin(), pick.end());
    if (!used.insert(pick).second) continue;

    const double w = 1.0 / static_cast<double>(pick.size());
    std::vector<double> sem(c.label_dim, 0.0), vis(c.feature_dim, 0.0);
    std::string label;
    for (std::size_t a : pick) {
      for (std::size_t k = 0; k < c.label_dim; ++k) sem[k] += w * d.seen_semantic[a][k];
      for (std::size_t k = 0; k < c.feature_dim; ++k) vis[k] += w * d.seen_visual[a][k];
      if (!label.empty()) label += ' ';
      label += d.seen_labels[a];
      unseen_tokens.insert(a);
    }
    d.anchors.push_back(pick);
    d.weights.emplace_back(pick.size(), w);
    d.unseen_semantic.push_back(std::move(sem));
    d.unseen_visual.push_back(std::move(vis));
    d.unseen_labels.push_back(std::move(label));
  }
  for (std::size_t a : unseen_tokens) d.unseen_vectors.emplace_back(d.seen_labels[a], d.seen_semantic[a]);

  d.train.feature_dim = c.feature_dim;
  d.train.labels = d.seen_labels;
  for (std::size_t i = 0; i < c.num_seen; ++i) {
    for (std::size_t n = 0; n < c.instances_per_class; ++n) {
      d.train.instances.push_back(make_instance(rng, "seen_" + std::to_string(i) + "_" + std::to_string(n),
                                                i, d.seen_visual[i], c.frames, c.noise_sigma));
    }
  }
  d.test.feature_dim = c.feature_dim;
  d.test.labels = d.unseen_labels;
  for (std::size_t j = 0; j < c.num_unseen; ++j) {
    for (std::size_t n = 0; n < c.instances_per_class; ++n) {
      d.test.instances.push_back(make_instance(rng,
                                               "unseen_" + std::to_string(j) + "_" + std::to_string(n), j,
                                               d.unseen_visual[j], c.frames, c.noise_sigma));
    }
  }
  return d;
}

json config_to_json(const SynthConfig& c) {
  return {{"num_seen", c.num_seen},
          {"num_unseen", c.num_unseen},
          {"instances_per_class", c.instances_per_class},
          {"frames", c.frames},
          {"feature_dim", c.feature_dim},
          {"label_dim", c.label_dim},
          {"composition_degree", c.composition_degree},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed}};
}

json truth_to_json(const SynthData& d) {
  json unseen = json::array();
  for (std::size_t j = 0; j < d.anchors.size(); ++j) {
    unseen.push_back({{"class_id", j},
                      {"label", d.unseen_labels[j]},
                      {"anchors", d.anchors[j]},
                      {"weights", d.weights[j]},
                      {"visual_mean", d.unseen_visual[j]}});
  }
  json seen = json::array();
  for (std::size_t i = 0; i < d.seen_labels.size(); ++i) {
    seen.push_back({{"class_id", i}, {"label", d.seen_labels[i]}, {"visual_mean", d.seen_visual[i]}});
  }
  return {{"seen", std::move(seen)}, {"unseen", std::move(unseen)}};
}

std::string vectors_text(const std::vector<VectorEntry>& entries, std::size_t dim) {
  std::string out = std::to_string(entries.size()) + " " + std::to_string(dim) + "\n";
  for (const auto& [token, v] : entries) {
    out += token;
    for (double x : v) out += " " + format_real(x);
    out += "\n";
  }
  return out;
}

std::string labels_text(const std::vector<std::string>& labels) {
  std::string out;
  for (const auto& l : labels) out += l + "\n";
  return out;
}

void write(const SynthData& d, const SynthConfig& c, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  io::save_dataset(d.train, dir / "train.json");
  io::save_dataset(d.test, dir / "test.json");
  io::write_text(dir / "seen_labels.txt", labels_text(d.seen_labels));
  io::write_text(dir / "unseen_labels.txt", labels_text(d.unseen_labels));
  io::write_text(dir / "seen_vectors.txt", vectors_text(d.seen_vectors, c.label_dim));
  io::write_text(dir / "unseen_vectors.txt", vectors_text(d.unseen_vectors, c.label_dim));
  json truth = truth_to_json(d);
  truth["config"] = config_to_json(c);
  io::write_json(dir / "truth.json", truth);
}

}  // namespace rest::synth
