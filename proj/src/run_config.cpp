#include "run_config.hpp"

#include <set>

#include "errors.hpp"
#include "formats.hpp"

namespace rest {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config " + name_ + "." + key + ": " + e.what());
    }
  }

  void read_size(const char* key, std::size_t& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_number_unsigned()) {
      throw ConfigError("config " + name_ + "." + key + " must be a non-negative integer");
    }
    out = it->get<std::size_t>();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig rc;
  static const std::set<std::string> top = {"seed", "encoder", "training", "transfer", "eval", "synth"};
  for (const auto& [key, value] : doc.items()) {
    if (!top.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!it->is_number_unsigned()) throw ConfigError("config seed must be a non-negative integer");
    rc.seed = it->get<std::uint64_t>();
  }

  if (auto it = doc.find("encoder"); it != doc.end()) {
    Section s(*it, "encoder");
    auto& e = rc.encoder;
    s.read_size("num_layers", e.num_layers);
    s.read_size("hidden_dim", e.hidden_dim);
    s.read_size("num_heads", e.num_heads);
    s.read_size("mlp_dim", e.mlp_dim);
    std::string scheme = attention::to_string(e.attention_scheme);
    s.read("attention_scheme", scheme);
    e.attention_scheme = attention::parse_scheme(scheme);
    std::string mode = model::to_string(e.loss_mode);
    s.read("loss_mode", mode);
    e.loss_mode = model::parse_loss_mode(mode);
    s.read("omega_mtl", e.omega_mtl);
    s.read("mask_prob", e.mask_prob);
    s.finish();
  }
  if (auto it = doc.find("training"); it != doc.end()) {
    Section s(*it, "training");
    auto& t = rc.training;
    std::string opt = model::to_string(t.optimizer);
    s.read("optimizer", opt);
    t.optimizer = model::parse_optimizer(opt);
    s.read("learning_rate", t.learning_rate);
    s.read("weight_decay", t.weight_decay);
    s.read_size("epochs", t.epochs);
    s.read_size("batch_size", t.batch_size);
    s.read("cosine_schedule", t.cosine_schedule);
    s.finish();
    t.validate();
  }
  if (auto it = doc.find("transfer"); it != doc.end()) {
    Section s(*it, "transfer");
    auto& t = rc.transfer;
    s.read("theta", t.params.theta);
    s.read_size("k", t.params.k);
    s.read_size("rho", t.params.rho);
    s.read("cv", t.cv);
    s.read_size("folds", t.folds);
    s.finish();
  }
  if (auto it = doc.find("eval"); it != doc.end()) {
    Section s(*it, "eval");
    auto& e = rc.eval;
    s.read("fraction", e.fraction);
    s.read_size("splits", e.splits);
    s.read_size("hubness_k", e.hubness_k);
    s.finish();
  }
  if (auto it = doc.find("synth"); it != doc.end()) {
    Section s(*it, "synth");
    auto& c = rc.synth;
    s.read_size("num_seen", c.num_seen);
    s.read_size("num_unseen", c.num_unseen);
    s.read_size("instances_per_class", c.instances_per_class);
    s.read_size("frames", c.frames);
    s.read_size("feature_dim", c.feature_dim);
    s.read_size("label_dim", c.label_dim);
    s.read_size("composition_degree", c.composition_degree);
    s.read("noise_sigma", c.noise_sigma);
    s.finish();
    c.validate();
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return parse_run_config(io::read_json(path));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

std::uint64_t resolve_seed(const RunConfig& config, const std::optional<std::uint64_t>& override_seed,
                           const std::string& command) {
  if (override_seed) return *override_seed;
  if (config.seed) return *config.seed;
  throw ConfigError(command + " requires a seed (--seed or config \"seed\")");
}

}  // namespace rest
