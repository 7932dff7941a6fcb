#include "pipeline.hpp"

#include <algorithm>
#include <map>

#include "errors.hpp"

namespace rest::pipeline {

using nlohmann::json;

model::EncoderConfig encoder_config_for(const io::Dataset& data, const model::EncoderConfig& base,
                                        const model::Vocabulary& vocab, std::uint64_t seed) {
  if (data.instances.empty()) throw FormatError("training dataset has no instances");
  model::EncoderConfig c = base;
  c.input_feature_dim = data.feature_dim;
  c.vocab_size = vocab.size();
  c.num_seen_classes = data.labels.size();
  c.max_visual_len = 0;
  for (const auto& inst : data.instances) c.max_visual_len = std::max(c.max_visual_len, inst.frames.size());
  c.max_word_len = 1;
  for (const auto& label : data.labels) c.max_word_len = std::max(c.max_word_len, vocab.encode(label).size());
  c.seed = seed;
  c.validate();
  return c;
}

std::vector<model::TrainingItem> training_items(const io::Dataset& data, const model::Vocabulary& vocab) {
  std::vector<std::vector<std::size_t>> words;
  for (const auto& label : data.labels) words.push_back(vocab.encode(label));
  std::vector<model::TrainingItem> items;
  items.reserve(data.instances.size());
  for (const auto& inst : data.instances) {
    items.push_back({inst.id, inst.class_id, model::frames_tensor(inst.frames), words[inst.class_id]});
  }
  return items;
}

TrainedModel train_model(const io::Dataset& data, const RunConfig& config, std::uint64_t seed,
                         const model::EpochCallback& on_epoch) {
  TrainedModel out;
  out.model.vocab = model::Vocabulary::build(data.labels);
  out.model.config = encoder_config_for(data, config.encoder, out.model.vocab, seed);
  config.training.validate();
  const auto items = training_items(data, out.model.vocab);
  auto result = model::train(model::init_params(out.model.config), out.model.config, out.model.vocab, items,
                             config.training, on_epoch);
  out.model.params = std::move(result.params);
  out.log = std::move(result.log);
  return out;
}

io::RepresentationSet represent_dataset(const model::Model& m, const io::Dataset& data) {
  if (data.feature_dim != m.config.input_feature_dim) {
    throw DimensionError("dataset feature_dim " + std::to_string(data.feature_dim) +
                         " differs from the model's " + std::to_string(m.config.input_feature_dim));
  }
  io::RepresentationSet reps;
  reps.dim = m.config.hidden_dim;
  reps.labels = data.labels;
  for (const auto& inst : data.instances) {
    reps.instances.push_back(
        {inst.id, inst.class_id, model::represent(m.params, m.config, m.vocab, model::frames_tensor(inst.frames))});
  }
  return reps;
}

double head_accuracy(const model::Model& m, const io::Dataset& data) {
  if (data.instances.empty()) return 0.0;
  std::size_t correct = 0;
  const std::size_t mask_only[] = {m.vocab.mask_id()};
  for (const auto& inst : data.instances) {
    tensor::Tape tape(false);
    const auto r = model::forward(m.params, m.config, m.vocab, tape, model::frames_tensor(inst.frames), mask_only);
    const auto logits = r.cls_logits.values();
    const auto best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (best == inst.class_id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.instances.size());
}

SeenContext align_seen(const io::PrototypeSet& prototypes,
                       const std::vector<labels::LabelEmbedding>& seen_embeddings) {
  std::map<int, const labels::LabelEmbedding*> by_id;
  for (const auto& e : seen_embeddings) by_id[e.class_id] = &e;
  SeenContext ctx;
  for (const auto& p : prototypes.entries) {
    auto it = by_id.find(p.class_id);
    if (it == by_id.end()) {
      throw FormatError("seen prototype class " + std::to_string(p.class_id) + " ('" + p.label +
                        "') has no label embedding");
    }
    if (!p.label.empty() && p.label != it->second->label_text) {
      throw FormatError("seen class " + std::to_string(p.class_id) + ": prototype label '" + p.label +
                        "' differs from embedding label '" + it->second->label_text + "'");
    }
    ctx.embeddings.push_back(*it->second);
    ctx.prototypes.push_back(p.vector);
    ctx.class_ids.push_back(p.class_id);
  }
  if (ctx.embeddings.empty()) throw FormatError("no seen prototypes");
  return ctx;
}

TransferStage run_transfer_stage(const io::PrototypeSet& seen_prototypes,
                                 const std::vector<labels::LabelEmbedding>& seen_embeddings,
                                 const std::vector<labels::LabelEmbedding>& unseen_embeddings,
                                 const TransferRequest& request) {
  TransferStage stage;
  stage.seen = align_seen(seen_prototypes, seen_embeddings);
  stage.unseen = unseen_embeddings;
  if (stage.unseen.empty()) throw FormatError("no unseen label embeddings");
  stage.params = request.params;
  if (request.cv) {
    if (!request.seen_reps) throw ConfigError("cross-validation needs seen training representations");
    std::map<int, std::size_t> index;
    for (std::size_t i = 0; i < stage.seen.class_ids.size(); ++i) index[stage.seen.class_ids[i]] = i;
    std::vector<std::vector<double>> vectors;
    std::vector<std::size_t> classes;
    for (const auto& r : request.seen_reps->instances) {
      auto it = index.find(static_cast<int>(r.class_id));
      if (it == index.end()) continue;
      vectors.push_back(r.vector);
      classes.push_back(it->second);
    }
    const auto grid = request.grid.empty() ? transfer::default_grid() : request.grid;
    stage.cv = transfer::cv_select_params(stage.seen.embeddings, stage.seen.prototypes, vectors, classes, grid,
                                          request.folds, request.seed);
    stage.params = stage.cv->best;
  }
  stage.params.validate(stage.seen.embeddings.size());
  stage.outcome = transfer::run_transfer(stage.unseen, stage.seen.embeddings, stage.seen.prototypes, stage.params);
  return stage;
}

namespace {

json params_json(const transfer::TransferParams& p) {
  return {{"theta", p.theta}, {"k", p.k}, {"rho", p.rho}};
}

transfer::TransferParams params_from(const json& j) {
  try {
    return {j.at("theta").get<double>(), j.at("k").get<std::size_t>(), j.at("rho").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw FormatError(std::string("transfer parameters: ") + e.what());
  }
}

}  // namespace

json transfer_to_json(const TransferStage& s) {
  io::PrototypeSet composite;
  composite.dim = s.seen.prototypes.front().size();
  json rows = json::array();
  for (std::size_t j = 0; j < s.unseen.size(); ++j) {
    const auto& row = s.outcome.prototypes.rows[j];
    json selected = json::array();
    for (const auto& e : row.selected) {
      selected.push_back({{"seen_id", s.seen.class_ids[e.seen_index]},
                          {"seen_label", s.seen.embeddings[e.seen_index].label_text},
                          {"m", e.m},
                          {"weight", e.weight}});
    }
    rows.push_back({{"unseen_id", s.unseen[j].class_id},
                    {"label", s.unseen[j].label_text},
                    {"fallback", row.fallback},
                    {"selected", std::move(selected)}});
    composite.entries.push_back({s.unseen[j].class_id, s.unseen[j].label_text, row.vector, 0});
  }
  io::PrototypeSet seen_set;
  seen_set.dim = composite.dim;
  for (std::size_t i = 0; i < s.seen.prototypes.size(); ++i) {
    seen_set.entries.push_back({s.seen.class_ids[i], s.seen.embeddings[i].label_text, s.seen.prototypes[i], 0});
  }
  json doc = {{"params", params_json(s.params)},
              {"objective", s.outcome.adjacency.objective},
              {"rows", std::move(rows)},
              {"prototypes", io::to_json(composite)},
              {"context",
               {{"seen_prototypes", io::to_json(seen_set)},
                {"seen_embeddings", io::embeddings_to_json(s.seen.embeddings)},
                {"unseen_embeddings", io::embeddings_to_json(s.unseen)}}}};
  if (s.cv) {
    json table = json::array();
    for (const auto& r : s.cv->table) {
      table.push_back({{"theta", r.params.theta}, {"k", r.params.k}, {"rho", r.params.rho}, {"fold", r.fold},
                       {"top1", r.top1}});
    }
    doc["cv"] = {{"best", params_json(s.cv->best)},
                 {"best_accuracy", s.cv->best_accuracy},
                 {"mean_accuracy", s.cv->mean_accuracy},
                 {"folds", std::move(table)}};
  }
  return doc;
}

TransferContext transfer_context_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("params") || !doc.contains("context")) {
    throw FormatError("transfer document lacks 'params' or 'context'");
  }
  const json& ctx = doc["context"];
  for (const char* key : {"seen_prototypes", "seen_embeddings", "unseen_embeddings"}) {
    if (!ctx.contains(key)) throw FormatError(std::string("transfer context lacks '") + key + "'");
  }
  TransferContext out;
  out.params = params_from(doc["params"]);
  const auto seen = align_seen(io::prototypes_from_json(ctx["seen_prototypes"]),
                               io::embeddings_from_json(ctx["seen_embeddings"]));
  out.seen_embeddings = seen.embeddings;
  out.seen_prototypes = seen.prototypes;
  out.unseen_embeddings = io::embeddings_from_json(ctx["unseen_embeddings"]);
  return out;
}

std::vector<transfer::TransferParams> grid_from_json(const json& doc) {
  std::vector<transfer::TransferParams> grid;
  try {
    if (doc.is_array()) {
      for (const auto& p : doc) grid.push_back(params_from(p));
    } else if (doc.is_object()) {
      for (const auto& [key, value] : doc.items()) {
        if (key != "theta" && key != "k" && key != "rho") throw ConfigError("unknown grid key '" + key + "'");
      }
      const auto thetas = doc.at("theta").get<std::vector<double>>();
      const auto ks = doc.at("k").get<std::vector<std::size_t>>();
      const auto rhos = doc.at("rho").get<std::vector<std::size_t>>();
      for (double t : thetas)
        for (std::size_t k : ks)
          for (std::size_t r : rhos) grid.push_back({t, k, r});
    } else {
      throw ConfigError("grid must be an object of value lists or an array of points");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  if (grid.empty()) throw ConfigError("grid is empty");
  return grid;
}

eval::EvalReport evaluate(const io::RepresentationSet& test, const TransferContext& context,
                          const transfer::TransferParams& params, const eval::ProtocolOptions& options) {
  eval::ProtocolInputs in;
  in.test = &test;
  in.unseen_embeddings = context.unseen_embeddings;
  in.seen_embeddings = context.seen_embeddings;
  in.seen_prototypes = context.seen_prototypes;
  return eval::run_split_protocol(in, params, options);
}

}  // namespace rest::pipeline
