#include "rest/rest.h"

#include <cstring>
#include <exception>
#include <new>
#include <optional>
#include <string>

#include "attention.hpp"
#include "checkpoint.hpp"
#include "errors.hpp"
#include "formats.hpp"
#include "label_embeddings.hpp"
#include "pipeline.hpp"
#include "run_config.hpp"
#include "synth.hpp"
#include "transfer.hpp"
#include "zeroshot_eval.hpp"

struct rest_model {
  rest::model::Model model;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_warnings;

template <typename F>
rest_status guarded(F&& body) {
  g_last_error.clear();
  g_last_warnings.clear();
  try {
    body();
    return REST_OK;
  } catch (const rest::Error& e) {
    g_last_error = e.what();
    return static_cast<rest_status>(static_cast<int>(e.kind()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return REST_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
  if (!p) throw rest::InvalidArgument(std::string(what) + " must not be NULL");
}

std::optional<std::uint64_t> opt_seed(const std::uint64_t* seed) {
  if (!seed) return std::nullopt;
  return *seed;
}

rest::RunConfig config_or_default(const char* path) {
  return path ? rest::load_run_config(path) : rest::RunConfig{};
}

void warn(const std::string& w) {
  g_last_warnings += w;
  g_last_warnings += '\n';
}

}  // namespace

extern "C" {

const char* rest_last_error(void) { return g_last_error.c_str(); }
const char* rest_last_warnings(void) { return g_last_warnings.c_str(); }
const char* rest_version(void) { return "0.1.0"; }

const char* rest_status_name(rest_status status) {
  switch (status) {
    case REST_OK: return "ok";
    case REST_ERR_INVALID_ARGUMENT: return "invalid argument";
    case REST_ERR_DIMENSION: return "dimension error";
    case REST_ERR_FORMAT: return "format error";
    case REST_ERR_IO: return "i/o error";
    case REST_ERR_CONFIG: return "config error";
    case REST_ERR_NUMERIC: return "numeric error";
    case REST_ERR_CONTRACT: return "contract violation";
    case REST_ERR_VALIDATION: return "validation error";
    case REST_ERR_INDEX: return "index error";
    case REST_ERR_COVERAGE: return "coverage error";
    case REST_ERR_DISJOINTNESS: return "disjointness error";
    case REST_ERR_SCALE: return "scale error";
    case REST_ERR_COMPOSITION: return "composition error";
    case REST_ERR_FOLD: return "fold error";
    case REST_ERR_PROTOCOL: return "protocol error";
    case REST_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

rest_status rest_synth_generate(const char* config_path, const uint64_t* seed, const char* out_dir) {
  return guarded([&] {
    require(out_dir, "out_dir");
    auto rc = config_or_default(config_path);
    auto sc = rc.synth;
    sc.seed = rest::resolve_seed(rc, opt_seed(seed), "synth");
    rest::synth::write(rest::synth::generate(sc), sc, out_dir);
  });
}

rest_status rest_embed_labels(const char* vectors_path, const char* labels_path, const char* out_path) {
  return guarded([&] {
    require(vectors_path, "vectors_path");
    require(labels_path, "labels_path");
    require(out_path, "out_path");
    const auto table = rest::labels::load_word_vectors(vectors_path);
    for (const auto& w : table.warnings()) warn(w);
    const auto labels = rest::labels::load_label_list(labels_path);
    const auto emb = rest::labels::embed_labels(table, labels);
    for (const auto& e : emb) {
      if (e.covered_tokens < e.total_tokens) {
        warn("label '" + e.label_text + "': " + std::to_string(e.total_tokens - e.covered_tokens) + " of " +
             std::to_string(e.total_tokens) + " tokens out of vocabulary");
      }
    }
    rest::io::write_json(out_path, rest::io::embeddings_to_json(emb));
  });
}

rest_status rest_model_train(const char* data_path, const char* config_path, const uint64_t* seed,
                             const char* log_path, rest_epoch_callback on_epoch, void* user,
                             rest_model** out_model) {
  return guarded([&] {
    require(data_path, "data_path");
    require(out_model, "out_model");
    *out_model = nullptr;
    const auto rc = config_or_default(config_path);
    const auto s = rest::resolve_seed(rc, opt_seed(seed), "train");
    const auto data = rest::io::load_dataset(data_path);
    rest::model::EpochCallback cb;
    if (on_epoch) {
      cb = [&](const rest::model::EpochLog& e) {
        on_epoch(e.epoch, e.loss_cls, e.loss_mtl, e.loss_total, e.train_top1, user);
      };
    }
    auto trained = rest::pipeline::train_model(data, rc, s, cb);
    if (log_path) rest::model::write_training_log(log_path, trained.log);
    *out_model = new rest_model{std::move(trained.model)};
  });
}

rest_status rest_model_load(const char* path, rest_model** out_model) {
  return guarded([&] {
    require(path, "path");
    require(out_model, "out_model");
    *out_model = nullptr;
    *out_model = new rest_model{rest::model::load_checkpoint(path)};
  });
}

rest_status rest_model_save(const rest_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    rest::model::save_checkpoint(model->model, path);
  });
}

void rest_model_free(rest_model* model) { delete model; }

size_t rest_model_hidden_dim(const rest_model* model) { return model ? model->model.config.hidden_dim : 0; }

size_t rest_model_parameter_count(const rest_model* model) {
  return model ? model->model.params.parameter_count() : 0;
}

rest_status rest_model_represent(const rest_model* model, const double* frames, size_t t, size_t p,
                                 double* out, size_t out_len) {
  return guarded([&] {
    require(model, "model");
    require(frames, "frames");
    require(out, "out");
    const auto& m = model->model;
    if (p != m.config.input_feature_dim) throw rest::DimensionError("frame dimension differs from the model's");
    if (out_len < m.config.hidden_dim) throw rest::DimensionError("output buffer smaller than hidden_dim");
    if (t == 0) throw rest::DimensionError("no frames");
    auto x = rest::model::represent(m.params, m.config, m.vocab,
                                    rest::tensor::Tensor::matrix(t, p, std::vector<double>(frames, frames + t * p)));
    std::copy(x.begin(), x.end(), out);
  });
}

rest_status rest_model_represent_dataset(const rest_model* model, const char* data_path, const char* out_path) {
  return guarded([&] {
    require(model, "model");
    require(data_path, "data_path");
    require(out_path, "out_path");
    const auto reps = rest::pipeline::represent_dataset(model->model, rest::io::load_dataset(data_path));
    rest::io::write_json(out_path, rest::io::to_json(reps));
  });
}

rest_status rest_model_head_accuracy(const rest_model* model, const char* data_path, double* out) {
  return guarded([&] {
    require(model, "model");
    require(data_path, "data_path");
    require(out, "out");
    *out = rest::pipeline::head_accuracy(model->model, rest::io::load_dataset(data_path));
  });
}

rest_status rest_build_prototypes(const char* reps_path, const char* out_path) {
  return guarded([&] {
    require(reps_path, "reps_path");
    require(out_path, "out_path");
    const auto protos = rest::transfer::build_seen_prototypes(rest::io::load_representations(reps_path));
    rest::io::write_json(out_path, rest::io::to_json(protos));
  });
}

void rest_transfer_options_init(rest_transfer_options* o) {
  if (o) *o = rest_transfer_options{};
}

rest_status rest_transfer(const char* protos_path, const char* seen_emb_path, const char* unseen_emb_path,
                          const rest_transfer_options* options, const char* out_path) {
  return guarded([&] {
    require(protos_path, "protos_path");
    require(seen_emb_path, "seen_emb_path");
    require(unseen_emb_path, "unseen_emb_path");
    require(out_path, "out_path");
    rest_transfer_options o{};
    if (options) o = *options;
    const auto rc = config_or_default(o.config_path);

    rest::pipeline::TransferRequest req;
    req.params = rc.transfer.params;
    req.cv = rc.transfer.cv || o.cv != 0;
    req.folds = o.folds ? o.folds : rc.transfer.folds;
    const bool fixed = o.theta > 0.0 || o.k || o.rho;
    if (o.theta > 0.0) req.params.theta = o.theta;
    if (o.k) req.params.k = o.k;
    if (o.rho) req.params.rho = o.rho;
    if (o.cv && fixed) throw rest::ConfigError("fixed transfer parameters conflict with cross-validation");
    if (!req.cv && (o.grid_path || o.seen_reps_path)) {
      throw rest::ConfigError("a grid or seen representations only apply with cross-validation");
    }
    std::optional<rest::io::RepresentationSet> seen_reps;
    if (req.cv) {
      if (!o.seen_reps_path) throw rest::ConfigError("cross-validation needs seen training representations");
      seen_reps = rest::io::load_representations(o.seen_reps_path);
      req.seen_reps = &*seen_reps;
      req.seed = rest::resolve_seed(rc, opt_seed(o.seed), "transfer --cv");
      if (o.grid_path) req.grid = rest::pipeline::grid_from_json(rest::io::read_json(o.grid_path));
    }
    const auto stage = rest::pipeline::run_transfer_stage(rest::io::load_prototypes(protos_path),
                                                          rest::io::load_embeddings(seen_emb_path),
                                                          rest::io::load_embeddings(unseen_emb_path), req);
    for (std::size_t j = 0; j < stage.outcome.prototypes.rows.size(); ++j) {
      if (stage.outcome.prototypes.rows[j].fallback) {
        warn("unseen class '" + stage.unseen[j].label_text + "' selected no seen class; using its nearest");
      }
    }
    rest::io::write_json(out_path, rest::pipeline::transfer_to_json(stage));
  });
}

void rest_eval_options_init(rest_eval_options* o) {
  if (o) *o = rest_eval_options{};
}

rest_status rest_evaluate(const char* reps_path, const char* transfer_path, const rest_eval_options* options,
                          const char* out_path, double* mean_top1, double* mean_skewness) {
  return guarded([&] {
    require(reps_path, "reps_path");
    require(transfer_path, "transfer_path");
    require(out_path, "out_path");
    rest_eval_options o{};
    if (options) o = *options;
    const auto rc = config_or_default(o.config_path);
    rest::eval::ProtocolOptions po;
    po.fraction = o.fraction > 0.0 ? o.fraction : rc.eval.fraction;
    po.num_splits = o.splits ? o.splits : rc.eval.splits;
    po.hubness_k = o.hubness_k ? o.hubness_k : rc.eval.hubness_k;
    po.seed = rest::resolve_seed(rc, opt_seed(o.seed), "eval");
    po.method = o.baseline ? rest::eval::Method::kSeenLabel : rest::eval::Method::kTransfer;
    const auto format = rest::eval::parse_report_format(o.format ? o.format : "json");

    const auto test = rest::io::load_representations(reps_path);
    const auto ctx = rest::pipeline::transfer_context_from_json(rest::io::read_json(transfer_path));
    auto params = ctx.params;
    if (o.theta > 0.0) params.theta = o.theta;
    if (o.k) params.k = o.k;
    if (o.rho) params.rho = o.rho;
    const auto report = rest::pipeline::evaluate(test, ctx, params, po);
    rest::eval::emit_report(report, out_path, format);
    if (mean_top1) *mean_top1 = report.mean_top1;
    if (mean_skewness) *mean_skewness = report.hubness.skewness;
  });
}

rest_status rest_hubness(const char* reps_path, const char* protos_path, size_t k, const char* out_path,
                         double* skewness) {
  return guarded([&] {
    require(reps_path, "reps_path");
    require(protos_path, "protos_path");
    const auto reps = rest::io::load_representations(reps_path);
    const auto protos = rest::io::load_prototypes(protos_path);
    std::vector<std::vector<double>> samples, anchors;
    std::vector<int> ids;
    for (const auto& r : reps.instances) samples.push_back(r.vector);
    for (const auto& p : protos.entries) {
      anchors.push_back(p.vector);
      ids.push_back(p.class_id);
    }
    const auto h = rest::eval::hubness(samples, anchors, k);
    if (out_path) {
      rest::io::write_json(out_path, {{"k", h.k}, {"class_ids", ids}, {"psi", h.psi}, {"skewness", h.skewness}});
    }
    if (skewness) *skewness = h.skewness;
  });
}

rest_status rest_mask_dump(size_t t, size_t words, const char* scheme, char* buf, size_t cap, size_t* written) {
  return guarded([&] {
    require(scheme, "scheme");
    rest::attention::SequenceLayout layout{t, words};
    const auto mask = rest::attention::build_mask(layout, rest::attention::parse_scheme(scheme));
    rest::attention::validate_mask(mask, layout);
    const std::string text = rest::attention::render(mask);
    if (written) *written = text.size();
    if (!buf) return;
    if (cap < text.size() + 1) throw rest::InvalidArgument("buffer too small for the mask grid");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

}  // extern "C"
