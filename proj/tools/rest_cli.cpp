// rest: command-line driver for the zero-shot pipeline.
//
//   synth -> train -> represent -> prototypes -> embed-labels -> transfer -> eval

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rest/rest.h"

namespace {

int report(rest_status status, const std::string& command) {
  const std::string warnings = rest_last_warnings();
  if (!warnings.empty()) std::cerr << warnings;
  if (status == REST_OK) return 0;
  std::cerr << "rest " << command << ": " << rest_status_name(status) << ": " << rest_last_error() << "\n";
  return 1;
}

const std::uint64_t* seed_ptr(const std::optional<std::uint64_t>& seed) { return seed ? &*seed : nullptr; }

const char* c_str_or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void print_epoch(size_t epoch, double loss_cls, double loss_mtl, double loss_total, double top1, void*) {
  std::fprintf(stderr, "epoch %4zu  cls %.4f  mtl %.4f  total %.4f  top1 %.3f\n", epoch, loss_cls, loss_mtl,
               loss_total, top1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot action recognition: cross-modal encoder, semantic transfer, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rest_version());
  int exit_code = 0;

  // synth
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "Generate a compositional synthetic dataset");
  synth->add_option("--config", synth_config, "Run configuration JSON (synth section, seed)")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Random seed (overrides the config)");
  synth->callback([&] {
    exit_code = report(rest_synth_generate(c_str_or_null(synth_config), seed_ptr(synth_seed), synth_out.c_str()),
                       "synth");
  });

  // embed-labels
  std::string emb_vectors, emb_labels, emb_out;
  auto* embed = app.add_subcommand("embed-labels", "Average word vectors into one embedding per label");
  embed->add_option("--vectors", emb_vectors, "Word-vector text file")->required()->check(CLI::ExistingFile);
  embed->add_option("--labels", emb_labels, "Label list, one per line")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", emb_out, "Label-embedding JSON")->required();
  embed->callback([&] {
    exit_code = report(rest_embed_labels(emb_vectors.c_str(), emb_labels.c_str(), emb_out.c_str()), "embed-labels");
  });

  // train
  std::string train_data, train_config, train_out, train_log;
  std::optional<std::uint64_t> train_seed;
  bool train_quiet = false;
  auto* train = app.add_subcommand("train", "Train the encoder on seen classes");
  train->add_option("--data", train_data, "Training dataset JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--config", train_config, "Run configuration JSON (encoder, training, seed)")
      ->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--log", train_log, "Per-epoch training log CSV");
  train->add_option("--seed", train_seed, "Random seed (overrides the config)");
  train->add_flag("--quiet", train_quiet, "Do not print per-epoch progress");
  train->callback([&] {
    rest_model* model = nullptr;
    rest_status st = rest_model_train(train_data.c_str(), c_str_or_null(train_config), seed_ptr(train_seed),
                                      c_str_or_null(train_log), train_quiet ? nullptr : print_epoch, nullptr,
                                      &model);
    if (st == REST_OK) st = rest_model_save(model, train_out.c_str());
    rest_model_free(model);
    exit_code = report(st, "train");
  });

  // represent
  std::string rep_model, rep_data, rep_out;
  auto* represent = app.add_subcommand("represent", "Encode every instance of a dataset");
  represent->add_option("--model", rep_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  represent->add_option("--data", rep_data, "Dataset JSON")->required()->check(CLI::ExistingFile);
  represent->add_option("--out", rep_out, "Representation JSON")->required();
  represent->callback([&] {
    rest_model* model = nullptr;
    rest_status st = rest_model_load(rep_model.c_str(), &model);
    if (st == REST_OK) st = rest_model_represent_dataset(model, rep_data.c_str(), rep_out.c_str());
    rest_model_free(model);
    exit_code = report(st, "represent");
  });

  // prototypes
  std::string proto_reps, proto_out;
  auto* prototypes = app.add_subcommand("prototypes", "Mean representation per class");
  prototypes->add_option("--reps", proto_reps, "Representation JSON")->required()->check(CLI::ExistingFile);
  prototypes->add_option("--out", proto_out, "Prototype JSON")->required();
  prototypes->callback([&] {
    exit_code = report(rest_build_prototypes(proto_reps.c_str(), proto_out.c_str()), "prototypes");
  });

  // transfer
  std::string tr_protos, tr_seen, tr_unseen, tr_out, tr_config, tr_grid, tr_seen_reps;
  double tr_theta = 0.0;
  std::size_t tr_k = 0, tr_rho = 0, tr_folds = 0;
  bool tr_cv = false;
  std::optional<std::uint64_t> tr_seed;
  auto* transfer = app.add_subcommand("transfer", "Composite unseen prototypes from related seen classes");
  transfer->add_option("--protos", tr_protos, "Seen prototype JSON")->required()->check(CLI::ExistingFile);
  transfer->add_option("--seen-emb", tr_seen, "Seen label embeddings")->required()->check(CLI::ExistingFile);
  transfer->add_option("--unseen-emb", tr_unseen, "Unseen label embeddings")->required()->check(CLI::ExistingFile);
  transfer->add_option("--out", tr_out, "Transfer JSON")->required();
  transfer->add_option("--config", tr_config, "Run configuration JSON (transfer section)")->check(CLI::ExistingFile);
  auto* theta_opt = transfer->add_option("--theta", tr_theta, "Relative-distance threshold in (0, 1]");
  auto* k_opt = transfer->add_option("--k", tr_k, "Nearest seen classes considered per unseen class");
  auto* rho_opt = transfer->add_option("--rho", tr_rho, "Maximum seen classes per unseen class");
  auto* cv_opt = transfer->add_flag("--cv", tr_cv, "Select theta, k and rho by cross-validation on seen classes");
  transfer->add_option("--grid", tr_grid, "Grid JSON for --cv")->check(CLI::ExistingFile)->needs(cv_opt);
  transfer->add_option("--seen-reps", tr_seen_reps, "Seen training representations for --cv")
      ->check(CLI::ExistingFile)
      ->needs(cv_opt);
  transfer->add_option("--folds", tr_folds, "Cross-validation folds (default 5)")->needs(cv_opt);
  transfer->add_option("--seed", tr_seed, "Fold assignment seed for --cv");
  cv_opt->excludes(theta_opt)->excludes(k_opt)->excludes(rho_opt);
  transfer->callback([&] {
    rest_transfer_options o;
    rest_transfer_options_init(&o);
    o.config_path = c_str_or_null(tr_config);
    o.theta = tr_theta;
    o.k = tr_k;
    o.rho = tr_rho;
    o.cv = tr_cv ? 1 : 0;
    o.grid_path = c_str_or_null(tr_grid);
    o.seen_reps_path = c_str_or_null(tr_seen_reps);
    o.folds = tr_folds;
    o.seed = seed_ptr(tr_seed);
    exit_code = report(rest_transfer(tr_protos.c_str(), tr_seen.c_str(), tr_unseen.c_str(), &o, tr_out.c_str()),
                       "transfer");
  });

  // eval
  std::string ev_reps, ev_protos, ev_out, ev_config, ev_format = "json";
  double ev_fraction = 0.0;
  std::size_t ev_splits = 0, ev_hub_k = 0;
  std::optional<std::uint64_t> ev_seed;
  bool ev_baseline = false;
  auto* eval = app.add_subcommand("eval", "Zero-shot accuracy over random class splits");
  eval->add_option("--reps", ev_reps, "Unseen test representations")->required()->check(CLI::ExistingFile);
  eval->add_option("--unseen-protos", ev_protos, "Transfer JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", ev_out, "Report path")->required();
  eval->add_option("--config", ev_config, "Run configuration JSON (eval section, seed)")->check(CLI::ExistingFile);
  eval->add_option("--fraction", ev_fraction, "Fraction of unseen classes per split (default 0.5)");
  eval->add_option("--splits", ev_splits, "Number of random splits (default 10)");
  eval->add_option("--seed", ev_seed, "Split sampling seed");
  eval->add_option("--format", ev_format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  eval->add_option("--hubness-k", ev_hub_k, "Neighbourhood size for hubness (default 1)");
  eval->add_flag("--baseline", ev_baseline, "Score the seen-label nearest-neighbour baseline instead");
  eval->callback([&] {
    rest_eval_options o;
    rest_eval_options_init(&o);
    o.config_path = c_str_or_null(ev_config);
    o.fraction = ev_fraction;
    o.splits = ev_splits;
    o.seed = seed_ptr(ev_seed);
    o.format = ev_format.c_str();
    o.baseline = ev_baseline ? 1 : 0;
    o.hubness_k = ev_hub_k;
    double top1 = 0.0, skew = 0.0;
    const rest_status st = rest_evaluate(ev_reps.c_str(), ev_protos.c_str(), &o, ev_out.c_str(), &top1, &skew);
    if (st == REST_OK) std::printf("mean top1 %.4f  skewness %.4f\n", top1, skew);
    exit_code = report(st, "eval");
  });

  // hubness
  std::string hub_reps, hub_protos, hub_out;
  std::size_t hub_k = 1;
  auto* hub = app.add_subcommand("hubness", "Neighbour-occurrence counts and their skewness");
  hub->add_option("--reps", hub_reps, "Test representations")->required()->check(CLI::ExistingFile);
  hub->add_option("--protos", hub_protos, "Prototype or transfer JSON")->required()->check(CLI::ExistingFile);
  hub->add_option("--k", hub_k, "Neighbourhood size")->check(CLI::PositiveNumber);
  hub->add_option("--out", hub_out, "Output JSON")->required();
  hub->callback([&] {
    double skew = 0.0;
    const rest_status st = rest_hubness(hub_reps.c_str(), hub_protos.c_str(), hub_k, hub_out.c_str(), &skew);
    if (st == REST_OK) std::printf("skewness %.5f\n", skew);
    exit_code = report(st, "hubness");
  });

  // mask-dump
  std::size_t md_t = 0, md_words = 0;
  std::string md_scheme = "modality";
  auto* mask = app.add_subcommand("mask-dump", "Print the attention grid");
  mask->add_option("--t", md_t, "Number of frames")->required();
  mask->add_option("--words", md_words, "Number of label words")->required();
  mask->add_option("--scheme", md_scheme, "modality or cross");
  mask->callback([&] {
    std::size_t n = 0;
    rest_status st = rest_mask_dump(md_t, md_words, md_scheme.c_str(), nullptr, 0, &n);
    if (st == REST_OK) {
      std::vector<char> buf(n + 1);
      st = rest_mask_dump(md_t, md_words, md_scheme.c_str(), buf.data(), buf.size(), &n);
      if (st == REST_OK) std::fwrite(buf.data(), 1, n, stdout);
    }
    exit_code = report(st, "mask-dump");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return exit_code;
}
