#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "rest/rest.h"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Workspace {
  fs::path dir = fs::temp_directory_path() / "rest_test_c_api";
  Workspace() {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator/(const char* name) const { return (dir / name).string(); }
};

void epoch_counter(size_t, double, double, double, double, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(rest_status_name(REST_OK)) == "ok");
  CHECK(std::string(rest_status_name(REST_ERR_PROTOCOL)) == "protocol error");
  CHECK(std::string(rest_version()) == "0.1.0");
}

TEST_CASE("mask dump") {
  size_t n = 0;
  REQUIRE(rest_mask_dump(2, 2, "modality", nullptr, 0, &n) == REST_OK);
  std::vector<char> buf(n + 1);
  REQUIRE(rest_mask_dump(2, 2, "modality", buf.data(), buf.size(), &n) == REST_OK);
  CHECK(std::string(buf.data()) ==
        "1 1 1 0 0\n1 1 1 0 0\n1 1 1 0 0\n1 1 1 1 0\n1 1 1 1 1\n");
  CHECK(rest_mask_dump(2, 2, "modality", buf.data(), n, &n) == REST_ERR_INVALID_ARGUMENT);
  CHECK(rest_mask_dump(2, 2, "sideways", nullptr, 0, &n) == REST_ERR_CONFIG);
  CHECK(std::string(rest_last_error()).find("sideways") != std::string::npos);
  CHECK(rest_mask_dump(0, 2, "modality", nullptr, 0, &n) == REST_ERR_INVALID_ARGUMENT);
  CHECK(rest_mask_dump(2, 2, nullptr, nullptr, 0, &n) == REST_ERR_INVALID_ARGUMENT);
  // a successful call clears the previous error
  CHECK(rest_mask_dump(1, 1, "cross", nullptr, 0, &n) == REST_OK);
  CHECK(std::string(rest_last_error()).empty());
}

TEST_CASE("argument and file errors map to status codes") {
  rest_model* m = nullptr;
  CHECK(rest_model_load("/nonexistent/model.json", &m) == REST_ERR_IO);
  CHECK(m == nullptr);
  CHECK(rest_model_load(nullptr, &m) == REST_ERR_INVALID_ARGUMENT);
  CHECK(rest_build_prototypes("/nonexistent/reps.json", "/tmp/x.json") == REST_ERR_IO);
  CHECK(rest_synth_generate(nullptr, nullptr, "/tmp/rest_never") == REST_ERR_CONFIG);
  rest_model_free(nullptr);
}

TEST_CASE("pipeline through the C interface") {
  Workspace ws;
  {
    std::ofstream cfg(ws / "config.json");
    cfg << R"({
      "encoder": {"num_layers": 1, "hidden_dim": 16, "num_heads": 2, "mlp_dim": 32},
      "training": {"epochs": 8, "batch_size": 8},
      "transfer": {"theta": 0.5, "k": 5, "rho": 3},
      "eval": {"fraction": 0.5, "splits": 3},
      "synth": {"num_seen": 6, "num_unseen": 4, "instances_per_class": 4, "frames": 3,
                "feature_dim": 8, "label_dim": 6}
    })";
  }
  const uint64_t seed = 21;
  const std::string cfg = ws / "config.json";
  REQUIRE(rest_synth_generate(cfg.c_str(), &seed, ws.dir.c_str()) == REST_OK);
  REQUIRE(rest_embed_labels((ws / "seen_vectors.txt").c_str(), (ws / "seen_labels.txt").c_str(),
                            (ws / "seen_emb.json").c_str()) == REST_OK);
  REQUIRE(rest_embed_labels((ws / "unseen_vectors.txt").c_str(), (ws / "unseen_labels.txt").c_str(),
                            (ws / "unseen_emb.json").c_str()) == REST_OK);

  int epochs = 0;
  rest_model* model = nullptr;
  REQUIRE(rest_model_train((ws / "train.json").c_str(), cfg.c_str(), &seed, (ws / "log.csv").c_str(),
                           epoch_counter, &epochs, &model) == REST_OK);
  CHECK(epochs == 8);
  CHECK(rest_model_hidden_dim(model) == 16);
  CHECK(rest_model_parameter_count(model) > 0);

  std::vector<double> frames(3 * 8, 0.25), out(16);
  CHECK(rest_model_represent(model, frames.data(), 3, 8, out.data(), out.size()) == REST_OK);
  CHECK(rest_model_represent(model, frames.data(), 3, 7, out.data(), out.size()) == REST_ERR_DIMENSION);
  CHECK(rest_model_represent(model, frames.data(), 3, 8, out.data(), 4) == REST_ERR_DIMENSION);

  REQUIRE(rest_model_save(model, (ws / "model.json").c_str()) == REST_OK);
  rest_model* loaded = nullptr;
  REQUIRE(rest_model_load((ws / "model.json").c_str(), &loaded) == REST_OK);
  REQUIRE(rest_model_save(loaded, (ws / "model2.json").c_str()) == REST_OK);
  CHECK(slurp(ws / "model.json") == slurp(ws / "model2.json"));

  double acc = -1.0;
  CHECK(rest_model_head_accuracy(loaded, (ws / "train.json").c_str(), &acc) == REST_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  REQUIRE(rest_model_represent_dataset(model, (ws / "train.json").c_str(), (ws / "train_reps.json").c_str()) ==
          REST_OK);
  REQUIRE(rest_model_represent_dataset(model, (ws / "test.json").c_str(), (ws / "test_reps.json").c_str()) ==
          REST_OK);
  REQUIRE(rest_build_prototypes((ws / "train_reps.json").c_str(), (ws / "protos.json").c_str()) == REST_OK);

  rest_transfer_options topt;
  rest_transfer_options_init(&topt);
  topt.config_path = cfg.c_str();
  REQUIRE(rest_transfer((ws / "protos.json").c_str(), (ws / "seen_emb.json").c_str(),
                        (ws / "unseen_emb.json").c_str(), &topt, (ws / "transfer.json").c_str()) == REST_OK);
  const auto doc = nlohmann::json::parse(slurp(ws / "transfer.json"));
  CHECK(doc.at("params").at("rho") == 3);
  CHECK(doc.at("rows").size() == 4);

  // swapped embeddings: seen labels do not match the prototypes
  CHECK(rest_transfer((ws / "protos.json").c_str(), (ws / "unseen_emb.json").c_str(),
                      (ws / "unseen_emb.json").c_str(), &topt, (ws / "bad.json").c_str()) != REST_OK);

  rest_transfer_options cv;
  rest_transfer_options_init(&cv);
  cv.cv = 1;
  cv.theta = 0.5;
  CHECK(rest_transfer((ws / "protos.json").c_str(), (ws / "seen_emb.json").c_str(),
                      (ws / "unseen_emb.json").c_str(), &cv, (ws / "cv.json").c_str()) == REST_ERR_CONFIG);

  rest_eval_options eopt;
  rest_eval_options_init(&eopt);
  eopt.config_path = cfg.c_str();
  eopt.seed = &seed;
  double top1 = -1.0, skew = 0.0;
  REQUIRE(rest_evaluate((ws / "test_reps.json").c_str(), (ws / "transfer.json").c_str(), &eopt,
                        (ws / "report.json").c_str(), &top1, &skew) == REST_OK);
  CHECK(top1 >= 0.0);
  CHECK(top1 <= 1.0);
  CHECK(std::isfinite(skew));
  const auto report = nlohmann::json::parse(slurp(ws / "report.json"));
  CHECK(report.at("splits").size() == 3);
  CHECK(report.at("mean_top1").get<double>() == top1);

  eopt.format = "yaml";
  CHECK(rest_evaluate((ws / "test_reps.json").c_str(), (ws / "transfer.json").c_str(), &eopt,
                      (ws / "report.yaml").c_str(), nullptr, nullptr) == REST_ERR_CONFIG);
  eopt.format = "csv";
  eopt.fraction = 0.25;  // one class per split
  CHECK(rest_evaluate((ws / "test_reps.json").c_str(), (ws / "transfer.json").c_str(), &eopt,
                      (ws / "report.csv").c_str(), nullptr, nullptr) == REST_ERR_PROTOCOL);

  double hub = 0.0;
  CHECK(rest_hubness((ws / "test_reps.json").c_str(), (ws / "protos.json").c_str(), 1,
                     (ws / "hub.json").c_str(), &hub) == REST_OK);
  CHECK(std::isfinite(hub));

  rest_model_free(model);
  rest_model_free(loaded);
}
