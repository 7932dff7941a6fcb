#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "formats.hpp"
#include "label_embeddings.hpp"
#include "transfer.hpp"

namespace rest::eval {

// Prototype indices sorted by ascending cosine distance to x; ties go to the
// smaller index.
std::vector<std::size_t> classify(std::span<const double> x,
                                  std::span<const std::vector<double>> prototypes);

double cosine_distance(std::span<const double> a, std::span<const double> b);

// Nearest seen prototype, then the unseen label embedding nearest to that
// seen class's label embedding. Returns the full unseen ranking.
std::vector<std::size_t> classify_via_seen_label(std::span<const double> x,
                                                 std::span<const std::vector<double>> seen_prototypes,
                                                 std::span<const std::vector<double>> seen_embeddings,
                                                 std::span<const std::vector<double>> unseen_embeddings);

// Population skewness; 0 when the variance is 0.
double skewness(std::span<const double> values);

struct Hubness {
  std::size_t k = 1;
  std::vector<std::size_t> psi;  // per prototype: times it is in a sample's top-k
  double skewness = 0.0;
};

Hubness hubness(std::span<const std::vector<double>> samples,
                std::span<const std::vector<double>> prototypes, std::size_t k);

enum class Method { kTransfer, kSeenLabel };
std::string to_string(Method m);

struct ProtocolInputs {
  const io::RepresentationSet* test = nullptr;              // class_id = unseen class id
  std::vector<labels::LabelEmbedding> unseen_embeddings;    // one per unseen class
  std::vector<labels::LabelEmbedding> seen_embeddings;      // aligned with seen_prototypes
  std::vector<std::vector<double>> seen_prototypes;
};

struct ProtocolOptions {
  double fraction = 0.5;
  std::size_t num_splits = 10;
  std::uint64_t seed = 0;
  Method method = Method::kTransfer;
  std::size_t hubness_k = 1;
};

struct SplitResult {
  std::size_t index = 0;
  std::vector<int> classes;
  std::size_t instances = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  double skewness = 0.0;
};

struct ClassAccuracy {
  int class_id = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
};

struct Assignment {
  std::size_t split = 0;
  std::string instance_id;
  int true_class = 0;
  int predicted_class = 0;
  double distance = 0.0;
};

struct EvalReport {
  std::string method;
  transfer::TransferParams params;
  std::vector<SplitResult> splits;
  double mean_top1 = 0.0, std_top1 = 0.0;
  double mean_top5 = 0.0, std_top5 = 0.0;
  std::vector<int> class_ids;                     // row/col order of confusion and psi
  std::vector<ClassAccuracy> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], summed over splits
  Hubness hubness;                                // psi summed over splits, mean split skewness
  std::vector<Assignment> assignments;
};

// Samples ceil(fraction·γ) unseen classes per split, rebuilds the transfer
// for that subset and scores top-1/top-5. fraction = 1 gives the full
// 0/100 protocol.
EvalReport run_split_protocol(const ProtocolInputs& inputs, const transfer::TransferParams& params,
                              const ProtocolOptions& options);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

enum class ReportFormat { kJson, kCsv };
ReportFormat parse_report_format(const std::string& text);

// CSV writes split/metric rows to `path` and the per-instance assignments to
// <stem>_assignments.csv next to it.
void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);
std::string report_csv(const EvalReport& report);
std::string assignments_csv(const EvalReport& report);

}  // namespace rest::eval
