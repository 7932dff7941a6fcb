#pragma once

// Semantic-relatedness transfer: pick, for every unseen class, a bounded set
// of related seen classes and composite its visual prototype from theirs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "formats.hpp"
#include "label_embeddings.hpp"

namespace rest::transfer {

using labels::RelatednessMatrix;

struct TransferParams {
  double theta = 0.8;      // relative-distance threshold, (0, 1]
  std::size_t k = 5;       // k-NN candidate set size
  std::size_t rho = 3;     // max edges per unseen class

  // Throws ConfigError unless 0 < theta <= 1, 1 <= k <= kappa, 1 <= rho <= kappa.
  void validate(std::size_t kappa) const;
  bool operator==(const TransferParams&) const = default;
};

// Row-major γ×κ boolean grid.
class BoolGrid {
 public:
  BoolGrid() = default;
  BoolGrid(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), cells_(rows * cols, fill ? 1 : 0) {}
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool on) { cells_[r * cols_ + c] = on ? 1 : 0; }
  std::size_t count() const;
  std::size_t row_count(std::size_t r) const;
  bool operator==(const BoolGrid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<unsigned char> cells_;
};

struct EligibilityMask {
  BoolGrid knn;       // seen class among the K nearest by 1 - m
  BoolGrid lambda;    // relative-distance constraint holds
  BoolGrid eligible;  // knn && lambda && m > 0
};

// K and rho larger than κ are clamped to κ here and in the solvers.
EligibilityMask eligibility(const RelatednessMatrix& m, const TransferParams& params);

struct AdjacencyMatrix {
  BoolGrid a;
  double objective = 0.0;
};

// Σ m·a summed in row-major order.
double objective_value(const RelatednessMatrix& m, const BoolGrid& a);

inline constexpr std::size_t kBruteforceMaxCells = 24;

// Exhaustive search over every feasible A. Among equal objectives the
// lexicographically smallest flattened A wins.
AdjacencyMatrix solve_exact_bruteforce(const RelatednessMatrix& m, const EligibilityMask& elig,
                                       std::size_t rho);

// Exact optimum by row decomposition: each row keeps its up-to-rho eligible
// columns of largest m. Ties resolve as in the exhaustive search.
AdjacencyMatrix solve(const RelatednessMatrix& m, const EligibilityMask& elig, std::size_t rho);

struct SelectedEdge {
  std::size_t seen_index = 0;
  double m = 0.0;
  double weight = 0.0;
};

struct CompositeRow {
  std::vector<SelectedEdge> selected;
  bool fallback = false;
  std::vector<double> vector;
};

struct CompositePrototypes {
  std::vector<CompositeRow> rows;
};

// Relatedness-weighted mean of the selected seen prototypes. A row with no
// selected edge falls back to its single most related seen class.
CompositePrototypes compose_prototypes(const AdjacencyMatrix& adj, const RelatednessMatrix& m,
                                       std::span<const std::vector<double>> seen_prototypes);

// Mean representation per class. Classes with no instance are absent.
io::PrototypeSet build_seen_prototypes(const io::RepresentationSet& reps);

// Full transfer for one unseen set: relatedness → eligibility → solve →
// compose.
struct TransferOutcome {
  RelatednessMatrix m;
  EligibilityMask eligibility;
  AdjacencyMatrix adjacency;
  CompositePrototypes prototypes;
};

TransferOutcome run_transfer(std::span<const labels::LabelEmbedding> unseen,
                             std::span<const labels::LabelEmbedding> seen,
                             std::span<const std::vector<double>> seen_prototypes,
                             const TransferParams& params);

// Default grid: theta {0.5,0.7,0.8,0.9} × K {3,5,10} × rho {2,3,5}.
std::vector<TransferParams> default_grid();

struct CvRow {
  TransferParams params;
  std::size_t fold = 0;
  double top1 = 0.0;
};

struct CvResult {
  TransferParams best;
  double best_accuracy = 0.0;
  std::vector<CvRow> table;                  // one row per (grid point, fold)
  std::vector<double> mean_accuracy;         // per grid point
};

// Seen classes are split into folds; each fold plays the unseen role and its
// prototypes are composited from the remaining classes. Selection maximizes
// mean top-1; ties prefer smaller K, then smaller rho, then larger theta.
//
// seen_embeddings[i], seen_prototypes[i] and class index i of
// instance_class must refer to the same seen class.
CvResult cv_select_params(std::span<const labels::LabelEmbedding> seen_embeddings,
                          std::span<const std::vector<double>> seen_prototypes,
                          std::span<const std::vector<double>> instance_vectors,
                          std::span<const std::size_t> instance_class,
                          std::span<const TransferParams> grid, std::size_t folds,
                          std::uint64_t seed);

}  // namespace rest::transfer
