#include "transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "errors.hpp"
#include "zeroshot_eval.hpp"

namespace rest::transfer {

namespace {

constexpr double kRatioFloor = 1e-12;
constexpr double kDegenerateWeight = 1e-12;

std::vector<std::size_t> eligible_columns(const EligibilityMask& elig, std::size_t row) {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < elig.eligible.cols(); ++i)
    if (elig.eligible(row, i)) cols.push_back(i);
  return cols;
}

void check_shapes(const RelatednessMatrix& m, const EligibilityMask& elig) {
  if (elig.eligible.rows() != m.rows() || elig.eligible.cols() != m.cols()) {
    throw DimensionError("eligibility mask does not match the relatedness matrix");
  }
}

}  // namespace

void TransferParams::validate(std::size_t kappa) const {
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("transfer: theta must lie in (0, 1]");
  if (k < 1 || k > kappa) {
    throw ConfigError("transfer: k must lie in [1, " + std::to_string(kappa) + "]");
  }
  if (rho < 1 || rho > kappa) {
    throw ConfigError("transfer: rho must lie in [1, " + std::to_string(kappa) + "]");
  }
}

std::size_t BoolGrid::count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), 1));
}

std::size_t BoolGrid::row_count(std::size_t r) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < cols_; ++c) n += (*this)(r, c) ? 1 : 0;
  return n;
}

EligibilityMask eligibility(const RelatednessMatrix& m, const TransferParams& params) {
  const std::size_t gamma = m.rows(), kappa = m.cols();
  const std::size_t k = std::min(params.k, kappa);
  EligibilityMask out{BoolGrid(gamma, kappa), BoolGrid(gamma, kappa, true), BoolGrid(gamma, kappa)};

  std::vector<std::size_t> order(kappa);
  for (std::size_t j = 0; j < gamma; ++j) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return (1.0 - m(j, a)) < (1.0 - m(j, b));
    });
    for (std::size_t r = 0; r < k; ++r) out.knn.set(j, order[r], true);
  }

  if (gamma >= 2) {
    for (std::size_t j = 0; j < gamma; ++j) {
      for (std::size_t i = 0; i < kappa; ++i) {
        const double own = std::max(1.0 - m(j, i), kRatioFloor);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t other = 0; other < gamma; ++other) {
          if (other != j) best = std::min(best, (1.0 - m(other, i)) / own);
        }
        if (best <= params.theta) out.lambda.set(j, i, false);
      }
    }
  }

  for (std::size_t j = 0; j < gamma; ++j)
    for (std::size_t i = 0; i < kappa; ++i)
      out.eligible.set(j, i, out.knn(j, i) && out.lambda(j, i) && m(j, i) > 0.0);
  return out;
}

double objective_value(const RelatednessMatrix& m, const BoolGrid& a) {
  double total = 0.0;
  for (std::size_t j = 0; j < m.rows(); ++j)
    for (std::size_t i = 0; i < m.cols(); ++i)
      if (a(j, i)) total += m(j, i);
  return total;
}

AdjacencyMatrix solve_exact_bruteforce(const RelatednessMatrix& m, const EligibilityMask& elig,
                                       std::size_t rho) {
  check_shapes(m, elig);
  const std::size_t gamma = m.rows(), kappa = m.cols(), cells = gamma * kappa;
  if (cells > kBruteforceMaxCells) {
    throw ScaleError("exhaustive search limited to " + std::to_string(kBruteforceMaxCells) +
                     " cells, got " + std::to_string(cells));
  }
  BoolGrid current(gamma, kappa);
  AdjacencyMatrix best{BoolGrid(gamma, kappa), 0.0};
  bool have_best = false;
  std::vector<std::size_t> row_used(gamma, 0);

  // Depth-first over cells in row-major order, 0 before 1, so leaves are
  // visited in increasing lexicographic order of the flattened matrix.
  auto visit = [&](auto&& self, std::size_t cell, double value) -> void {
    if (cell == cells) {
      if (!have_best || value > best.objective) {
        best.a = current;
        best.objective = value;
        have_best = true;
      }
      return;
    }
    const std::size_t j = cell / kappa, i = cell % kappa;
    self(self, cell + 1, value);
    if (elig.eligible(j, i) && row_used[j] < rho) {
      current.set(j, i, true);
      ++row_used[j];
      self(self, cell + 1, value + m(j, i));
      --row_used[j];
      current.set(j, i, false);
    }
  };
  visit(visit, 0, 0.0);
  return best;
}

AdjacencyMatrix solve(const RelatednessMatrix& m, const EligibilityMask& elig, std::size_t rho) {
  check_shapes(m, elig);
  AdjacencyMatrix out{BoolGrid(m.rows(), m.cols()), 0.0};
  for (std::size_t j = 0; j < m.rows(); ++j) {
    auto cols = eligible_columns(elig, j);
    std::stable_sort(cols.begin(), cols.end(), [&](std::size_t a, std::size_t b) {
      if (m(j, a) != m(j, b)) return m(j, a) > m(j, b);
      return a > b;
    });
    const std::size_t take = std::min(rho, cols.size());
    for (std::size_t r = 0; r < take; ++r) out.a.set(j, cols[r], true);
  }
  out.objective = objective_value(m, out.a);
  return out;
}

CompositePrototypes compose_prototypes(const AdjacencyMatrix& adj, const RelatednessMatrix& m,
                                       std::span<const std::vector<double>> seen_prototypes) {
  if (adj.a.rows() != m.rows() || adj.a.cols() != m.cols() ||
      seen_prototypes.size() != m.cols()) {
    throw DimensionError("compose_prototypes: adjacency, relatedness and prototypes disagree");
  }
  const std::size_t dim = seen_prototypes.empty() ? 0 : seen_prototypes.front().size();
  for (const auto& p : seen_prototypes) {
    if (p.size() != dim) throw DimensionError("compose_prototypes: ragged seen prototypes");
  }
  CompositePrototypes out;
  for (std::size_t j = 0; j < m.rows(); ++j) {
    CompositeRow row;
    double total = 0.0;
    for (std::size_t i = 0; i < m.cols(); ++i) {
      if (adj.a(j, i)) {
        row.selected.push_back({i, m(j, i), 0.0});
        total += m(j, i);
      }
    }
    if (row.selected.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < m.cols(); ++i)
        if (m(j, i) > m(j, best)) best = i;
      row.fallback = true;
      row.selected.push_back({best, m(j, best), 1.0});
      row.vector = seen_prototypes[best];
      out.rows.push_back(std::move(row));
      continue;
    }
    if (total <= kDegenerateWeight) {
      throw CompositionError("compose_prototypes: unseen row " + std::to_string(j) +
                             " has non-positive total relatedness");
    }
    row.vector.assign(dim, 0.0);
    for (auto& edge : row.selected) {
      edge.weight = edge.m / total;
      const auto& proto = seen_prototypes[edge.seen_index];
      for (std::size_t d = 0; d < dim; ++d) row.vector[d] += edge.weight * proto[d];
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

io::PrototypeSet build_seen_prototypes(const io::RepresentationSet& reps) {
  std::map<std::size_t, io::Prototype> by_class;
  for (const auto& x : reps.instances) {
    auto& p = by_class[x.class_id];
    if (p.vector.empty()) {
      p.class_id = static_cast<int>(x.class_id);
      p.label = x.class_id < reps.labels.size() ? reps.labels[x.class_id] : std::string();
      p.vector.assign(reps.dim, 0.0);
    }
    for (std::size_t d = 0; d < reps.dim; ++d) p.vector[d] += x.vector[d];
    ++p.count;
  }
  io::PrototypeSet out;
  out.dim = reps.dim;
  for (auto& [cls, p] : by_class) {
    for (double& v : p.vector) v /= static_cast<double>(p.count);
    out.entries.push_back(std::move(p));
  }
  if (out.entries.empty()) throw FormatError("no representations to build prototypes from");
  return out;
}

TransferOutcome run_transfer(std::span<const labels::LabelEmbedding> unseen,
                             std::span<const labels::LabelEmbedding> seen,
                             std::span<const std::vector<double>> seen_prototypes,
                             const TransferParams& params) {
  TransferOutcome out;
  out.m = labels::relatedness_matrix(unseen, seen);
  out.eligibility = eligibility(out.m, params);
  out.adjacency = solve(out.m, out.eligibility, std::min(params.rho, seen.size()));
  out.prototypes = compose_prototypes(out.adjacency, out.m, seen_prototypes);
  return out;
}

std::vector<TransferParams> default_grid() {
  std::vector<TransferParams> grid;
  for (double theta : {0.5, 0.7, 0.8, 0.9})
    for (std::size_t k : {3u, 5u, 10u})
      for (std::size_t rho : {2u, 3u, 5u}) grid.push_back({theta, k, rho});
  return grid;
}

CvResult cv_select_params(std::span<const labels::LabelEmbedding> seen_embeddings,
                          std::span<const std::vector<double>> seen_prototypes,
                          std::span<const std::vector<double>> instance_vectors,
                          std::span<const std::size_t> instance_class,
                          std::span<const TransferParams> grid, std::size_t folds,
                          std::uint64_t seed) {
  const std::size_t kappa = seen_embeddings.size();
  if (grid.empty()) throw ConfigError("cross-validation grid is empty");
  if (folds < 2) throw FoldError("cross-validation needs at least 2 folds");
  if (kappa < folds) {
    throw FoldError("cross-validation needs at least as many seen classes (" +
                    std::to_string(kappa) + ") as folds (" + std::to_string(folds) + ")");
  }
  if (seen_prototypes.size() != kappa) {
    throw DimensionError("cross-validation: prototypes and embeddings disagree in count");
  }
  if (instance_vectors.size() != instance_class.size()) {
    throw DimensionError("cross-validation: instance vectors and classes disagree in count");
  }
  for (const auto& p : grid) {
    if (!(p.theta > 0.0 && p.theta <= 1.0) || p.k < 1 || p.rho < 1) {
      throw ConfigError("cross-validation grid point out of range");
    }
  }

  std::vector<std::size_t> perm(kappa);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> fold_classes(folds);
  for (std::size_t r = 0; r < kappa; ++r) fold_classes[r % folds].push_back(perm[r]);
  for (auto& f : fold_classes) {
    std::sort(f.begin(), f.end());
    if (f.size() < 2) throw FoldError("cross-validation fold has fewer than 2 classes");
  }

  CvResult result;
  result.mean_accuracy.assign(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    for (std::size_t f = 0; f < folds; ++f) {
      const auto& held = fold_classes[f];
      std::vector<int> held_pos(kappa, -1);
      for (std::size_t h = 0; h < held.size(); ++h) held_pos[held[h]] = static_cast<int>(h);

      std::vector<labels::LabelEmbedding> pseudo_unseen, pseudo_seen;
      std::vector<std::vector<double>> pseudo_protos;
      for (std::size_t c = 0; c < kappa; ++c) {
        if (held_pos[c] >= 0) continue;
        pseudo_seen.push_back(seen_embeddings[c]);
        pseudo_protos.push_back(seen_prototypes[c]);
      }
      for (std::size_t c : held) pseudo_unseen.push_back(seen_embeddings[c]);

      TransferParams p = grid[g];
      p.k = std::min(p.k, pseudo_seen.size());
      p.rho = std::min(p.rho, pseudo_seen.size());
      const auto outcome = run_transfer(pseudo_unseen, pseudo_seen, pseudo_protos, p);
      std::vector<std::vector<double>> anchors;
      for (const auto& row : outcome.prototypes.rows) anchors.push_back(row.vector);

      std::size_t total = 0, correct = 0;
      for (std::size_t n = 0; n < instance_vectors.size(); ++n) {
        const std::size_t cls = instance_class[n];
        if (cls >= kappa) throw IndexError("cross-validation: instance class out of range");
        if (held_pos[cls] < 0) continue;
        ++total;
        const auto ranking = eval::classify(instance_vectors[n], anchors);
        if (ranking.front() == static_cast<std::size_t>(held_pos[cls])) ++correct;
      }
      if (total == 0) throw FoldError("cross-validation fold " + std::to_string(f) + " has no instances");
      const double acc = static_cast<double>(correct) / static_cast<double>(total);
      result.table.push_back({grid[g], f, acc});
      result.mean_accuracy[g] += acc / static_cast<double>(folds);
    }
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const double a = result.mean_accuracy[g], b = result.mean_accuracy[best];
    if (std::abs(a - b) > 1e-12) {
      if (a > b) best = g;
      continue;
    }
    const auto& pg = grid[g];
    const auto& pb = grid[best];
    if (pg.k != pb.k) {
      if (pg.k < pb.k) best = g;
    } else if (pg.rho != pb.rho) {
      if (pg.rho < pb.rho) best = g;
    } else if (pg.theta > pb.theta) {
      best = g;
    }
  }
  result.best = grid[best];
  result.best_accuracy = result.mean_accuracy[best];
  return result;
}

}  // namespace rest::transfer
