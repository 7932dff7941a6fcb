#include "zeroshot_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "errors.hpp"

namespace rest::eval {

using nlohmann::json;

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, std::sqrt(var)};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  return 1.0 - labels::cosine(a, b);
}

std::vector<std::size_t> classify(std::span<const double> x,
                                  std::span<const std::vector<double>> prototypes) {
  if (prototypes.empty()) throw InvalidArgument("classify: no prototypes");
  if (norm(x) == 0.0) throw ContractError("classify: zero-norm representation");
  std::vector<double> dist(prototypes.size());
  for (std::size_t j = 0; j < prototypes.size(); ++j) {
    if (prototypes[j].size() != x.size()) {
      throw DimensionError("classify: prototype " + std::to_string(j) + " has dimension " +
                           std::to_string(prototypes[j].size()) + ", expected " +
                           std::to_string(x.size()));
    }
    if (norm(prototypes[j]) == 0.0) {
      throw ContractError("classify: prototype " + std::to_string(j) + " has zero norm");
    }
    dist[j] = cosine_distance(x, prototypes[j]);
  }
  std::vector<std::size_t> order(prototypes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

std::vector<std::size_t> classify_via_seen_label(
    std::span<const double> x, std::span<const std::vector<double>> seen_prototypes,
    std::span<const std::vector<double>> seen_embeddings,
    std::span<const std::vector<double>> unseen_embeddings) {
  if (seen_prototypes.size() != seen_embeddings.size()) {
    throw DimensionError("seen prototypes and seen label embeddings differ in count");
  }
  const std::size_t nearest_seen = classify(x, seen_prototypes).front();
  return classify(seen_embeddings[nearest_seen], unseen_embeddings);
}

double skewness(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

Hubness hubness(std::span<const std::vector<double>> samples,
                std::span<const std::vector<double>> prototypes, std::size_t k) {
  if (k < 1) throw InvalidArgument("hubness: k must be >= 1");
  Hubness h;
  h.k = k;
  h.psi.assign(prototypes.size(), 0);
  for (const auto& x : samples) {
    const auto ranking = classify(x, prototypes);
    for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) ++h.psi[ranking[r]];
  }
  std::vector<double> psi(h.psi.begin(), h.psi.end());
  h.skewness = skewness(psi);
  return h;
}

std::string to_string(Method m) { return m == Method::kTransfer ? "transfer" : "seen_label_nn"; }

EvalReport run_split_protocol(const ProtocolInputs& in, const transfer::TransferParams& params,
                              const ProtocolOptions& opt) {
  if (!in.test) throw InvalidArgument("protocol: no test representations");
  const std::size_t gamma = in.unseen_embeddings.size();
  if (gamma < 2) throw ProtocolError("protocol needs at least 2 unseen classes");
  if (!(opt.fraction > 0.0 && opt.fraction <= 1.0)) {
    throw ConfigError("protocol: fraction must lie in (0, 1]");
  }
  if (opt.num_splits < 1) throw ConfigError("protocol: num_splits must be >= 1");
  if (in.seen_embeddings.size() != in.seen_prototypes.size()) {
    throw DimensionError("protocol: seen embeddings and prototypes differ in count");
  }

  std::map<int, std::size_t> position;
  for (std::size_t u = 0; u < gamma; ++u) {
    if (!position.emplace(in.unseen_embeddings[u].class_id, u).second) {
      throw FormatError("protocol: duplicate unseen class id " +
                        std::to_string(in.unseen_embeddings[u].class_id));
    }
  }
  std::vector<std::size_t> test_pos(in.test->instances.size());
  for (std::size_t n = 0; n < test_pos.size(); ++n) {
    auto it = position.find(static_cast<int>(in.test->instances[n].class_id));
    if (it == position.end()) {
      throw FormatError("protocol: test instance '" + in.test->instances[n].id +
                        "' has a class without a label embedding");
    }
    test_pos[n] = it->second;
  }

  const std::size_t per_split =
      static_cast<std::size_t>(std::ceil(opt.fraction * static_cast<double>(gamma) - 1e-12));
  if (per_split < 2) throw ProtocolError("protocol: a split would contain fewer than 2 classes");

  std::vector<std::vector<double>> seen_vecs;
  for (const auto& e : in.seen_embeddings) seen_vecs.push_back(e.vector);

  EvalReport report;
  report.method = to_string(opt.method);
  report.params = params;
  for (const auto& e : in.unseen_embeddings) report.class_ids.push_back(e.class_id);
  report.confusion.assign(gamma, std::vector<std::size_t>(gamma, 0));
  report.hubness.k = opt.hubness_k;
  report.hubness.psi.assign(gamma, 0);
  std::vector<std::size_t> class_correct(gamma, 0), class_total(gamma, 0);

  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> perm(gamma);
  std::vector<double> top1s, top5s, skews;
  for (std::size_t s = 0; s < opt.num_splits; ++s) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(per_split));
    std::sort(chosen.begin(), chosen.end());
    std::vector<int> local(gamma, -1);
    for (std::size_t c = 0; c < chosen.size(); ++c) local[chosen[c]] = static_cast<int>(c);

    std::vector<labels::LabelEmbedding> split_unseen;
    std::vector<std::vector<double>> split_unseen_vecs;
    for (std::size_t u : chosen) {
      split_unseen.push_back(in.unseen_embeddings[u]);
      split_unseen_vecs.push_back(in.unseen_embeddings[u].vector);
    }
    std::vector<std::vector<double>> anchors;
    if (opt.method == Method::kTransfer) {
      transfer::TransferParams p = params;
      p.validate(in.seen_embeddings.size());
      const auto outcome = transfer::run_transfer(split_unseen, in.seen_embeddings, in.seen_prototypes, p);
      for (const auto& row : outcome.prototypes.rows) anchors.push_back(row.vector);
    }

    SplitResult split;
    split.index = s;
    for (std::size_t u : chosen) split.classes.push_back(in.unseen_embeddings[u].class_id);
    std::size_t hit1 = 0, hit5 = 0;
    std::vector<double> psi(chosen.size(), 0.0);
    for (std::size_t n = 0; n < test_pos.size(); ++n) {
      const int truth = local[test_pos[n]];
      if (truth < 0) continue;
      const auto& x = in.test->instances[n].vector;
      const auto ranking = opt.method == Method::kTransfer
                               ? classify(x, anchors)
                               : classify_via_seen_label(x, in.seen_prototypes, seen_vecs,
                                                         split_unseen_vecs);
      ++split.instances;
      const std::size_t predicted = ranking.front();
      if (predicted == static_cast<std::size_t>(truth)) ++hit1;
      const std::size_t top = std::min<std::size_t>(5, ranking.size());
      if (std::find(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(top),
                    static_cast<std::size_t>(truth)) != ranking.begin() + static_cast<std::ptrdiff_t>(top)) {
        ++hit5;
      }
      for (std::size_t r = 0; r < std::min(opt.hubness_k, ranking.size()); ++r) {
        psi[ranking[r]] += 1.0;
        ++report.hubness.psi[chosen[ranking[r]]];
      }
      const std::size_t true_u = chosen[static_cast<std::size_t>(truth)];
      const std::size_t pred_u = chosen[predicted];
      ++report.confusion[true_u][pred_u];
      ++class_total[true_u];
      if (true_u == pred_u) ++class_correct[true_u];
      // Baseline: distance to the seen prototype the instance was routed through.
      const double distance =
          opt.method == Method::kTransfer
              ? cosine_distance(x, anchors[predicted])
              : cosine_distance(x, in.seen_prototypes[classify(x, in.seen_prototypes).front()]);
      report.assignments.push_back({s, in.test->instances[n].id, in.unseen_embeddings[true_u].class_id,
                                    in.unseen_embeddings[pred_u].class_id, distance});
    }
    if (split.instances == 0) {
      throw ProtocolError("protocol: split " + std::to_string(s) + " has no test instances");
    }
    split.top1 = static_cast<double>(hit1) / static_cast<double>(split.instances);
    split.top5 = static_cast<double>(hit5) / static_cast<double>(split.instances);
    split.skewness = skewness(psi);
    top1s.push_back(split.top1);
    top5s.push_back(split.top5);
    skews.push_back(split.skewness);
    report.splits.push_back(std::move(split));
  }
  std::tie(report.mean_top1, report.std_top1) = mean_std(top1s);
  std::tie(report.mean_top5, report.std_top5) = mean_std(top5s);
  report.hubness.skewness = mean_std(skews).first;
  for (std::size_t u = 0; u < gamma; ++u) {
    if (class_total[u] == 0) continue;
    report.per_class.push_back({in.unseen_embeddings[u].class_id, class_correct[u], class_total[u],
                                static_cast<double>(class_correct[u]) / static_cast<double>(class_total[u])});
  }
  return report;
}

// ---------------------------------------------------------------------------

json report_to_json(const EvalReport& r) {
  json splits = json::array();
  for (const auto& s : r.splits) {
    splits.push_back({{"index", s.index},
                      {"classes", s.classes},
                      {"instances", s.instances},
                      {"top1", s.top1},
                      {"top5", s.top5},
                      {"skewness", s.skewness}});
  }
  json per_class = json::array();
  for (const auto& c : r.per_class) {
    per_class.push_back({{"class_id", c.class_id},
                         {"correct", c.correct},
                         {"total", c.total},
                         {"accuracy", c.accuracy}});
  }
  json assignments = json::array();
  for (const auto& a : r.assignments) {
    assignments.push_back({{"split", a.split},
                           {"instance_id", a.instance_id},
                           {"true_class", a.true_class},
                           {"predicted_class", a.predicted_class},
                           {"distance", a.distance}});
  }
  return {{"method", r.method},
          {"params", {{"theta", r.params.theta}, {"k", r.params.k}, {"rho", r.params.rho}}},
          {"splits", std::move(splits)},
          {"mean_top1", r.mean_top1},
          {"std_top1", r.std_top1},
          {"mean_top5", r.mean_top5},
          {"std_top5", r.std_top5},
          {"class_ids", r.class_ids},
          {"per_class", std::move(per_class)},
          {"confusion", r.confusion},
          {"hubness", {{"k", r.hubness.k}, {"psi", r.hubness.psi}, {"skewness", r.hubness.skewness}}},
          {"assignments", std::move(assignments)}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.params.theta = j.at("params").at("theta").get<double>();
    r.params.k = j.at("params").at("k").get<std::size_t>();
    r.params.rho = j.at("params").at("rho").get<std::size_t>();
    for (const auto& s : j.at("splits")) {
      r.splits.push_back({s.at("index").get<std::size_t>(), s.at("classes").get<std::vector<int>>(),
                          s.at("instances").get<std::size_t>(), s.at("top1").get<double>(),
                          s.at("top5").get<double>(), s.at("skewness").get<double>()});
    }
    r.mean_top1 = j.at("mean_top1").get<double>();
    r.std_top1 = j.at("std_top1").get<double>();
    r.mean_top5 = j.at("mean_top5").get<double>();
    r.std_top5 = j.at("std_top5").get<double>();
    r.class_ids = j.at("class_ids").get<std::vector<int>>();
    for (const auto& c : j.at("per_class")) {
      r.per_class.push_back({c.at("class_id").get<int>(), c.at("correct").get<std::size_t>(),
                             c.at("total").get<std::size_t>(), c.at("accuracy").get<double>()});
    }
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    r.hubness.k = j.at("hubness").at("k").get<std::size_t>();
    r.hubness.psi = j.at("hubness").at("psi").get<std::vector<std::size_t>>();
    r.hubness.skewness = j.at("hubness").at("skewness").get<double>();
    for (const auto& a : j.at("assignments")) {
      r.assignments.push_back({a.at("split").get<std::size_t>(), a.at("instance_id").get<std::string>(),
                               a.at("true_class").get<int>(), a.at("predicted_class").get<int>(),
                               a.at("distance").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("evaluation report: ") + e.what());
  }
}

ReportFormat parse_report_format(const std::string& text) {
  if (text == "json") return ReportFormat::kJson;
  if (text == "csv") return ReportFormat::kCsv;
  throw ConfigError("unknown report format '" + text + "' (expected json or csv)");
}

std::string report_csv(const EvalReport& r) {
  std::string out = "split,metric,value,std\n";
  for (const auto& s : r.splits) {
    out += std::to_string(s.index) + ",top1," + fmt(s.top1) + ",\n";
    out += std::to_string(s.index) + ",top5," + fmt(s.top5) + ",\n";
  }
  out += "mean,top1," + fmt(r.mean_top1) + "," + fmt(r.std_top1) + "\n";
  out += "mean,top5," + fmt(r.mean_top5) + "," + fmt(r.std_top5) + "\n";
  return out;
}

std::string assignments_csv(const EvalReport& r) {
  std::string out = "split,instance_id,true_class,predicted_class,distance\n";
  for (const auto& a : r.assignments) {
    out += std::to_string(a.split) + "," + a.instance_id + "," + std::to_string(a.true_class) + "," +
           std::to_string(a.predicted_class) + "," + fmt(a.distance) + "\n";
  }
  return out;
}

void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  if (report.splits.empty()) throw InvalidArgument("evaluation report has no splits");
  if (format == ReportFormat::kJson) {
    io::write_json(path, report_to_json(report));
    return;
  }
  io::write_text(path, report_csv(report));
  auto side = path;
  side.replace_filename(path.stem().string() + "_assignments.csv");
  io::write_text(side, assignments_csv(report));
}

}  // namespace rest::eval
