#include "twotower/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_set>

#include "json.hpp"

namespace twotower {

using nlohmann::json;

std::map<int, double> recall_at_k(const EncoderParams<float>& params, const FeatureConfig& config,
                                  const AnyIndex& index, const Catalog& catalog,
                                  const PairSet& heldout, const std::vector<int>& ks) {
  if (heldout.empty()) throw InvalidArgument("recall_at_k: empty held-out pair set");
  if (ks.empty()) throw InvalidArgument("recall_at_k: no k values");
  const int max_k = *std::max_element(ks.begin(), ks.end());

  std::map<int, std::int64_t> hits;
  for (int k : ks) hits[k] = 0;

  for (const auto& pair : heldout.pairs) {
    const Product* query = catalog.find(pair.query_id);
    const Product* target = catalog.find(pair.target_id);
    if (!query || !target)
      throw ValidationError("held-out pair references unknown product " + pair.query_id);

    Eigen::VectorXf embedding =
        params.mode == EncoderMode::Complementary
            ? encode_complementary_query(*query, target->leaf_category(), params, config)
            : encode(*query, params, config);

    std::vector<SearchHit> results;
    if (const auto* flat = std::get_if<FlatIndex>(&index)) {
      results = flat->search(embedding, max_k + 1);
    } else {
      const auto& hier = std::get<HierarchicalIndex>(index);
      results = hier.search(embedding, hier.num_clusters(), 0, max_k + 1);
    }

    int rank = -1;
    int position = 0;
    for (const auto& hit : results) {
      if (hit.product_id == pair.query_id) continue;  // self-exclusion
      ++position;
      if (hit.product_id == pair.target_id) {
        rank = position;
        break;
      }
      if (position >= max_k) break;
    }
    if (rank > 0)
      for (int k : ks)
        if (rank <= k) hits[k] += 1;
  }

  std::map<int, double> out;
  for (int k : ks)
    out[k] = static_cast<double>(hits[k]) / static_cast<double>(heldout.size());
  return out;
}

double index_recall(const FlatIndex& flat, const HierarchicalIndex& hier,
                    const Eigen::MatrixXf& queries, int k, int probe_n, int skip_l) {
  if (flat.size() != hier.size() || flat.dim() != hier.dim())
    throw ValidationError("index_recall: indexes hold different vector sets");
  for (const auto& id : flat.ids())
    if (hier.cluster_of(id) < 0)
      throw ValidationError("index_recall: id " + id + " missing from hierarchical index");

  double total = 0.0;
  for (Eigen::Index q = 0; q < queries.cols(); ++q) {
    auto exact = flat.search(queries.col(q), k);
    auto approx = hier.search(queries.col(q), probe_n, skip_l, k);
    std::unordered_set<std::string> exact_ids;
    for (const auto& hit : exact) exact_ids.insert(hit.product_id);
    int overlap = 0;
    for (const auto& hit : approx) overlap += exact_ids.count(hit.product_id) ? 1 : 0;
    total += static_cast<double>(overlap) / static_cast<double>(k);
  }
  return queries.cols() > 0 ? total / static_cast<double>(queries.cols()) : 0.0;
}

DiversityStats diversity(const std::vector<RecommendationResponse>& responses,
                         const Catalog& catalog) {
  if (responses.empty()) throw InvalidArgument("diversity: no responses");
  double category_sum = 0.0;
  double cluster_sum = 0.0;
  for (const auto& response : responses) {
    std::unordered_set<std::string> categories;
    std::unordered_set<int> clusters;
    for (const auto& item : response.items) {
      const Product* product = catalog.find(item.product_id);
      if (product) categories.insert(product->leaf_category());
      if (item.cluster_id >= 0) clusters.insert(item.cluster_id);
    }
    category_sum += static_cast<double>(categories.size());
    cluster_sum += static_cast<double>(clusters.size());
  }
  DiversityStats stats;
  stats.mean_distinct_categories = category_sum / static_cast<double>(responses.size());
  stats.mean_distinct_clusters = cluster_sum / static_cast<double>(responses.size());
  return stats;
}

namespace {

double percentile(std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  double rank = p * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(rank);
  auto hi = std::min(lo + 1, sorted.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

LatencyStats bench_latency(const Engine& engine, const std::vector<std::string>& workload,
                           int queries, int topk, int threads) {
  if (workload.empty()) throw InvalidArgument("bench_latency: empty workload");
  if (queries < 1 || threads < 1) throw InvalidArgument("bench_latency: bad parameters");

  std::vector<std::vector<double>> timings(static_cast<std::size_t>(threads));
  auto wall_start = std::chrono::steady_clock::now();
  auto run = [&](int tid) {
    auto& local = timings[static_cast<std::size_t>(tid)];
    local.reserve(static_cast<std::size_t>(queries / threads + 1));
    for (int i = tid; i < queries; i += threads) {
      const auto& id = workload[static_cast<std::size_t>(i) % workload.size()];
      auto start = std::chrono::steady_clock::now();
      engine.similar(id, topk);
      local.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
              .count());
    }
  };
  if (threads == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(run, t);
    for (auto& t : pool) t.join();
  }
  double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

  std::vector<double> all;
  for (auto& local : timings) all.insert(all.end(), local.begin(), local.end());
  std::sort(all.begin(), all.end());

  LatencyStats stats;
  stats.threads = threads;
  stats.p50_ms = percentile(all, 0.50);
  stats.p95_ms = percentile(all, 0.95);
  stats.p99_ms = percentile(all, 0.99);
  stats.mean_ms = all.empty() ? 0.0
                              : std::accumulate(all.begin(), all.end(), 0.0) /
                                    static_cast<double>(all.size());
  stats.queries_per_s = wall_s > 0.0 ? static_cast<double>(all.size()) / wall_s : 0.0;
  return stats;
}

namespace {

json metrics_json(const EvalReport& report) {
  json recall = json::object();
  for (const auto& [k, v] : report.recall_at_k) recall[std::to_string(k)] = v;
  json index_recall_obj = json::object();
  for (const auto& [k, v] : report.index_recall_at_k) index_recall_obj[std::to_string(k)] = v;
  return {{"recall_at_k", recall},
          {"index_recall_at_k", index_recall_obj},
          {"diversity",
           {{"mean_distinct_categories", report.diversity.mean_distinct_categories},
            {"mean_distinct_clusters", report.diversity.mean_distinct_clusters}}},
          {"seed", report.seed}};
}

}  // namespace

void save_report(const EvalReport& report, const std::string& path) {
  json obj = metrics_json(report);
  obj["checkpoint"] = report.checkpoint_path;
  obj["index"] = report.index_path;
  json latency = json::array();
  for (const auto& stats : report.latency)
    latency.push_back({{"threads", stats.threads},
                       {"p50_ms", stats.p50_ms},
                       {"p95_ms", stats.p95_ms},
                       {"p99_ms", stats.p99_ms},
                       {"mean_ms", stats.mean_ms},
                       {"queries_per_s", stats.queries_per_s}});
  obj["latency"] = std::move(latency);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << obj.dump(2) << "\n";
}

std::string report_metrics_fingerprint(const EvalReport& report) {
  return metrics_json(report).dump();
}

}  // namespace twotower
