#pragma once

#include <map>
#include <string>
#include <vector>

#include "twotower/pairs.hpp"
#include "twotower/serving.hpp"
#include "twotower/train.hpp"

namespace twotower {

struct DiversityStats {
  double mean_distinct_categories = 0.0;
  double mean_distinct_clusters = 0.0;  // 0 when responses carry no cluster ids
};

struct LatencyStats {
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  double mean_ms = 0.0;
  double queries_per_s = 0.0;
  int threads = 1;
};

struct EvalReport {
  std::map<int, double> recall_at_k;
  std::map<int, double> index_recall_at_k;
  DiversityStats diversity;
  std::vector<LatencyStats> latency;  // one entry per thread count benched
  std::uint64_t seed = 0;
  std::string checkpoint_path;
  std::string index_path;
};

// Fraction of held-out (query, target) pairs whose target lands in the query's
// top-k (the query product itself is excluded). Complementary checkpoints are
// queried conditioned on the target's leaf category.
std::map<int, double> recall_at_k(const EncoderParams<float>& params, const FeatureConfig& config,
                                  const AnyIndex& index, const Catalog& catalog,
                                  const PairSet& heldout, const std::vector<int>& ks);

// Mean top-k overlap between the hierarchical index and the exact oracle over
// the same vector set.
double index_recall(const FlatIndex& flat, const HierarchicalIndex& hier,
                    const Eigen::MatrixXf& queries, int k, int probe_n, int skip_l = 0);

DiversityStats diversity(const std::vector<RecommendationResponse>& responses,
                         const Catalog& catalog);

// Latency percentiles for Engine::similar over a fixed workload.
LatencyStats bench_latency(const Engine& engine, const std::vector<std::string>& workload,
                           int queries, int topk, int threads);

void save_report(const EvalReport& report, const std::string& path);

// Deterministic metric fields only (latency and timing stripped), for
// comparing runs.
std::string report_metrics_fingerprint(const EvalReport& report);

}  // namespace twotower
