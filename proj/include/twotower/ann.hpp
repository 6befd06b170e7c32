#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "twotower/encoder.hpp"

namespace twotower {

struct SearchHit {
  std::string product_id;
  float score = 0.0f;    // dot product with the query
  int cluster_id = -1;   // -1 for flat searches
};

// Strict left-to-right accumulation; all ranking paths score through this so
// exact and cluster-partitioned scans agree bit for bit.
float dot_strict(const float* a, const float* b, int dim);

// Exact dot-product index over unit-norm vectors; the correctness oracle for
// the hierarchical index.
class FlatIndex {
 public:
  FlatIndex() = default;

  // Columns are vectors. Validates unit norms and id uniqueness.
  static FlatIndex build(Eigen::MatrixXf vectors, std::vector<std::string> ids);
  static FlatIndex build(const std::vector<ProductEmbedding>& embeddings);

  // Full scan; returns min(topk, size) hits ordered by score desc, id asc.
  std::vector<SearchHit> search(const Eigen::Ref<const Eigen::VectorXf>& query, int topk) const;

  int dim() const { return static_cast<int>(vectors_.rows()); }
  std::int64_t size() const { return static_cast<std::int64_t>(vectors_.cols()); }
  const Eigen::MatrixXf& vectors() const { return vectors_; }
  const std::vector<std::string>& ids() const { return ids_; }
  int col_of(const std::string& id) const;

 private:
  Eigen::MatrixXf vectors_;  // dim x n
  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> id_to_col_;
};

struct KMeansOptions {
  int max_iters = 25;
  double tol = 1e-4;  // stop when the relative objective decrease falls below
  std::uint64_t seed = 0;
};

struct KMeansResult {
  Eigen::MatrixXf centroids;  // dim x k
  std::vector<int> assignment;
  std::vector<double> objective;  // mean squared distance after each assignment pass
};

// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded to the
// point farthest from its current centroid, so no cluster ends up empty.
KMeansResult kmeans(const Eigen::MatrixXf& vectors, int k, const KMeansOptions& options);

enum class CentroidScoring : std::uint8_t { RawMean, Normalized };

// Two-level index: k-means centroids on top, one exact sub-index per cluster.
class HierarchicalIndex {
 public:
  HierarchicalIndex() = default;

  static HierarchicalIndex build(const Eigen::MatrixXf& vectors, std::vector<std::string> ids,
                                 int k, const KMeansOptions& options,
                                 CentroidScoring scoring = CentroidScoring::RawMean);
  static HierarchicalIndex build(const std::vector<ProductEmbedding>& embeddings, int k,
                                 const KMeansOptions& options,
                                 CentroidScoring scoring = CentroidScoring::RawMean);

  // Ranks clusters by centroid dot product, drops the skip_l closest, scans
  // the next probe_n exactly and merges. Requires skip_l + probe_n <= k.
  std::vector<SearchHit> search(const Eigen::Ref<const Eigen::VectorXf>& query, int probe_n,
                                int skip_l, int topk) const;

  // Cluster ranking for a query (score desc, cluster id asc), before skipping.
  std::vector<int> rank_clusters(const Eigen::Ref<const Eigen::VectorXf>& query) const;

  int dim() const { return static_cast<int>(centroids_.rows()); }
  int num_clusters() const { return static_cast<int>(clusters_.size()); }
  std::int64_t size() const;
  const FlatIndex& cluster(int c) const { return clusters_.at(static_cast<std::size_t>(c)); }
  const Eigen::MatrixXf& centroids() const { return centroids_; }
  CentroidScoring scoring() const { return scoring_; }
  int cluster_of(const std::string& id) const;  // -1 if unknown

  // Reassembles an index from persisted parts; membership is taken as stored.
  static HierarchicalIndex restore(Eigen::MatrixXf centroids, CentroidScoring scoring,
                                   std::vector<FlatIndex> clusters);

 private:
  Eigen::MatrixXf centroids_;  // dim x k; raw means unless scoring is Normalized
  CentroidScoring scoring_ = CentroidScoring::RawMean;
  std::vector<FlatIndex> clusters_;
  std::unordered_map<std::string, int> assignment_;
};

using AnyIndex = std::variant<FlatIndex, HierarchicalIndex>;

struct IndexInfo {
  std::uint32_t version = 0;
  std::string kind;     // "flat" | "hierarchical"
  std::string scoring;  // "raw" | "normalized" (hierarchical only)
  int dim = 0;
  std::int64_t num_vectors = 0;
  int num_clusters = 0;
};

// Self-describing binary format, little-endian float32 payload; round-trips
// bit-exactly.
void save_index(const AnyIndex& index, const std::string& path);
AnyIndex load_index(const std::string& path);
IndexInfo inspect_index(const std::string& path);

inline int index_dim(const AnyIndex& index) {
  return std::visit([](const auto& i) { return i.dim(); }, index);
}
inline std::int64_t index_size(const AnyIndex& index) {
  return std::visit([](const auto& i) { return i.size(); }, index);
}

}  // namespace twotower
