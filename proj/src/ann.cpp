#include "twotower/ann.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "twotower/detail/binio.hpp"

namespace twotower {

float dot_strict(const float* a, const float* b, int dim) {
  float acc = 0.0f;
  for (int i = 0; i < dim; ++i) acc += a[i] * b[i];
  return acc;
}

namespace {

constexpr std::uint32_t kIndexMagic = 0x58495454;  // "TTIX"
constexpr std::uint32_t kIndexVersion = 1;

void top_k_hits(std::vector<SearchHit>& hits, int topk) {
  auto better = [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.product_id < b.product_id;
  };
  if (static_cast<std::size_t>(topk) < hits.size()) {
    std::partial_sort(hits.begin(), hits.begin() + topk, hits.end(), better);
    hits.resize(static_cast<std::size_t>(topk));
  } else {
    std::sort(hits.begin(), hits.end(), better);
  }
}

}  // namespace

FlatIndex FlatIndex::build(Eigen::MatrixXf vectors, std::vector<std::string> ids) {
  if (vectors.cols() == 0) throw InvalidArgument("flat index: no vectors");
  if (static_cast<std::size_t>(vectors.cols()) != ids.size())
    throw ShapeError("flat index: id/vector count mismatch");
  FlatIndex index;
  index.vectors_ = std::move(vectors);
  index.ids_ = std::move(ids);
  for (std::size_t i = 0; i < index.ids_.size(); ++i) {
    if (!index.id_to_col_.emplace(index.ids_[i], static_cast<int>(i)).second)
      throw ValidationError("flat index: duplicate product id " + index.ids_[i]);
    double norm = index.vectors_.col(static_cast<Eigen::Index>(i)).cast<double>().norm();
    if (std::abs(norm - 1.0) > 1e-4)
      throw ValidationError("flat index: vector for " + index.ids_[i] + " is not unit norm");
  }
  return index;
}

FlatIndex FlatIndex::build(const std::vector<ProductEmbedding>& embeddings) {
  if (embeddings.empty()) throw InvalidArgument("flat index: no vectors");
  Eigen::MatrixXf vectors(embeddings.front().vector.size(),
                          static_cast<Eigen::Index>(embeddings.size()));
  std::vector<std::string> ids;
  ids.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].vector.size() != vectors.rows())
      throw ShapeError("flat index: inconsistent embedding dims");
    vectors.col(static_cast<Eigen::Index>(i)) = embeddings[i].vector;
    ids.push_back(embeddings[i].product_id);
  }
  return build(std::move(vectors), std::move(ids));
}

std::vector<SearchHit> FlatIndex::search(const Eigen::Ref<const Eigen::VectorXf>& query,
                                         int topk) const {
  if (topk < 1) throw InvalidArgument("search: topk must be >= 1");
  if (query.size() != vectors_.rows()) throw ShapeError("search: query dim mismatch");
  Eigen::VectorXf q = query;  // contiguous
  std::vector<SearchHit> hits(static_cast<std::size_t>(vectors_.cols()));
  for (Eigen::Index i = 0; i < vectors_.cols(); ++i) {
    hits[static_cast<std::size_t>(i)].product_id = ids_[static_cast<std::size_t>(i)];
    hits[static_cast<std::size_t>(i)].score =
        dot_strict(vectors_.col(i).data(), q.data(), dim());
  }
  top_k_hits(hits, topk);
  return hits;
}

int FlatIndex::col_of(const std::string& id) const {
  auto it = id_to_col_.find(id);
  return it == id_to_col_.end() ? -1 : it->second;
}

KMeansResult kmeans(const Eigen::MatrixXf& vectors, int k, const KMeansOptions& options) {
  const Eigen::Index n = vectors.cols();
  const Eigen::Index d = vectors.rows();
  if (k < 1) throw InvalidArgument("kmeans: k must be >= 1");
  if (static_cast<Eigen::Index>(k) > n)
    throw InvalidArgument("kmeans: k exceeds the number of points");
  if (options.max_iters < 1) throw InvalidArgument("kmeans: max_iters must be >= 1");

  Rng rng(options.seed);
  Eigen::MatrixXd points = vectors.cast<double>();
  Eigen::MatrixXd centroids(d, k);
  Eigen::VectorXd point_sq = points.colwise().squaredNorm();

  // squared distances from every point to one centre
  auto distances_to = [&](const Eigen::VectorXd& centre) {
    return ((point_sq.array() + centre.squaredNorm()) -
            2.0 * (points.transpose() * centre).array())
        .cwiseMax(0.0)
        .matrix()
        .eval();
  };

  // k-means++ seeding
  {
    Eigen::Index first = static_cast<Eigen::Index>(rng.uniform_int(n));
    centroids.col(0) = points.col(first);
    Eigen::VectorXd d2 = distances_to(centroids.col(0));
    for (int c = 1; c < k; ++c) {
      double total = d2.sum();
      Eigen::Index chosen;
      if (total <= 0.0) {
        chosen = static_cast<Eigen::Index>(rng.uniform_int(n));
      } else {
        double u = rng.uniform() * total;
        double acc = 0.0;
        chosen = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
          acc += d2(i);
          if (u < acc) {
            chosen = i;
            break;
          }
        }
      }
      centroids.col(c) = points.col(chosen);
      d2 = d2.cwiseMin(distances_to(centroids.col(c)));
    }
  }

  KMeansResult result;
  result.assignment.assign(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd min_dist(n);

  const Eigen::Index block = 4096;
  for (int iter = 0; iter <= options.max_iters; ++iter) {
    // assignment pass: argmin ||x - c||^2 via dot products
    Eigen::VectorXd centroid_sq = centroids.colwise().squaredNorm();
    for (Eigen::Index start = 0; start < n; start += block) {
      Eigen::Index len = std::min(block, n - start);
      Eigen::MatrixXd scores = centroids.transpose() * points.middleCols(start, len);
      for (Eigen::Index j = 0; j < len; ++j) {
        int best = 0;
        double best_val = centroid_sq(0) - 2.0 * scores(0, j);
        for (int c = 1; c < k; ++c) {
          double val = centroid_sq(c) - 2.0 * scores(c, j);
          if (val < best_val) {
            best_val = val;
            best = c;
          }
        }
        result.assignment[static_cast<std::size_t>(start + j)] = best;
        min_dist(start + j) = std::max(0.0, best_val + point_sq(start + j));
      }
    }

    // reseed empty clusters from the farthest points
    std::vector<Eigen::Index> count(static_cast<std::size_t>(k), 0);
    for (int a : result.assignment) ++count[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index farthest = 0;
      double far_dist = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (count[static_cast<std::size_t>(result.assignment[static_cast<std::size_t>(i)])] <= 1)
          continue;  // do not empty another cluster
        if (min_dist(i) > far_dist) {
          far_dist = min_dist(i);
          farthest = i;
        }
      }
      --count[static_cast<std::size_t>(result.assignment[static_cast<std::size_t>(farthest)])];
      result.assignment[static_cast<std::size_t>(farthest)] = c;
      count[static_cast<std::size_t>(c)] = 1;
      centroids.col(c) = points.col(farthest);
      min_dist(farthest) = 0.0;
    }

    result.objective.push_back(min_dist.mean());
    bool converged = result.objective.size() >= 2 &&
                     (result.objective[result.objective.size() - 2] - result.objective.back()) <
                         options.tol * std::max(result.objective[result.objective.size() - 2], 1e-12);
    if (iter == options.max_iters || converged) break;

    // update pass
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(d, k);
    for (Eigen::Index i = 0; i < n; ++i)
      sums.col(result.assignment[static_cast<std::size_t>(i)]) += points.col(i);
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(k), 0);
    for (int a : result.assignment) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c)
      centroids.col(c) = sums.col(c) / static_cast<double>(sizes[static_cast<std::size_t>(c)]);
  }

  result.centroids = centroids.cast<float>();
  return result;
}

HierarchicalIndex HierarchicalIndex::build(const Eigen::MatrixXf& vectors,
                                           std::vector<std::string> ids, int k,
                                           const KMeansOptions& options, CentroidScoring scoring) {
  if (static_cast<std::size_t>(vectors.cols()) != ids.size())
    throw ShapeError("hierarchical index: id/vector count mismatch");
  auto clustering = kmeans(vectors, k, options);

  HierarchicalIndex index;
  index.scoring_ = scoring;
  index.centroids_ = clustering.centroids;
  if (scoring == CentroidScoring::Normalized)
    for (Eigen::Index c = 0; c < index.centroids_.cols(); ++c) {
      double norm = index.centroids_.col(c).cast<double>().norm();
      if (norm > 0.0) index.centroids_.col(c) /= static_cast<float>(norm);
    }

  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < vectors.cols(); ++i)
    members[static_cast<std::size_t>(clustering.assignment[static_cast<std::size_t>(i)])]
        .push_back(i);

  for (int c = 0; c < k; ++c) {
    const auto& cols = members[static_cast<std::size_t>(c)];
    if (cols.empty())
      throw Error("hierarchical index: empty cluster after construction");
    Eigen::MatrixXf cluster_vectors(vectors.rows(), static_cast<Eigen::Index>(cols.size()));
    std::vector<std::string> cluster_ids;
    cluster_ids.reserve(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
      cluster_vectors.col(static_cast<Eigen::Index>(j)) = vectors.col(cols[j]);
      cluster_ids.push_back(ids[static_cast<std::size_t>(cols[j])]);
      index.assignment_.emplace(ids[static_cast<std::size_t>(cols[j])], c);
    }
    index.clusters_.push_back(FlatIndex::build(std::move(cluster_vectors), std::move(cluster_ids)));
  }
  return index;
}

HierarchicalIndex HierarchicalIndex::build(const std::vector<ProductEmbedding>& embeddings, int k,
                                           const KMeansOptions& options, CentroidScoring scoring) {
  if (embeddings.empty()) throw InvalidArgument("hierarchical index: no vectors");
  Eigen::MatrixXf vectors(embeddings.front().vector.size(),
                          static_cast<Eigen::Index>(embeddings.size()));
  std::vector<std::string> ids;
  ids.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].vector.size() != vectors.rows())
      throw ShapeError("hierarchical index: inconsistent embedding dims");
    vectors.col(static_cast<Eigen::Index>(i)) = embeddings[i].vector;
    ids.push_back(embeddings[i].product_id);
  }
  return build(vectors, std::move(ids), k, options, scoring);
}

std::vector<int> HierarchicalIndex::rank_clusters(
    const Eigen::Ref<const Eigen::VectorXf>& query) const {
  Eigen::VectorXf q = query;
  std::vector<std::pair<float, int>> scored(clusters_.size());
  for (std::size_t c = 0; c < clusters_.size(); ++c)
    scored[c] = {dot_strict(centroids_.col(static_cast<Eigen::Index>(c)).data(), q.data(), dim()),
                 static_cast<int>(c)};
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> order;
  order.reserve(scored.size());
  for (const auto& [score, c] : scored) order.push_back(c);
  return order;
}

std::vector<SearchHit> HierarchicalIndex::search(const Eigen::Ref<const Eigen::VectorXf>& query,
                                                 int probe_n, int skip_l, int topk) const {
  if (probe_n < 1) throw InvalidArgument("hierarchical search: probe_n must be >= 1");
  if (skip_l < 0) throw InvalidArgument("hierarchical search: skip_l must be >= 0");
  if (skip_l + probe_n > num_clusters())
    throw InvalidArgument("hierarchical search: skip_l + probe_n exceeds cluster count");
  if (topk < 1) throw InvalidArgument("hierarchical search: topk must be >= 1");
  if (query.size() != centroids_.rows())
    throw ShapeError("hierarchical search: query dim mismatch");

  auto order = rank_clusters(query);
  std::vector<SearchHit> hits;
  for (int p = skip_l; p < skip_l + probe_n; ++p) {
    int c = order[static_cast<std::size_t>(p)];
    const FlatIndex& cluster = clusters_[static_cast<std::size_t>(c)];
    auto cluster_hits = cluster.search(query, topk);
    for (auto& hit : cluster_hits) {
      hit.cluster_id = c;
      hits.push_back(std::move(hit));
    }
  }
  top_k_hits(hits, topk);
  return hits;
}

std::int64_t HierarchicalIndex::size() const {
  std::int64_t total = 0;
  for (const auto& cluster : clusters_) total += cluster.size();
  return total;
}

int HierarchicalIndex::cluster_of(const std::string& id) const {
  auto it = assignment_.find(id);
  return it == assignment_.end() ? -1 : it->second;
}

namespace {

void write_flat(detail::BinaryWriter& w, const FlatIndex& index) {
  w.u64(static_cast<std::uint64_t>(index.size()));
  for (const auto& id : index.ids()) w.string(id);
  w.f32_array(index.vectors().data(), static_cast<std::size_t>(index.vectors().size()));
}

FlatIndex read_flat(detail::BinaryReader& r, int dim) {
  auto n = static_cast<Eigen::Index>(r.u64());
  std::vector<std::string> ids(static_cast<std::size_t>(n));
  for (auto& id : ids) id = r.string();
  Eigen::MatrixXf vectors(dim, n);
  r.f32_array(vectors.data(), static_cast<std::size_t>(vectors.size()));
  return FlatIndex::build(std::move(vectors), std::move(ids));
}

}  // namespace

void save_index(const AnyIndex& index, const std::string& path) {
  detail::BinaryWriter w(path);
  w.u32(kIndexMagic);
  w.u32(kIndexVersion);
  if (const auto* flat = std::get_if<FlatIndex>(&index)) {
    w.u8(0);
    w.u8(0);
    w.u32(static_cast<std::uint32_t>(flat->dim()));
    write_flat(w, *flat);
  } else {
    const auto& hier = std::get<HierarchicalIndex>(index);
    w.u8(1);
    w.u8(hier.scoring() == CentroidScoring::RawMean ? 0 : 1);
    w.u32(static_cast<std::uint32_t>(hier.dim()));
    w.u32(static_cast<std::uint32_t>(hier.num_clusters()));
    w.f32_array(hier.centroids().data(), static_cast<std::size_t>(hier.centroids().size()));
    for (int c = 0; c < hier.num_clusters(); ++c) write_flat(w, hier.cluster(c));
  }
  w.commit();
}

AnyIndex load_index(const std::string& path) {
  detail::BinaryReader r(path);
  if (r.u32() != kIndexMagic) throw ParseError(path + ": not an index file");
  if (r.u32() != kIndexVersion) throw ParseError(path + ": unsupported index version");
  std::uint8_t kind = r.u8();
  std::uint8_t scoring = r.u8();
  int dim = static_cast<int>(r.u32());
  if (dim < 1) throw ParseError(path + ": bad dimension");
  if (kind == 0) return read_flat(r, dim);
  if (kind != 1) throw ParseError(path + ": unknown index kind");

  int k = static_cast<int>(r.u32());
  Eigen::MatrixXf centroids(dim, k);
  r.f32_array(centroids.data(), static_cast<std::size_t>(centroids.size()));
  std::vector<FlatIndex> clusters;
  clusters.reserve(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) clusters.push_back(read_flat(r, dim));
  return HierarchicalIndex::restore(
      std::move(centroids), scoring == 0 ? CentroidScoring::RawMean : CentroidScoring::Normalized,
      std::move(clusters));
}

HierarchicalIndex HierarchicalIndex::restore(Eigen::MatrixXf centroids, CentroidScoring scoring,
                                             std::vector<FlatIndex> clusters) {
  HierarchicalIndex index;
  index.centroids_ = std::move(centroids);
  index.scoring_ = scoring;
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (const auto& id : clusters[c].ids())
      if (!index.assignment_.emplace(id, static_cast<int>(c)).second)
        throw ValidationError("hierarchical index: product " + id + " in multiple clusters");
  index.clusters_ = std::move(clusters);
  return index;
}

IndexInfo inspect_index(const std::string& path) {
  detail::BinaryReader r(path);
  if (r.u32() != kIndexMagic) throw ParseError(path + ": not an index file");
  IndexInfo info;
  info.version = r.u32();
  std::uint8_t kind = r.u8();
  std::uint8_t scoring = r.u8();
  info.kind = kind == 0 ? "flat" : "hierarchical";
  info.dim = static_cast<int>(r.u32());
  if (kind == 0) {
    info.num_vectors = static_cast<std::int64_t>(r.u64());
    info.num_clusters = 0;
  } else {
    info.num_clusters = static_cast<int>(r.u32());
    info.scoring = scoring == 0 ? "raw" : "normalized";
    // centroid payload, then per-cluster counts
    std::vector<float> skip(static_cast<std::size_t>(info.dim) *
                            static_cast<std::size_t>(info.num_clusters));
    r.f32_array(skip.data(), skip.size());
    std::int64_t total = 0;
    for (int c = 0; c < info.num_clusters; ++c) {
      auto n = static_cast<std::int64_t>(r.u64());
      for (std::int64_t i = 0; i < n; ++i) r.string();
      std::vector<float> data(static_cast<std::size_t>(info.dim) * static_cast<std::size_t>(n));
      r.f32_array(data.data(), data.size());
      total += n;
    }
    info.num_vectors = total;
  }
  return info;
}

}  // namespace twotower
