#include "twotower/features.hpp"

#include <algorithm>
#include <cctype>

namespace twotower {

int FeatureConfig::category_row(const std::string& category_id) const {
  auto it = category_row_.find(category_id);
  return it == category_row_.end() ? 0 : it->second;
}

void FeatureConfig::rebuild_category_lookup() {
  category_row_.clear();
  for (std::size_t i = 0; i < category_ids.size(); ++i)
    category_row_.emplace(category_ids[i], static_cast<int>(i) + 1);
}

void FeatureConfig::validate() const {
  if (title_hash_buckets < 1 || seller_hash_buckets < 1)
    throw ValidationError("feature config: hash bucket counts must be >= 1");
  if (title_embedding_dim < 1 || price_embedding_dim < 1 || category_embedding_dim < 1 ||
      seller_embedding_dim < 1)
    throw ValidationError("feature config: embedding dims must be >= 1");
  if (max_category_levels < 1)
    throw ValidationError("feature config: max_category_levels must be >= 1");
  for (std::size_t i = 1; i < price_bucket_edges.size(); ++i)
    if (!(price_bucket_edges[i - 1] < price_bucket_edges[i]))
      throw ValidationError("feature config: price bucket edges must be strictly increasing");
}

std::vector<std::string> tokenize_title(std::string_view title) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : title) {
    bool keep = c >= 0x80 || std::isalnum(c);
    if (keep) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

FeatureIndices featurize(const Product& product, const FeatureConfig& config) {
  FeatureIndices out;

  for (const auto& token : tokenize_title(product.title))
    out.title_buckets.push_back(
        static_cast<std::int32_t>(fnv1a64(token) % static_cast<std::uint64_t>(config.title_hash_buckets)));

  // Bucket b holds prices in [edge(b-1), edge(b)); below the first edge is 0,
  // at or above the last edge is len(edges).
  const auto& edges = config.price_bucket_edges;
  out.price_bucket = static_cast<std::int32_t>(
      std::upper_bound(edges.begin(), edges.end(), product.price) - edges.begin());

  // Truncated from the leaf side when too deep, padded with the reserved row 0.
  const auto& path = product.category_path;
  std::size_t levels = static_cast<std::size_t>(config.max_category_levels);
  std::size_t start = path.size() > levels ? path.size() - levels : 0;
  for (std::size_t i = start; i < path.size(); ++i)
    out.category_rows.push_back(static_cast<std::int32_t>(config.category_row(path[i])));
  out.category_rows.resize(levels, 0);
  out.leaf_category_row = static_cast<std::int32_t>(config.category_row(path.back()));

  out.seller_bucket = static_cast<std::int32_t>(
      fnv1a64(product.seller_id) % static_cast<std::uint64_t>(config.seller_hash_buckets));
  return out;
}

FeatureConfig default_feature_config(const Catalog& catalog) {
  FeatureConfig config;
  config.category_ids = catalog.taxonomy.ids();
  config.rebuild_category_lookup();

  std::vector<double> prices;
  prices.reserve(catalog.products.size());
  for (const auto& p : catalog.products) prices.push_back(p.price);
  std::sort(prices.begin(), prices.end());
  if (!prices.empty()) {
    const int wanted = 15;  // 16 buckets
    for (int q = 1; q <= wanted; ++q) {
      std::size_t idx = static_cast<std::size_t>(
          static_cast<double>(q) / (wanted + 1) * static_cast<double>(prices.size()));
      idx = std::min(idx, prices.size() - 1);
      double edge = prices[idx];
      if (config.price_bucket_edges.empty() || edge > config.price_bucket_edges.back())
        config.price_bucket_edges.push_back(edge);
    }
  }
  config.validate();
  return config;
}

}  // namespace twotower
