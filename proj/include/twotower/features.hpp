#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "twotower/catalog.hpp"

namespace twotower {

// Featurization recipe. Frozen at training time and shipped inside the
// checkpoint so that serving featurizes exactly like training did. Category
// ids are interned here; table column 0 is reserved for unknown/padding.
struct FeatureConfig {
  int title_hash_buckets = 4096;
  int title_embedding_dim = 32;
  std::vector<double> price_bucket_edges;  // strictly increasing
  int price_embedding_dim = 16;
  int category_embedding_dim = 16;
  int max_category_levels = 4;
  int seller_hash_buckets = 1024;
  int seller_embedding_dim = 16;
  std::vector<std::string> category_ids;  // column i+1 of the category table

  int num_price_buckets() const { return static_cast<int>(price_bucket_edges.size()) + 1; }
  int num_category_rows() const { return static_cast<int>(category_ids.size()) + 1; }
  // title + price + per-level category + seller
  int concat_width() const {
    return title_embedding_dim + price_embedding_dim +
           max_category_levels * category_embedding_dim + seller_embedding_dim;
  }

  // 0 for unknown ids.
  int category_row(const std::string& category_id) const;
  void rebuild_category_lookup();
  void validate() const;

 private:
  std::unordered_map<std::string, int> category_row_;
};

struct FeatureIndices {
  std::vector<std::int32_t> title_buckets;  // one entry per token, duplicates kept
  std::int32_t price_bucket = 0;
  std::vector<std::int32_t> category_rows;  // padded/truncated to max_category_levels
  std::int32_t seller_bucket = 0;
  std::int32_t leaf_category_row = 0;
};

// Lowercased, split on non-alphanumeric ASCII; multi-byte UTF-8 sequences are
// kept inside tokens untouched.
std::vector<std::string> tokenize_title(std::string_view title);

FeatureIndices featurize(const Product& product, const FeatureConfig& config);

// Default dims plus a category vocabulary from the taxonomy and price bucket
// edges from catalogue price quantiles.
FeatureConfig default_feature_config(const Catalog& catalog);

}  // namespace twotower
