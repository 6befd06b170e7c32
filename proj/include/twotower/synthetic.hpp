#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twotower/catalog.hpp"

namespace twotower {

// Knobs for the planted-structure generator. Products belong to latent groups
// and, inside each group, to small micro-neighbourhoods whose members share
// title tokens; co-view sessions concentrate on those neighbourhoods so that
// a content model has something recoverable to learn.
struct SyntheticSpec {
  int num_products = 1000;
  int num_leaf_categories = 20;
  int taxonomy_depth = 3;  // levels including the leaf level
  int num_sellers = 50;
  int num_groups = 5;
  int num_view_sessions = 2000;
  int views_per_session = 4;
  int num_purchase_sessions = 0;
  int micro_cluster_size = 20;
  double within_group_prob = 0.9;  // probability a session stays entirely inside its group
  double micro_bias = 0.85;        // share of in-group views drawn from the micro-neighbourhood
  double map_density = 0.5;        // fraction of leaf categories with a complementary entry

  void validate() const;
};

struct SyntheticData {
  Catalog catalog;
  InteractionLog log;
  // aligned with catalog.products
  std::vector<int> group_of;
  std::vector<int> micro_of;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Sidecar ground truth: one {"product_id", "group", "micro"} object per line.
void save_ground_truth(const SyntheticData& data, const std::string& path);
std::pair<std::vector<int>, std::vector<int>> load_ground_truth(const std::string& path,
                                                                const Catalog& catalog);

// Writes products/taxonomy/complementary/interactions/groundtruth files into dir.
void save_synthetic(const SyntheticData& data, const std::string& dir);

}  // namespace twotower
