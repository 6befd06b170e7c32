#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twotower/catalog.hpp"

namespace twotower {

enum class PairKind : std::uint8_t { CoView, CoPurchase };

struct TrainingPair {
  std::string query_id;
  std::string target_id;
  std::int64_t weight = 0;  // co-occurrence count
};

struct PairSet {
  PairKind kind = PairKind::CoView;
  std::int64_t min_cooccurrence = 1;
  std::vector<TrainingPair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Co-view mining: (p, q) is kept when both were viewed in the same session in
// at least min_cooccurrence distinct sessions. The relation is symmetric, so
// each kept pair is emitted in both directions. Output is sorted by
// (query_id, target_id).
PairSet mine_coview_pairs(const InteractionLog& log, std::int64_t min_cooccurrence);

// Co-purchase mining: directional. (p, q) is kept when both were purchased in
// the same session in at least min_cooccurrence distinct sessions and the
// complementarity heuristic holds: leaf(q) is in map[leaf(p)] and the leaves
// differ. Events whose product is missing from the catalog are ignored.
PairSet mine_copurchase_pairs(const InteractionLog& log, const Catalog& catalog,
                              const ComplementaryMap& map, std::int64_t min_cooccurrence);

// Deterministic split by hash of (query_id, target_id); holdout_percent of the
// pairs land in the second set.
std::pair<PairSet, PairSet> split_pairs(const PairSet& pairs, int holdout_percent);

// First line is a metadata object ({"kind", "min_cooccurrence"}), then one
// {"query", "target", "weight"} object per pair.
void save_pairs(const PairSet& pairs, const std::string& path);
PairSet load_pairs(const std::string& path);

}  // namespace twotower
