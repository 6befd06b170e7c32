#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "twotower/ann.hpp"
#include "twotower/catalog.hpp"
#include "twotower/encoder.hpp"

namespace twotower {

struct UserEvent {
  std::string product_id;
  std::int64_t ts = 0;
};

struct UserHistory {
  std::vector<UserEvent> events;  // timestamps non-decreasing, most recent last
};

struct CategoryRepresentative {
  std::string category_id;
  std::string product_id;
  std::int64_t ts = 0;
};

struct CategoryRepresentatives {
  std::vector<CategoryRepresentative> by_recency;  // most recent category first
  bool empty() const { return by_recency.empty(); }
};

inline constexpr std::int64_t kHistoryWindowSeconds = 7 * 24 * 3600;
inline constexpr int kHistoryMaxViews = 100;

// Keeps views no older than 7 days (boundary inclusive), then the most recent
// 100 of those; the most recent view per leaf category becomes that category's
// representative. Events for products missing from the catalogue are ignored.
CategoryRepresentatives aggregate_history(const UserHistory& history, std::int64_t now,
                                          const Catalog& catalog);

struct RecItem {
  std::string product_id;
  float score = 0.0f;
  std::string group;     // target category, source category or cluster provenance
  int cluster_id = -1;
};

// Round-robin merge over groups in the given order: one item per non-exhausted
// group per round, duplicates dropped (first occurrence wins), truncated at
// topk.
std::vector<RecItem> interleave(const std::vector<std::vector<RecItem>>& groups, int topk);

struct RecommendationResponse {
  std::string status = "ok";  // ok | no_mapping | cold_user
  std::vector<RecItem> items;
  std::uint64_t model_version = 0;
  std::uint64_t index_version = 0;
  double took_ms = 0.0;
};

// Immutable bundle a request is answered from.
struct Snapshot {
  EncoderParams<float> params;
  FeatureConfig config;
  AnyIndex index;
  std::uint64_t version = 0;
};

struct EngineOptions {
  int default_probe_n = 16;  // hierarchical probing for the similar endpoint
  int default_skip_l = 0;
};

// Serves the three recommendation modes from an atomically swappable snapshot.
// Readers never block: a request pins the snapshot pointer once and answers
// entirely from it.
class Engine {
 public:
  explicit Engine(Catalog catalog, EngineOptions options = {});

  // Loads (or replaces) the model/index pair. On failure the active snapshot
  // is left untouched and the error is rethrown.
  std::uint64_t load(const std::string& checkpoint_path, const std::string& index_path);

  RecommendationResponse similar(const std::string& product_id, int topk) const;

  // One candidate group per mapped target category, each post-filtered to that
  // category unless filter_to_target is false, then interleaved.
  RecommendationResponse complementary(const std::string& product_id, int topk,
                                       bool filter_to_target = true) const;

  RecommendationResponse inspirational(const UserHistory& history, std::optional<std::int64_t> now,
                                       int probe_n, int skip_l, int topk) const;

  const Catalog& catalog() const { return catalog_; }
  std::shared_ptr<const Snapshot> snapshot() const;
  bool loaded() const { return snapshot() != nullptr; }
  std::uint64_t version() const;

 private:
  std::shared_ptr<const Snapshot> require_snapshot() const;

  Catalog catalog_;
  EngineOptions options_;
  std::shared_ptr<const Snapshot> snapshot_;
  mutable std::mutex swap_mutex_;  // serializes reloads, not reads
};

}  // namespace twotower
