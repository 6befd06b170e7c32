#include "twotower/serving.hpp"

#include <algorithm>
#include <chrono>
#include <unordered_set>

namespace twotower {

namespace {

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

CategoryRepresentatives aggregate_history(const UserHistory& history, std::int64_t now,
                                          const Catalog& catalog) {
  for (std::size_t i = 1; i < history.events.size(); ++i)
    if (history.events[i].ts < history.events[i - 1].ts)
      throw InvalidArgument("history timestamps must be non-decreasing");

  // 7-day window, boundary inclusive, then the most recent 100 views.
  std::vector<const UserEvent*> in_window;
  for (const auto& e : history.events)
    if (now - e.ts <= kHistoryWindowSeconds) in_window.push_back(&e);
  if (in_window.size() > static_cast<std::size_t>(kHistoryMaxViews))
    in_window.erase(in_window.begin(),
                    in_window.end() - static_cast<std::ptrdiff_t>(kHistoryMaxViews));

  struct Slot {
    std::string product_id;
    std::int64_t ts = 0;
    std::size_t position = 0;
  };
  std::unordered_map<std::string, Slot> latest;
  for (std::size_t pos = 0; pos < in_window.size(); ++pos) {
    const UserEvent& e = *in_window[pos];
    const Product* product = catalog.find(e.product_id);
    if (!product) continue;
    auto& slot = latest[product->leaf_category()];
    // later position wins; events arrive oldest first
    slot = {e.product_id, e.ts, pos + 1};
  }

  std::vector<std::pair<std::string, Slot>> ordered(latest.begin(), latest.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.second.position > b.second.position; });

  CategoryRepresentatives reps;
  for (auto& [category, slot] : ordered)
    reps.by_recency.push_back({category, slot.product_id, slot.ts});
  return reps;
}

std::vector<RecItem> interleave(const std::vector<std::vector<RecItem>>& groups, int topk) {
  std::vector<RecItem> out;
  if (topk <= 0) return out;
  std::vector<std::size_t> cursor(groups.size(), 0);
  std::unordered_set<std::string> seen;
  bool any_left = true;
  while (any_left && out.size() < static_cast<std::size_t>(topk)) {
    any_left = false;
    for (std::size_t g = 0; g < groups.size() && out.size() < static_cast<std::size_t>(topk); ++g) {
      auto& pos = cursor[g];
      while (pos < groups[g].size() && seen.count(groups[g][pos].product_id)) ++pos;
      if (pos >= groups[g].size()) continue;
      seen.insert(groups[g][pos].product_id);
      out.push_back(groups[g][pos]);
      ++pos;
      if (pos < groups[g].size()) any_left = true;
    }
  }
  return out;
}

Engine::Engine(Catalog catalog, EngineOptions options)
    : catalog_(std::move(catalog)), options_(options) {}

std::shared_ptr<const Snapshot> Engine::snapshot() const {
  return std::atomic_load_explicit(&snapshot_, std::memory_order_acquire);
}

std::uint64_t Engine::version() const {
  auto snap = snapshot();
  return snap ? snap->version : 0;
}

std::shared_ptr<const Snapshot> Engine::require_snapshot() const {
  auto snap = snapshot();
  if (!snap) throw NotLoadedError("no model/index loaded");
  return snap;
}

std::uint64_t Engine::load(const std::string& checkpoint_path, const std::string& index_path) {
  // Build and validate the candidate snapshot fully before publishing it;
  // current requests keep serving from the old one.
  auto ckpt = load_checkpoint(checkpoint_path);
  auto index = load_index(index_path);
  if (index_dim(index) != ckpt.params.output_dim)
    throw ValidationError("index dimension " + std::to_string(index_dim(index)) +
                          " does not match checkpoint output dim " +
                          std::to_string(ckpt.params.output_dim));
  auto check_ids = [&](const FlatIndex& flat) {
    for (const auto& id : flat.ids())
      if (catalog_.index_of(id) < 0)
        throw ValidationError("index references product missing from catalogue: " + id);
  };
  if (const auto* flat = std::get_if<FlatIndex>(&index)) {
    check_ids(*flat);
  } else {
    const auto& hier = std::get<HierarchicalIndex>(index);
    for (int c = 0; c < hier.num_clusters(); ++c) check_ids(hier.cluster(c));
  }

  std::lock_guard<std::mutex> lock(swap_mutex_);
  auto current = snapshot();
  auto next = std::make_shared<Snapshot>();
  next->params = std::move(ckpt.params);
  next->config = std::move(ckpt.config);
  next->index = std::move(index);
  next->version = current ? current->version + 1 : 1;
  std::atomic_store_explicit(&snapshot_, std::shared_ptr<const Snapshot>(next),
                             std::memory_order_release);
  return next->version;
}

namespace {

std::vector<SearchHit> snapshot_search(const Snapshot& snap, const Eigen::VectorXf& query,
                                       int fetch, const EngineOptions& options) {
  if (const auto* flat = std::get_if<FlatIndex>(&snap.index)) return flat->search(query, fetch);
  const auto& hier = std::get<HierarchicalIndex>(snap.index);
  int k = hier.num_clusters();
  int skip = std::min(options.default_skip_l, k - 1);
  int probe = std::max(1, std::min(options.default_probe_n, k - skip));
  return hier.search(query, probe, skip, fetch);
}

}  // namespace

RecommendationResponse Engine::similar(const std::string& product_id, int topk) const {
  auto start = std::chrono::steady_clock::now();
  if (topk < 1) throw InvalidArgument("topk must be >= 1");
  auto snap = require_snapshot();
  const Product* product = catalog_.find(product_id);
  if (!product) throw NotFoundError("unknown product " + product_id);

  Eigen::VectorXf query = encode(*product, snap->params, snap->config);
  auto hits = snapshot_search(*snap, query, topk + 1, options_);

  RecommendationResponse response;
  for (auto& hit : hits) {
    if (hit.product_id == product_id) continue;
    if (response.items.size() >= static_cast<std::size_t>(topk)) break;
    response.items.push_back(
        {std::move(hit.product_id), hit.score, product->leaf_category(), hit.cluster_id});
  }
  response.model_version = snap->version;
  response.index_version = snap->version;
  response.took_ms = ms_since(start);
  return response;
}

RecommendationResponse Engine::complementary(const std::string& product_id, int topk,
                                             bool filter_to_target) const {
  auto start = std::chrono::steady_clock::now();
  if (topk < 1) throw InvalidArgument("topk must be >= 1");
  auto snap = require_snapshot();
  if (snap->params.mode != EncoderMode::Complementary)
    throw NotLoadedError("loaded checkpoint is not a complementary model");
  const Product* product = catalog_.find(product_id);
  if (!product) throw NotFoundError("unknown product " + product_id);

  RecommendationResponse response;
  response.model_version = snap->version;
  response.index_version = snap->version;

  const auto* targets = catalog_.complementary.targets_for(product->leaf_category());
  if (!targets || targets->empty()) {
    response.status = "no_mapping";
    response.took_ms = ms_since(start);
    return response;
  }

  const int num_groups = static_cast<int>(targets->size());
  const int quota = (topk + num_groups - 1) / num_groups;
  const int fetch = std::max(50, 4 * std::max(quota, topk));

  std::vector<std::vector<RecItem>> groups;
  for (const auto& target_category : *targets) {
    Eigen::VectorXf query =
        encode_complementary_query(*product, target_category, snap->params, snap->config);
    auto hits = snapshot_search(*snap, query, fetch, options_);
    std::vector<RecItem> group;
    for (auto& hit : hits) {
      if (static_cast<int>(group.size()) >= quota) break;
      if (hit.product_id == product_id) continue;
      if (filter_to_target) {
        const Product* candidate = catalog_.find(hit.product_id);
        if (!candidate || candidate->leaf_category() != target_category) continue;
      }
      group.push_back({std::move(hit.product_id), hit.score, target_category, hit.cluster_id});
    }
    groups.push_back(std::move(group));
  }

  response.items = interleave(groups, topk);
  response.took_ms = ms_since(start);
  return response;
}

RecommendationResponse Engine::inspirational(const UserHistory& history,
                                             std::optional<std::int64_t> now, int probe_n,
                                             int skip_l, int topk) const {
  auto start = std::chrono::steady_clock::now();
  if (topk < 1) throw InvalidArgument("topk must be >= 1");
  auto snap = require_snapshot();
  const auto* hier = std::get_if<HierarchicalIndex>(&snap->index);
  if (!hier) throw NotLoadedError("inspirational mode needs a hierarchical index");
  if (probe_n < 1 || skip_l < 0 || skip_l + probe_n > hier->num_clusters())
    throw InvalidArgument("invalid probe_n/skip_l for " +
                          std::to_string(hier->num_clusters()) + " clusters");

  std::int64_t reference = now.value_or(0);
  if (!now) {
    for (const auto& e : history.events) reference = std::max(reference, e.ts);
  }
  auto reps = aggregate_history(history, reference, catalog_);

  RecommendationResponse response;
  response.model_version = snap->version;
  response.index_version = snap->version;
  if (reps.empty()) {
    response.status = "cold_user";
    response.took_ms = ms_since(start);
    return response;
  }

  std::unordered_set<std::string> excluded;
  for (const auto& e : history.events) excluded.insert(e.product_id);
  const int fetch = topk + static_cast<int>(excluded.size()) + 1;

  std::vector<std::vector<RecItem>> groups;
  for (const auto& rep : reps.by_recency) {
    const Product* product = catalog_.find(rep.product_id);
    Eigen::VectorXf query = encode(*product, snap->params, snap->config);
    auto hits = hier->search(query, probe_n, skip_l, fetch);
    std::vector<RecItem> group;
    for (auto& hit : hits) {
      if (excluded.count(hit.product_id)) continue;
      group.push_back({std::move(hit.product_id), hit.score, rep.category_id, hit.cluster_id});
    }
    groups.push_back(std::move(group));
  }

  response.items = interleave(groups, topk);
  response.took_ms = ms_since(start);
  return response;
}

}  // namespace twotower
