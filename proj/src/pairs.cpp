#include "twotower/pairs.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace twotower {

using nlohmann::json;

namespace {

// Intern product ids so pair keys fit in a u64. The table is sorted, so index
// order equals lexicographic id order and canonical (lo, hi) keys are stable
// under any event permutation.
struct Interner {
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::uint32_t> index;

  explicit Interner(const InteractionLog& log, EventKind kind) {
    std::unordered_set<std::string> seen;
    for (const auto& e : log.events)
      if (e.kind == kind) seen.insert(e.product_id);
    ids.assign(seen.begin(), seen.end());
    std::sort(ids.begin(), ids.end());
    for (std::uint32_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  }
};

// session -> set of distinct interned products of the requested kind
std::unordered_map<std::string, std::vector<std::uint32_t>> session_items(
    const InteractionLog& log, EventKind kind, const Interner& interner) {
  std::unordered_map<std::string, std::unordered_set<std::uint32_t>> sets;
  for (const auto& e : log.events) {
    if (e.kind != kind) continue;
    auto it = interner.index.find(e.product_id);
    if (it == interner.index.end()) continue;
    sets[e.session_id].insert(it->second);
  }
  std::unordered_map<std::string, std::vector<std::uint32_t>> out;
  out.reserve(sets.size());
  for (auto& [session, items] : sets) {
    std::vector<std::uint32_t> v(items.begin(), items.end());
    std::sort(v.begin(), v.end());
    out.emplace(session, std::move(v));
  }
  return out;
}

// canonical-pair co-occurrence counts, key = (lo << 32) | hi
std::unordered_map<std::uint64_t, std::int64_t> cooccurrence_counts(
    const std::unordered_map<std::string, std::vector<std::uint32_t>>& sessions) {
  std::unordered_map<std::uint64_t, std::int64_t> counts;
  for (const auto& [session, items] : sessions) {
    for (std::size_t i = 0; i < items.size(); ++i)
      for (std::size_t j = i + 1; j < items.size(); ++j) {
        std::uint64_t key = (static_cast<std::uint64_t>(items[i]) << 32) | items[j];
        ++counts[key];
      }
  }
  return counts;
}

void sort_pairs(PairSet& set) {
  std::sort(set.pairs.begin(), set.pairs.end(), [](const TrainingPair& a, const TrainingPair& b) {
    if (a.query_id != b.query_id) return a.query_id < b.query_id;
    return a.target_id < b.target_id;
  });
}

}  // namespace

PairSet mine_coview_pairs(const InteractionLog& log, std::int64_t min_cooccurrence) {
  if (min_cooccurrence < 1) throw InvalidArgument("min_cooccurrence must be positive");
  Interner interner(log, EventKind::View);
  auto sessions = session_items(log, EventKind::View, interner);
  auto counts = cooccurrence_counts(sessions);

  PairSet set;
  set.kind = PairKind::CoView;
  set.min_cooccurrence = min_cooccurrence;
  for (const auto& [key, count] : counts) {
    if (count < min_cooccurrence) continue;
    const auto& lo = interner.ids[key >> 32];
    const auto& hi = interner.ids[key & 0xffffffffu];
    set.pairs.push_back({lo, hi, count});
    set.pairs.push_back({hi, lo, count});
  }
  sort_pairs(set);
  return set;
}

PairSet mine_copurchase_pairs(const InteractionLog& log, const Catalog& catalog,
                              const ComplementaryMap& map, std::int64_t min_cooccurrence) {
  if (min_cooccurrence < 1) throw InvalidArgument("min_cooccurrence must be positive");
  Interner interner(log, EventKind::Purchase);
  auto sessions = session_items(log, EventKind::Purchase, interner);
  auto counts = cooccurrence_counts(sessions);

  auto leaf_of = [&](const std::string& id) -> const std::string* {
    const Product* p = catalog.find(id);
    return p ? &p->leaf_category() : nullptr;
  };
  auto heuristic = [&](const std::string& query, const std::string& target) {
    const std::string* ql = leaf_of(query);
    const std::string* tl = leaf_of(target);
    if (!ql || !tl || *ql == *tl) return false;
    const auto* targets = map.targets_for(*ql);
    return targets && std::find(targets->begin(), targets->end(), *tl) != targets->end();
  };

  PairSet set;
  set.kind = PairKind::CoPurchase;
  set.min_cooccurrence = min_cooccurrence;
  for (const auto& [key, count] : counts) {
    if (count < min_cooccurrence) continue;
    const auto& a = interner.ids[key >> 32];
    const auto& b = interner.ids[key & 0xffffffffu];
    if (heuristic(a, b)) set.pairs.push_back({a, b, count});
    if (heuristic(b, a)) set.pairs.push_back({b, a, count});
  }
  sort_pairs(set);
  return set;
}

std::pair<PairSet, PairSet> split_pairs(const PairSet& pairs, int holdout_percent) {
  if (holdout_percent < 0 || holdout_percent > 100)
    throw InvalidArgument("holdout_percent must be in [0, 100]");
  PairSet train{pairs.kind, pairs.min_cooccurrence, {}};
  PairSet heldout{pairs.kind, pairs.min_cooccurrence, {}};
  for (const auto& p : pairs.pairs) {
    std::uint64_t h = fnv1a64(p.query_id + "\x1f" + p.target_id);
    (h % 100 < static_cast<std::uint64_t>(holdout_percent) ? heldout : train).pairs.push_back(p);
  }
  return {std::move(train), std::move(heldout)};
}

void save_pairs(const PairSet& pairs, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  json meta = {{"kind", pairs.kind == PairKind::CoView ? "coview" : "copurchase"},
               {"min_cooccurrence", pairs.min_cooccurrence}};
  out << meta.dump() << "\n";
  for (const auto& p : pairs.pairs) {
    json obj = {{"query", p.query_id}, {"target", p.target_id}, {"weight", p.weight}};
    out << obj.dump() << "\n";
  }
}

PairSet load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": missing metadata line");
  PairSet set;
  try {
    json meta = json::parse(line);
    std::string kind = meta.at("kind").get<std::string>();
    if (kind == "coview") {
      set.kind = PairKind::CoView;
    } else if (kind == "copurchase") {
      set.kind = PairKind::CoPurchase;
    } else {
      throw ParseError(path + ": unknown pair kind " + kind);
    }
    set.min_cooccurrence = meta.at("min_cooccurrence").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw ParseError(path + ":1: " + e.what());
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json obj = json::parse(line);
      TrainingPair p;
      p.query_id = obj.at("query").get<std::string>();
      p.target_id = obj.at("target").get<std::string>();
      p.weight = obj.at("weight").get<std::int64_t>();
      if (p.query_id == p.target_id)
        throw ValidationError(path + ":" + std::to_string(lineno) + ": self-pair " + p.query_id);
      if (p.weight < set.min_cooccurrence)
        throw ValidationError(path + ":" + std::to_string(lineno) +
                              ": weight below mining threshold");
      set.pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return set;
}

}  // namespace twotower
