#include "twotower/catalog.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace twotower {

using nlohmann::json;

namespace {

// Applies fn to each non-empty line; parse failures are reported with the
// 1-based line number.
void for_each_json_line(const std::string& path,
                        const std::function<void(const json&, int line)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      fn(obj, lineno);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string loc(const std::string& path, int line) {
  return path + ":" + std::to_string(line) + ": ";
}

}  // namespace

int CategoryTaxonomy::add_node(const std::string& category_id, const std::string& parent_id) {
  if (index_.count(category_id))
    throw ValidationError("duplicate category id: " + category_id);
  int idx = static_cast<int>(ids_.size());
  ids_.push_back(category_id);
  parent_.push_back(-1);
  index_[category_id] = idx;
  if (!parent_id.empty()) pending_parent_[category_id] = parent_id;

  // Resolve what we can; load_taxonomy re-resolves after the full file is read.
  for (auto it = pending_parent_.begin(); it != pending_parent_.end();) {
    auto child = index_.find(it->first);
    auto parent = index_.find(it->second);
    if (child != index_.end() && parent != index_.end()) {
      parent_[static_cast<std::size_t>(child->second)] = parent->second;
      it = pending_parent_.erase(it);
    } else {
      ++it;
    }
  }
  return idx;
}

int CategoryTaxonomy::index_of(const std::string& category_id) const {
  auto it = index_.find(category_id);
  return it == index_.end() ? -1 : it->second;
}

void CategoryTaxonomy::validate() const {
  if (!pending_parent_.empty()) {
    const auto& [child, parent] = *pending_parent_.begin();
    throw ValidationError("category " + child + " references unknown parent " + parent);
  }
  // Every node must reach a root in at most |nodes| steps.
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    int cur = static_cast<int>(i);
    std::size_t steps = 0;
    while (cur >= 0) {
      if (++steps > ids_.size())
        throw ValidationError("cycle in taxonomy involving category " + ids_[i]);
      cur = parent_[static_cast<std::size_t>(cur)];
    }
  }
}

void ComplementaryMap::validate(const CategoryTaxonomy& taxonomy) const {
  for (const auto& [source, targets] : entries) {
    if (!taxonomy.contains(source))
      throw ValidationError("complementary map source not in taxonomy: " + source);
    if (targets.empty())
      throw ValidationError("complementary map entry has no targets: " + source);
    for (const auto& target : targets) {
      if (!taxonomy.contains(target))
        throw ValidationError("complementary map target not in taxonomy: " + target);
      if (target == source)
        throw ValidationError("complementary map maps category to itself: " + source);
    }
  }
}

void InteractionLog::validate() const {
  std::unordered_map<std::string, const std::string*> session_user;
  for (const auto& e : events) {
    if (e.ts < 0)
      throw ValidationError("negative timestamp for product " + e.product_id);
    auto [it, inserted] = session_user.try_emplace(e.session_id, &e.user_id);
    if (!inserted && *it->second != e.user_id)
      throw ValidationError("session " + e.session_id + " spans users " + *it->second +
                            " and " + e.user_id);
  }
}

CategoryTaxonomy load_taxonomy(const std::string& path) {
  CategoryTaxonomy taxonomy;
  for_each_json_line(path, [&](const json& obj, int line) {
    std::string id = obj.at("category_id").get<std::string>();
    std::string parent;
    if (obj.contains("parent_id") && !obj.at("parent_id").is_null())
      parent = obj.at("parent_id").get<std::string>();
    try {
      taxonomy.add_node(id, parent);
    } catch (const ValidationError& e) {
      throw ValidationError(loc(path, line) + e.what());
    }
  });
  taxonomy.validate();
  return taxonomy;
}

std::vector<Product> load_products(const std::string& path) {
  std::vector<Product> products;
  for_each_json_line(path, [&](const json& obj, int line) {
    Product p;
    p.product_id = obj.at("product_id").get<std::string>();
    p.title = obj.at("title").get<std::string>();
    p.price = obj.at("price").get<double>();
    p.category_path = obj.at("category_path").get<std::vector<std::string>>();
    p.seller_id = obj.at("seller_id").get<std::string>();
    if (!(p.price >= 0.0))
      throw ValidationError(loc(path, line) + "negative price for product " + p.product_id);
    if (p.category_path.empty())
      throw ValidationError(loc(path, line) + "empty category_path for product " + p.product_id);
    products.push_back(std::move(p));
  });
  return products;
}

ComplementaryMap load_complementary_map(const std::string& path) {
  ComplementaryMap map;
  for_each_json_line(path, [&](const json& obj, int line) {
    std::string source = obj.at("source_category").get<std::string>();
    auto targets = obj.at("target_categories").get<std::vector<std::string>>();
    if (map.entries.count(source))
      throw ValidationError(loc(path, line) + "duplicate complementary source " + source);
    map.entries.emplace(std::move(source), std::move(targets));
  });
  return map;
}

InteractionLog load_interactions(const std::string& path) {
  InteractionLog log;
  for_each_json_line(path, [&](const json& obj, int line) {
    Interaction e;
    e.user_id = obj.at("user_id").get<std::string>();
    e.product_id = obj.at("product_id").get<std::string>();
    e.ts = obj.at("ts").get<std::int64_t>();
    std::string kind = obj.at("kind").get<std::string>();
    if (kind == "view") {
      e.kind = EventKind::View;
    } else if (kind == "purchase") {
      e.kind = EventKind::Purchase;
    } else {
      throw ValidationError(loc(path, line) + "unknown event kind: " + kind);
    }
    e.session_id = obj.at("session_id").get<std::string>();
    log.events.push_back(std::move(e));
  });
  log.validate();
  return log;
}

void validate_catalog(const Catalog& catalog) {
  catalog.taxonomy.validate();
  std::unordered_set<std::string> seen;
  for (const auto& p : catalog.products) {
    if (!seen.insert(p.product_id).second)
      throw ValidationError("duplicate product_id: " + p.product_id);
    if (!(p.price >= 0.0))
      throw ValidationError("negative price for product " + p.product_id);
    if (p.category_path.empty())
      throw ValidationError("empty category_path for product " + p.product_id);

    int first = catalog.taxonomy.index_of(p.category_path.front());
    if (first < 0)
      throw ValidationError("product " + p.product_id + " references unknown category " +
                            p.category_path.front());
    if (!catalog.taxonomy.is_root(first))
      throw ValidationError("product " + p.product_id + " category_path does not start at a root");
    int prev = first;
    for (std::size_t i = 1; i < p.category_path.size(); ++i) {
      int cur = catalog.taxonomy.index_of(p.category_path[i]);
      if (cur < 0)
        throw ValidationError("product " + p.product_id + " references unknown category " +
                              p.category_path[i]);
      if (catalog.taxonomy.parent_of(cur) != prev)
        throw ValidationError("product " + p.product_id + " category_path breaks at " +
                              p.category_path[i] + " (not a child of " + p.category_path[i - 1] +
                              ")");
      prev = cur;
    }
  }
  catalog.complementary.validate(catalog.taxonomy);
}

Catalog load_catalog(const std::string& dir) {
  namespace fs = std::filesystem;
  Catalog catalog;
  catalog.taxonomy = load_taxonomy((fs::path(dir) / "taxonomy.jsonl").string());
  catalog.products = load_products((fs::path(dir) / "products.jsonl").string());
  fs::path map_path = fs::path(dir) / "complementary.jsonl";
  if (fs::exists(map_path)) catalog.complementary = load_complementary_map(map_path.string());
  for (std::size_t i = 0; i < catalog.products.size(); ++i)
    catalog.product_index.emplace(catalog.products[i].product_id, static_cast<int>(i));
  validate_catalog(catalog);
  return catalog;
}

namespace {

void write_lines(const std::string& path, const std::vector<json>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& obj : lines) out << obj.dump() << "\n";
}

}  // namespace

void save_catalog(const Catalog& catalog, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<json> taxonomy_lines;
  for (std::size_t i = 0; i < catalog.taxonomy.size(); ++i) {
    int parent = catalog.taxonomy.parent_of(static_cast<int>(i));
    json obj;
    obj["category_id"] = catalog.taxonomy.id_of(static_cast<int>(i));
    obj["parent_id"] = parent < 0 ? json(nullptr) : json(catalog.taxonomy.id_of(parent));
    taxonomy_lines.push_back(std::move(obj));
  }
  write_lines((fs::path(dir) / "taxonomy.jsonl").string(), taxonomy_lines);

  std::vector<json> product_lines;
  for (const auto& p : catalog.products) {
    product_lines.push_back({{"product_id", p.product_id},
                             {"title", p.title},
                             {"price", p.price},
                             {"category_path", p.category_path},
                             {"seller_id", p.seller_id}});
  }
  write_lines((fs::path(dir) / "products.jsonl").string(), product_lines);

  if (!catalog.complementary.empty()) {
    std::vector<std::string> sources;
    for (const auto& [source, _] : catalog.complementary.entries) sources.push_back(source);
    std::sort(sources.begin(), sources.end());
    std::vector<json> map_lines;
    for (const auto& source : sources)
      map_lines.push_back({{"source_category", source},
                           {"target_categories", catalog.complementary.entries.at(source)}});
    write_lines((fs::path(dir) / "complementary.jsonl").string(), map_lines);
  }
}

void save_interactions(const InteractionLog& log, const std::string& path) {
  std::vector<json> lines;
  lines.reserve(log.events.size());
  for (const auto& e : log.events) {
    lines.push_back({{"user_id", e.user_id},
                     {"product_id", e.product_id},
                     {"ts", e.ts},
                     {"kind", e.kind == EventKind::View ? "view" : "purchase"},
                     {"session_id", e.session_id}});
  }
  write_lines(path, lines);
}

}  // namespace twotower
