#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "twotower/common.hpp"

namespace twotower {

struct Product {
  std::string product_id;
  std::string title;
  double price = 0.0;
  std::vector<std::string> category_path;  // root first, leaf last
  std::string seller_id;

  const std::string& leaf_category() const { return category_path.back(); }
};

// Category forest. Nodes are interned to dense indices; parent(-1) marks a root.
class CategoryTaxonomy {
 public:
  int add_node(const std::string& category_id, const std::string& parent_id);

  int index_of(const std::string& category_id) const;  // -1 if unknown
  bool contains(const std::string& category_id) const { return index_of(category_id) >= 0; }
  const std::string& id_of(int index) const { return ids_.at(static_cast<std::size_t>(index)); }
  int parent_of(int index) const { return parent_.at(static_cast<std::size_t>(index)); }
  bool is_root(int index) const { return parent_of(index) < 0; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  // Throws ValidationError on a cycle or a dangling parent.
  void validate() const;

 private:
  std::vector<std::string> ids_;
  std::vector<int> parent_;
  std::unordered_map<std::string, std::string> pending_parent_;
  std::unordered_map<std::string, int> index_;

  friend CategoryTaxonomy load_taxonomy(const std::string& path);
};

struct ComplementaryMap {
  // source leaf category -> target leaf categories, in display-priority order
  std::unordered_map<std::string, std::vector<std::string>> entries;

  const std::vector<std::string>* targets_for(const std::string& source) const {
    auto it = entries.find(source);
    return it == entries.end() ? nullptr : &it->second;
  }
  bool empty() const { return entries.empty(); }

  void validate(const CategoryTaxonomy& taxonomy) const;
};

enum class EventKind : std::uint8_t { View, Purchase };

struct Interaction {
  std::string user_id;
  std::string product_id;
  std::int64_t ts = 0;  // seconds since epoch
  EventKind kind = EventKind::View;
  std::string session_id;
};

struct InteractionLog {
  std::vector<Interaction> events;

  // Timestamps non-negative; a session never spans two users.
  void validate() const;
};

struct Catalog {
  std::vector<Product> products;
  std::unordered_map<std::string, int> product_index;
  CategoryTaxonomy taxonomy;
  ComplementaryMap complementary;

  int index_of(const std::string& product_id) const {
    auto it = product_index.find(product_id);
    return it == product_index.end() ? -1 : it->second;
  }
  const Product* find(const std::string& product_id) const {
    int i = index_of(product_id);
    return i < 0 ? nullptr : &products[static_cast<std::size_t>(i)];
  }
  std::size_t size() const { return products.size(); }
};

// Directory layout: taxonomy.jsonl, products.jsonl and, optionally,
// complementary.jsonl. All files are UTF-8, one JSON object per line.
Catalog load_catalog(const std::string& dir);

CategoryTaxonomy load_taxonomy(const std::string& path);
std::vector<Product> load_products(const std::string& path);
ComplementaryMap load_complementary_map(const std::string& path);
InteractionLog load_interactions(const std::string& path);

void save_catalog(const Catalog& catalog, const std::string& dir);
void save_interactions(const InteractionLog& log, const std::string& path);

// Validates every product against the taxonomy: unique ids, price >= 0,
// category_path starts at a root and follows parent-child edges.
void validate_catalog(const Catalog& catalog);

}  // namespace twotower
