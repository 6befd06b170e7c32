#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "twotower/catalog.hpp"

namespace tt_test {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    path_ = base / ("twotower_test_" + std::to_string(rd()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  static int& counter() {
    static int value = 0;
    return value;
  }
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// In-memory catalogue with a root -> mid -> leaf chain per leaf category.
inline twotower::Catalog make_catalog(int num_products, int num_leaves,
                                      const std::string& prefix = "p") {
  twotower::Catalog catalog;
  catalog.taxonomy.add_node("root", "");
  for (int l = 0; l < num_leaves; ++l)
    catalog.taxonomy.add_node("leaf" + std::to_string(l), "root");
  for (int i = 0; i < num_products; ++i) {
    twotower::Product p;
    p.product_id = prefix + std::to_string(i);
    p.title = "item " + std::to_string(i) + " tok" + std::to_string(i % 7);
    p.price = 1.0 + i;
    p.category_path = {"root", "leaf" + std::to_string(i % num_leaves)};
    p.seller_id = "s" + std::to_string(i % 5);
    catalog.products.push_back(std::move(p));
    catalog.product_index.emplace(prefix + std::to_string(i), i);
  }
  twotower::validate_catalog(catalog);
  return catalog;
}

inline twotower::Interaction view(const std::string& user, const std::string& product,
                                  std::int64_t ts, const std::string& session) {
  return {user, product, ts, twotower::EventKind::View, session};
}

inline twotower::Interaction purchase(const std::string& user, const std::string& product,
                                      std::int64_t ts, const std::string& session) {
  return {user, product, ts, twotower::EventKind::Purchase, session};
}

}  // namespace tt_test
