#include <algorithm>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "twotower/pairs.hpp"
#include "twotower/synthetic.hpp"

using namespace twotower;
using tt_test::TempDir;
using tt_test::purchase;
using tt_test::view;
using tt_test::write_file;

namespace {

void write_basic_taxonomy(const TempDir& dir) {
  write_file(dir.file("taxonomy.jsonl"),
             R"({"category_id":"a","parent_id":null})"
             "\n"
             R"({"category_id":"b","parent_id":"a"})"
             "\n"
             R"({"category_id":"c","parent_id":"b"})"
             "\n");
}

}  // namespace

TEST_CASE("load_catalog ingests a well-formed directory") {
  TempDir dir;
  write_basic_taxonomy(dir);
  write_file(dir.file("products.jsonl"),
             R"({"product_id":"p1","title":"red bike","price":10.5,"category_path":["a","b","c"],"seller_id":"s1"})"
             "\n"
             R"({"product_id":"p2","title":"blue bike","price":12.0,"category_path":["a","b"],"seller_id":"s1"})"
             "\n"
             R"({"product_id":"p3","title":"bell","price":1.0,"category_path":["a"],"seller_id":"s2"})"
             "\n");
  Catalog catalog = load_catalog(dir.path().string());
  CHECK(catalog.size() == 3);
  CHECK(catalog.find("p2")->leaf_category() == "b");
  CHECK(catalog.taxonomy.size() == 3);
}

TEST_CASE("duplicate product ids are rejected by name") {
  TempDir dir;
  write_basic_taxonomy(dir);
  write_file(dir.file("products.jsonl"),
             R"({"product_id":"dup","title":"x","price":1,"category_path":["a"],"seller_id":"s"})"
             "\n"
             R"({"product_id":"dup","title":"y","price":2,"category_path":["a"],"seller_id":"s"})"
             "\n");
  CHECK_THROWS_WITH_AS(load_catalog(dir.path().string()),
                       doctest::Contains("duplicate product_id: dup"), ValidationError);
}

TEST_CASE("category path skipping a level is rejected") {
  TempDir dir;
  write_basic_taxonomy(dir);
  write_file(dir.file("products.jsonl"),
             R"({"product_id":"p1","title":"x","price":1,"category_path":["a","c"],"seller_id":"s"})"
             "\n");
  CHECK_THROWS_AS(load_catalog(dir.path().string()), ValidationError);
}

TEST_CASE("category path must start at a root") {
  TempDir dir;
  write_basic_taxonomy(dir);
  write_file(dir.file("products.jsonl"),
             R"({"product_id":"p1","title":"x","price":1,"category_path":["b","c"],"seller_id":"s"})"
             "\n");
  CHECK_THROWS_AS(load_catalog(dir.path().string()), ValidationError);
}

TEST_CASE("malformed json reports the line number") {
  TempDir dir;
  write_basic_taxonomy(dir);
  write_file(dir.file("products.jsonl"),
             R"({"product_id":"p1","title":"x","price":1,"category_path":["a"],"seller_id":"s"})"
             "\n{oops\n");
  CHECK_THROWS_WITH_AS(load_catalog(dir.path().string()), doctest::Contains(":2:"), ParseError);
}

TEST_CASE("taxonomy validation rejects cycles and dangling parents") {
  CategoryTaxonomy cyclic;
  cyclic.add_node("x", "y");
  cyclic.add_node("y", "x");
  CHECK_THROWS_AS(cyclic.validate(), ValidationError);

  CategoryTaxonomy dangling;
  dangling.add_node("x", "missing");
  CHECK_THROWS_AS(dangling.validate(), ValidationError);
}

TEST_CASE("complementary map invariants") {
  CategoryTaxonomy taxonomy;
  taxonomy.add_node("a", "");
  taxonomy.add_node("b", "");

  ComplementaryMap self_map;
  self_map.entries["a"] = {"a"};
  CHECK_THROWS_AS(self_map.validate(taxonomy), ValidationError);

  ComplementaryMap unknown;
  unknown.entries["a"] = {"zzz"};
  CHECK_THROWS_AS(unknown.validate(taxonomy), ValidationError);

  ComplementaryMap empty_targets;
  empty_targets.entries["a"] = {};
  CHECK_THROWS_AS(empty_targets.validate(taxonomy), ValidationError);

  ComplementaryMap ok;
  ok.entries["a"] = {"b"};
  CHECK_NOTHROW(ok.validate(taxonomy));
}

TEST_CASE("interaction log invariants") {
  InteractionLog two_users;
  two_users.events = {view("u1", "p", 1, "s1"), view("u2", "q", 2, "s1")};
  CHECK_THROWS_AS(two_users.validate(), ValidationError);

  InteractionLog negative_ts;
  negative_ts.events = {view("u1", "p", -4, "s1")};
  CHECK_THROWS_AS(negative_ts.validate(), ValidationError);
}

TEST_CASE("co-view mining counts distinct sessions") {
  InteractionLog log;
  for (int s = 0; s < 3; ++s) {
    log.events.push_back(view("u" + std::to_string(s), "A", 10 * s, "s" + std::to_string(s)));
    log.events.push_back(view("u" + std::to_string(s), "B", 10 * s + 1, "s" + std::to_string(s)));
  }
  PairSet pairs = mine_coview_pairs(log, 2);
  REQUIRE(pairs.size() == 2);  // both directions
  CHECK(pairs.pairs[0].query_id == "A");
  CHECK(pairs.pairs[0].target_id == "B");
  CHECK(pairs.pairs[0].weight == 3);
  CHECK(pairs.pairs[1].query_id == "B");
  CHECK(pairs.pairs[1].weight == 3);
}

TEST_CASE("co-view below threshold and single-item sessions yield nothing") {
  InteractionLog below;
  below.events = {view("u", "A", 1, "s"), view("u", "B", 2, "s")};
  CHECK(mine_coview_pairs(below, 2).empty());

  InteractionLog solo;
  solo.events = {view("u", "A", 1, "s"), view("u", "A", 2, "s")};
  CHECK(mine_coview_pairs(solo, 1).empty());
}

TEST_CASE("mining is insensitive to event order within sessions") {
  InteractionLog log;
  log.events = {view("u1", "B", 5, "s1"), view("u1", "A", 1, "s1"), view("u1", "C", 3, "s1"),
                view("u2", "A", 2, "s2"), view("u2", "B", 9, "s2")};
  PairSet forward = mine_coview_pairs(log, 1);

  InteractionLog shuffled = log;
  std::reverse(shuffled.events.begin(), shuffled.events.end());
  PairSet reversed = mine_coview_pairs(shuffled, 1);

  REQUIRE(forward.size() == reversed.size());
  for (std::size_t i = 0; i < forward.size(); ++i) {
    CHECK(forward.pairs[i].query_id == reversed.pairs[i].query_id);
    CHECK(forward.pairs[i].target_id == reversed.pairs[i].target_id);
    CHECK(forward.pairs[i].weight == reversed.pairs[i].weight);
  }
}

TEST_CASE("raising the threshold only removes pairs") {
  SyntheticSpec spec;
  spec.num_products = 120;
  spec.num_groups = 4;
  spec.num_leaf_categories = 8;
  spec.num_view_sessions = 300;
  spec.views_per_session = 5;
  spec.micro_cluster_size = 10;
  auto data = generate_synthetic(spec, 11);

  auto key = [](const TrainingPair& p) { return p.query_id + "\x1f" + p.target_id; };
  PairSet loose = mine_coview_pairs(data.log, 1);
  PairSet strict = mine_coview_pairs(data.log, 3);
  REQUIRE(!strict.empty());
  std::set<std::string> loose_keys;
  for (const auto& p : loose.pairs) loose_keys.insert(key(p));
  for (const auto& p : strict.pairs) {
    CHECK(loose_keys.count(key(p)) == 1);
    CHECK(p.weight >= 3);
  }
  CHECK(strict.size() < loose.size());
}

TEST_CASE("co-purchase mining applies the complementarity heuristic") {
  Catalog catalog;
  catalog.taxonomy.add_node("root", "");
  catalog.taxonomy.add_node("rackets", "root");
  catalog.taxonomy.add_node("balls", "root");
  auto add = [&](const std::string& id, const std::string& leaf) {
    Product p{id, id, 5.0, {"root", leaf}, "s"};
    catalog.product_index.emplace(id, static_cast<int>(catalog.products.size()));
    catalog.products.push_back(std::move(p));
  };
  add("racket", "rackets");
  add("racket2", "rackets");
  add("ball", "balls");
  ComplementaryMap map;
  map.entries["rackets"] = {"balls"};

  InteractionLog log;
  for (int s = 0; s < 2; ++s) {
    std::string session = "s" + std::to_string(s);
    std::string user = "u" + std::to_string(s);
    log.events.push_back(purchase(user, "racket", 10 * s, session));
    log.events.push_back(purchase(user, "ball", 10 * s + 1, session));
    log.events.push_back(purchase(user, "racket2", 10 * s + 2, session));
  }

  // Directional: racket -> ball and racket2 -> ball. The reverse direction is
  // unmapped and racket+racket2 share a leaf.
  PairSet pairs = mine_copurchase_pairs(log, catalog, map, 2);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs.pairs[0].query_id == "racket");
  CHECK(pairs.pairs[0].target_id == "ball");
  CHECK(pairs.pairs[0].weight == 2);
  CHECK(pairs.pairs[1].query_id == "racket2");
  CHECK(pairs.pairs[1].target_id == "ball");

  PairSet strict = mine_copurchase_pairs(log, catalog, map, 3);
  CHECK(strict.empty());
}

TEST_CASE("every mined co-purchase pair satisfies the heuristic when re-checked") {
  SyntheticSpec spec;
  spec.num_products = 200;
  spec.num_leaf_categories = 10;
  spec.num_view_sessions = 10;
  spec.num_purchase_sessions = 500;
  spec.micro_cluster_size = 10;
  auto data = generate_synthetic(spec, 5);
  PairSet pairs = mine_copurchase_pairs(data.log, data.catalog, data.catalog.complementary, 1);
  REQUIRE(!pairs.empty());
  for (const auto& pair : pairs.pairs) {
    const auto& source = data.catalog.find(pair.query_id)->leaf_category();
    const auto& target = data.catalog.find(pair.target_id)->leaf_category();
    CHECK(source != target);
    const auto* targets = data.catalog.complementary.targets_for(source);
    REQUIRE(targets != nullptr);
    CHECK(std::count(targets->begin(), targets->end(), target) == 1);
  }
}

TEST_CASE("synthetic generation is byte-identical for a fixed seed") {
  SyntheticSpec spec;
  spec.num_products = 150;
  spec.num_view_sessions = 120;
  spec.num_purchase_sessions = 60;
  TempDir a;
  TempDir b;
  save_synthetic(generate_synthetic(spec, 7), a.path().string());
  save_synthetic(generate_synthetic(spec, 7), b.path().string());
  for (const char* name :
       {"products.jsonl", "taxonomy.jsonl", "complementary.jsonl", "interactions.jsonl",
        "groundtruth.jsonl"}) {
    CAPTURE(name);
    CHECK(tt_test::read_file(a.file(name)) == tt_test::read_file(b.file(name)));
  }

  auto different = generate_synthetic(spec, 8);
  save_synthetic(different, b.path().string());
  CHECK(tt_test::read_file(a.file("interactions.jsonl")) !=
        tt_test::read_file(b.file("interactions.jsonl")));
}

TEST_CASE("synthetic groups stay in range and correlate with co-views") {
  SyntheticSpec spec;
  spec.num_products = 400;
  spec.num_groups = 10;
  spec.num_leaf_categories = 12;
  spec.num_view_sessions = 800;
  spec.views_per_session = 4;
  spec.within_group_prob = 0.9;
  auto data = generate_synthetic(spec, 21);

  for (int g : data.group_of) {
    CHECK(g >= 0);
    CHECK(g < 10);
  }

  PairSet pairs = mine_coview_pairs(data.log, 1);
  REQUIRE(!pairs.empty());
  std::int64_t same_group = 0;
  for (const auto& pair : pairs.pairs) {
    int q = data.catalog.index_of(pair.query_id);
    int t = data.catalog.index_of(pair.target_id);
    if (data.group_of[static_cast<std::size_t>(q)] == data.group_of[static_cast<std::size_t>(t)])
      ++same_group;
  }
  double share = static_cast<double>(same_group) / static_cast<double>(pairs.size());
  CHECK(share >= 0.8);
}

TEST_CASE("zero-count synthetic specs are rejected") {
  SyntheticSpec spec;
  spec.num_products = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), InvalidArgument);
}

TEST_CASE("pair files round-trip and revalidate") {
  TempDir dir;
  PairSet pairs;
  pairs.kind = PairKind::CoPurchase;
  pairs.min_cooccurrence = 2;
  pairs.pairs = {{"a", "b", 3}, {"b", "c", 2}};
  save_pairs(pairs, dir.file("pairs.jsonl"));
  PairSet loaded = load_pairs(dir.file("pairs.jsonl"));
  CHECK(loaded.kind == PairKind::CoPurchase);
  CHECK(loaded.min_cooccurrence == 2);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.pairs[1].weight == 2);

  write_file(dir.file("bad.jsonl"),
             "{\"kind\":\"coview\",\"min_cooccurrence\":5}\n"
             "{\"query\":\"a\",\"target\":\"b\",\"weight\":1}\n");
  CHECK_THROWS_AS(load_pairs(dir.file("bad.jsonl")), ValidationError);
}

TEST_CASE("held-out split is deterministic and disjoint") {
  PairSet pairs;
  pairs.kind = PairKind::CoView;
  pairs.min_cooccurrence = 1;
  for (int i = 0; i < 500; ++i)
    pairs.pairs.push_back({"q" + std::to_string(i), "t" + std::to_string(i), 1});
  auto [train_a, heldout_a] = split_pairs(pairs, 10);
  auto [train_b, heldout_b] = split_pairs(pairs, 10);
  CHECK(train_a.size() + heldout_a.size() == pairs.size());
  CHECK(train_a.size() == train_b.size());
  CHECK(heldout_a.size() > 20);
  CHECK(heldout_a.size() < 100);
  std::set<std::string> train_keys;
  for (const auto& p : train_a.pairs) train_keys.insert(p.query_id);
  for (const auto& p : heldout_a.pairs) CHECK(train_keys.count(p.query_id) == 0);
}
