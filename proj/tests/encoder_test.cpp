#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "twotower/encoder.hpp"

using namespace twotower;
using tt_test::TempDir;

namespace {

FeatureConfig tiny_config() {
  FeatureConfig config;
  config.title_hash_buckets = 1;
  config.title_embedding_dim = 2;
  config.price_bucket_edges = {5.0};
  config.price_embedding_dim = 2;
  config.category_embedding_dim = 2;
  config.max_category_levels = 1;
  config.seller_hash_buckets = 1;
  config.seller_embedding_dim = 2;
  config.category_ids = {"cat"};
  config.rebuild_category_lookup();
  return config;
}

Product sample_product(int i, const Catalog& catalog) {
  return catalog.products[static_cast<std::size_t>(i) % catalog.size()];
}

}  // namespace

TEST_CASE("price buckets follow the edge semantics") {
  FeatureConfig config = tiny_config();
  config.price_bucket_edges = {1.0, 10.0, 100.0};
  Product p{"p", "t", 0.5, {"cat"}, "s"};
  CHECK(featurize(p, config).price_bucket == 0);
  p.price = 1.0;
  CHECK(featurize(p, config).price_bucket == 1);
  p.price = 9.99;
  CHECK(featurize(p, config).price_bucket == 1);
  p.price = 250.0;
  CHECK(featurize(p, config).price_bucket == 3);
}

TEST_CASE("tokenizer lowercases and splits on non-alphanumerics") {
  auto tokens = tokenize_title("Red BIKE, 26\" (kids)!");
  REQUIRE(tokens.size() == 4);
  CHECK(tokens[0] == "red");
  CHECK(tokens[1] == "bike");
  CHECK(tokens[2] == "26");
  CHECK(tokens[3] == "kids");
  CHECK(tokenize_title("").empty());
  CHECK(tokenize_title("  --  ").empty());
}

TEST_CASE("featurize is deterministic and pads categories") {
  FeatureConfig config = tiny_config();
  config.max_category_levels = 3;
  Product p{"p", "Some Title", 2.0, {"cat"}, "s"};
  FeatureIndices a = featurize(p, config);
  FeatureIndices b = featurize(p, config);
  CHECK(a.title_buckets == b.title_buckets);
  CHECK(a.price_bucket == b.price_bucket);
  CHECK(a.category_rows == b.category_rows);
  CHECK(a.seller_bucket == b.seller_bucket);

  REQUIRE(a.category_rows.size() == 3);
  CHECK(a.category_rows[0] == 1);
  CHECK(a.category_rows[1] == 0);  // padded with the reserved row
  CHECK(a.category_rows[2] == 0);
  CHECK(a.leaf_category_row == 1);

  Product unknown_cat{"q", "x", 2.0, {"never-seen"}, "s"};
  CHECK(featurize(unknown_cat, config).leaf_category_row == 0);

  Product empty_title{"r", "", 2.0, {"cat"}, "s"};
  CHECK(featurize(empty_title, config).title_buckets.empty());
}

TEST_CASE("deep category paths keep the leaf-side levels") {
  FeatureConfig config = tiny_config();
  config.max_category_levels = 2;
  config.category_ids = {"a", "b", "c", "d"};
  config.rebuild_category_lookup();
  Product p{"p", "x", 2.0, {"a", "b", "c", "d"}, "s"};
  FeatureIndices f = featurize(p, config);
  REQUIRE(f.category_rows.size() == 2);
  CHECK(f.category_rows[0] == 3);  // "c"
  CHECK(f.category_rows[1] == 4);  // "d"
  CHECK(f.leaf_category_row == 4);
}

TEST_CASE("identity MLP over one-hot features reproduces the concatenation") {
  FeatureConfig config = tiny_config();
  EncoderParams<float> params;
  params.mode = EncoderMode::Similarity;
  params.output_dim = 8;
  params.title_table = Mat<float>(2, 1);
  params.title_table << 1, 2;
  params.price_table = Mat<float>(2, 2);
  params.price_table << 3, 30, 4, 40;
  params.category_table = Mat<float>(2, 2);
  params.category_table << 9, 5, 9, 6;
  params.seller_table = Mat<float>(2, 1);
  params.seller_table << 7, 8;
  params.mlp.push_back(
      {Mat<float>::Identity(8, 8), Mat<float>::Zero(8, 1), Activation::Linear});
  check_shapes(params, config);

  Product p{"p", "x", 2.0, {"cat"}, "s"};
  Vec<float> out = encode(p, params, config);

  Eigen::VectorXf expected(8);
  expected << 1, 2, 3, 4, 5, 6, 7, 8;
  expected /= std::sqrt(204.0f);
  REQUIRE(out.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(out(i) == doctest::Approx(expected(i)).epsilon(1e-6));
}

TEST_CASE("embeddings are unit norm and tied encodings are bit-identical") {
  Catalog catalog = tt_test::make_catalog(50, 6);
  FeatureConfig config = default_feature_config(catalog);
  auto params = init_encoder_params<float>(config, EncoderMode::Similarity, 16, 32, 3);

  for (int i = 0; i < 50; ++i) {
    Vec<float> as_query = encode(sample_product(i, catalog), params, config);
    Vec<float> as_target = encode(sample_product(i, catalog), params, config);
    CHECK(std::abs(as_query.cast<double>().norm() - 1.0) < 1e-6);
    CHECK(as_query == as_target);  // one shared parameter set
    CHECK(std::abs(static_cast<double>(as_query.dot(as_target)) - 1.0) < 1e-6);
  }
}

TEST_CASE("positive rescaling before normalization changes nothing") {
  Catalog catalog = tt_test::make_catalog(20, 4);
  FeatureConfig config = default_feature_config(catalog);
  auto params = init_encoder_params<float>(config, EncoderMode::Similarity, 16, 32, 5);
  auto scaled = params;
  scaled.mlp.back().weight *= 3.7f;
  scaled.mlp.back().bias *= 3.7f;

  for (int i = 0; i < 20; ++i) {
    Vec<float> a = encode(sample_product(i, catalog), params, config);
    Vec<float> b = encode(sample_product(i, catalog), scaled, config);
    CHECK((a - b).cast<double>().lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("degenerate pre-normalization norm is an error") {
  FeatureConfig config = tiny_config();
  EncoderParams<float> params;
  params.mode = EncoderMode::Similarity;
  params.output_dim = 8;
  params.title_table = Mat<float>::Zero(2, 1);
  params.price_table = Mat<float>::Zero(2, 2);
  params.category_table = Mat<float>::Zero(2, 2);
  params.seller_table = Mat<float>::Zero(2, 1);
  params.mlp.push_back({Mat<float>::Identity(8, 8), Mat<float>::Zero(8, 1), Activation::Linear});
  Product p{"p", "x", 2.0, {"cat"}, "s"};
  CHECK_THROWS_WITH_AS(encode(p, params, config), doctest::Contains("degenerate"), Error);
}

TEST_CASE("conditioning the query tower on a category changes the embedding") {
  Catalog catalog = tt_test::make_catalog(10, 5);
  FeatureConfig config = default_feature_config(catalog);
  auto params = init_encoder_params<float>(config, EncoderMode::Complementary, 16, 32, 7);

  const Product& p = catalog.products[0];
  Vec<float> to_leaf1 = encode_complementary_query(p, "leaf1", params, config);
  Vec<float> to_leaf2 = encode_complementary_query(p, "leaf2", params, config);
  CHECK((to_leaf1 - to_leaf2).cast<double>().norm() > 1e-6);

  bool used_unknown = false;
  Vec<float> fallback = encode_complementary_query(p, "no-such-cat", params, config, &used_unknown);
  CHECK(used_unknown);
  CHECK(std::abs(fallback.cast<double>().norm() - 1.0) < 1e-6);

  used_unknown = true;
  encode_complementary_query(p, "leaf1", params, config, &used_unknown);
  CHECK(!used_unknown);
}

TEST_CASE("batched encoding equals per-item encoding") {
  Catalog catalog = tt_test::make_catalog(32, 6);
  FeatureConfig config = default_feature_config(catalog);
  auto params = init_encoder_params<float>(config, EncoderMode::Complementary, 16, 32, 9);

  std::vector<FeatureIndices> features;
  std::vector<std::int32_t> rows;
  for (int i = 0; i < 32; ++i) {
    features.push_back(featurize(catalog.products[static_cast<std::size_t>(i)], config));
    rows.push_back(static_cast<std::int32_t>(config.category_row("leaf" + std::to_string(i % 6))));
  }
  auto batch = encode_batch(features, params, config, Tower::ComplementaryQuery, rows);
  for (int i = 0; i < 32; ++i) {
    Vec<float> single = encode_complementary_query(
        catalog.products[static_cast<std::size_t>(i)],
        "leaf" + std::to_string(i % 6), params, config);
    CHECK((batch.out.col(i) - single).cast<double>().lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("unknown sellers and categories degrade to reserved rows") {
  Catalog catalog = tt_test::make_catalog(5, 3);
  FeatureConfig config = default_feature_config(catalog);
  auto params = init_encoder_params<float>(config, EncoderMode::Similarity, 16, 32, 11);
  Product stranger{"new", "Completely Fresh Item", 3.5, {"never", "seen"}, "unknown-seller"};
  Vec<float> out;
  CHECK_NOTHROW(out = encode(stranger, params, config));
  CHECK(std::abs(out.cast<double>().norm() - 1.0) < 1e-6);
}

TEST_CASE("complementary projection is linear in the category row") {
  FeatureConfig config = tiny_config();
  auto params = init_encoder_params<double>(config, EncoderMode::Complementary, 8, 16, 13);
  params.category_table.col(1).setZero();
  params.projection_bias.setZero();

  FeatureIndices f;
  f.price_bucket = 0;
  f.category_rows = {1};
  f.leaf_category_row = 1;
  f.seller_bucket = 0;
  Vec<double> out = project_complementary(f, params);
  CHECK(out.norm() == 0.0);

  auto params2 = init_encoder_params<double>(config, EncoderMode::Complementary, 8, 16, 13);
  Vec<double> a = project_complementary(f, params2);
  Vec<double> b = project_complementary(f, params2);
  CHECK(a == b);
  CHECK(a.size() == config.category_embedding_dim);
}

TEST_CASE("checkpoints round-trip bit-exactly and validate shapes") {
  TempDir dir;
  Catalog catalog = tt_test::make_catalog(30, 4);
  FeatureConfig config = default_feature_config(catalog);
  auto params = init_encoder_params<float>(config, EncoderMode::Complementary, 24, 48, 17);

  const std::string path = dir.file("model.ckpt");
  save_checkpoint(path, params, config);
  Checkpoint loaded = load_checkpoint(path);

  CHECK(loaded.params.mode == EncoderMode::Complementary);
  CHECK(loaded.params.output_dim == 24);
  CHECK(loaded.config.category_ids == config.category_ids);
  CHECK(loaded.config.price_bucket_edges == config.price_bucket_edges);
  auto original = tensor_list(params);
  auto restored = tensor_list(loaded.params);
  REQUIRE(original.size() == restored.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    CAPTURE(original[i].first);
    CHECK(*original[i].second == *restored[i].second);
  }

  // shape mismatch between tensors and config is refused at save time
  auto broken = params;
  broken.category_table = Mat<float>::Zero(config.category_embedding_dim, 2);
  CHECK_THROWS_AS(save_checkpoint(dir.file("broken.ckpt"), broken, config), ShapeError);

  // truncated files are refused at load time
  std::string bytes = tt_test::read_file(path);
  tt_test::write_file(dir.file("truncated.ckpt"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir.file("truncated.ckpt")), ParseError);
}

TEST_CASE("float/double casts preserve structure") {
  Catalog catalog = tt_test::make_catalog(12, 3);
  FeatureConfig config = default_feature_config(catalog);
  auto params = init_encoder_params<float>(config, EncoderMode::Complementary, 16, 32, 19);
  auto doubled = params.cast<double>();
  auto back = doubled.cast<float>();
  CHECK(back.mode == params.mode);
  auto a = tensor_list(params);
  auto b = tensor_list(back);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
  CHECK(param_count(params) == param_count(doubled));
}
