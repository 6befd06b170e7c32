#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "twotower/features.hpp"

namespace twotower {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

enum class Activation : std::uint8_t { Linear, Relu };
enum class EncoderMode : std::uint8_t { Similarity, Complementary };
enum class Tower : std::uint8_t { Target, ComplementaryQuery };

template <typename S>
struct DenseLayer {
  Mat<S> weight;  // out x in
  Mat<S> bias;    // out x 1
  Activation activation = Activation::Linear;
};

// All learnable state. Embedding tables store one column per bucket/row id.
// `mlp` is the Product Encoder trunk shared by query and target in similarity
// mode and owned by the target side in complementary mode; `query_mlp` and the
// projection head exist only in complementary mode.
template <typename S>
struct EncoderParams {
  EncoderMode mode = EncoderMode::Similarity;
  int output_dim = 0;
  Mat<S> title_table;
  Mat<S> price_table;
  Mat<S> category_table;
  Mat<S> seller_table;
  std::vector<DenseLayer<S>> mlp;
  std::vector<DenseLayer<S>> query_mlp;
  Mat<S> projection_weight;  // category_dim x category_dim
  Mat<S> projection_bias;    // category_dim x 1

  template <typename T>
  EncoderParams<T> cast() const;
};

struct ProductEmbedding {
  std::string product_id;
  Eigen::VectorXf vector;
};

// Canonical tensor ordering; serialization, updates and finite differencing
// all walk parameters through this list.
template <typename S>
std::vector<std::pair<std::string, Mat<S>*>> tensor_list(EncoderParams<S>& params) {
  std::vector<std::pair<std::string, Mat<S>*>> out;
  out.emplace_back("title_table", &params.title_table);
  out.emplace_back("price_table", &params.price_table);
  out.emplace_back("category_table", &params.category_table);
  out.emplace_back("seller_table", &params.seller_table);
  for (std::size_t i = 0; i < params.mlp.size(); ++i) {
    out.emplace_back("mlp." + std::to_string(i) + ".weight", &params.mlp[i].weight);
    out.emplace_back("mlp." + std::to_string(i) + ".bias", &params.mlp[i].bias);
  }
  for (std::size_t i = 0; i < params.query_mlp.size(); ++i) {
    out.emplace_back("query_mlp." + std::to_string(i) + ".weight", &params.query_mlp[i].weight);
    out.emplace_back("query_mlp." + std::to_string(i) + ".bias", &params.query_mlp[i].bias);
  }
  if (params.mode == EncoderMode::Complementary) {
    out.emplace_back("projection_weight", &params.projection_weight);
    out.emplace_back("projection_bias", &params.projection_bias);
  }
  return out;
}

template <typename S>
std::vector<std::pair<std::string, const Mat<S>*>> tensor_list(const EncoderParams<S>& params) {
  auto mutable_list = tensor_list(const_cast<EncoderParams<S>&>(params));
  std::vector<std::pair<std::string, const Mat<S>*>> out;
  out.reserve(mutable_list.size());
  for (auto& [name, mat] : mutable_list) out.emplace_back(name, mat);
  return out;
}

template <typename S>
template <typename T>
EncoderParams<T> EncoderParams<S>::cast() const {
  EncoderParams<T> out;
  out.mode = mode;
  out.output_dim = output_dim;
  out.mlp.resize(mlp.size());
  out.query_mlp.resize(query_mlp.size());
  for (std::size_t i = 0; i < mlp.size(); ++i) out.mlp[i].activation = mlp[i].activation;
  for (std::size_t i = 0; i < query_mlp.size(); ++i)
    out.query_mlp[i].activation = query_mlp[i].activation;
  auto src = tensor_list(*this);
  auto dst = tensor_list(out);
  for (std::size_t i = 0; i < src.size(); ++i)
    *dst[i].second = src[i].second->template cast<T>();
  return out;
}

template <typename S>
EncoderParams<S> zeros_like(const EncoderParams<S>& params) {
  EncoderParams<S> out;
  out.mode = params.mode;
  out.output_dim = params.output_dim;
  out.mlp.resize(params.mlp.size());
  out.query_mlp.resize(params.query_mlp.size());
  for (std::size_t i = 0; i < params.mlp.size(); ++i)
    out.mlp[i].activation = params.mlp[i].activation;
  for (std::size_t i = 0; i < params.query_mlp.size(); ++i)
    out.query_mlp[i].activation = params.query_mlp[i].activation;
  auto src = tensor_list(params);
  auto dst = tensor_list(out);
  for (std::size_t i = 0; i < src.size(); ++i)
    *dst[i].second = Mat<S>::Zero(src[i].second->rows(), src[i].second->cols());
  return out;
}

template <typename S>
std::size_t param_count(const EncoderParams<S>& params) {
  std::size_t n = 0;
  for (const auto& [name, mat] : tensor_list(params)) n += static_cast<std::size_t>(mat->size());
  return n;
}

template <typename S>
bool all_finite(const EncoderParams<S>& params) {
  for (const auto& [name, mat] : tensor_list(params))
    if (!mat->allFinite()) return false;
  return true;
}

template <typename S>
EncoderParams<S> init_encoder_params(const FeatureConfig& config, EncoderMode mode,
                                     int output_dim, int hidden_dim, std::uint64_t seed) {
  config.validate();
  if (output_dim < 1 || hidden_dim < 1)
    throw InvalidArgument("encoder dims must be positive");
  Rng rng(seed);
  EncoderParams<S> params;
  params.mode = mode;
  params.output_dim = output_dim;

  auto table = [&](int dim, int rows) {
    Mat<S> t(dim, rows);
    for (Eigen::Index c = 0; c < t.cols(); ++c)
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        t(r, c) = static_cast<S>(0.1 * rng.normal());
    return t;
  };
  params.title_table = table(config.title_embedding_dim, config.title_hash_buckets);
  params.price_table = table(config.price_embedding_dim, config.num_price_buckets());
  params.category_table = table(config.category_embedding_dim, config.num_category_rows());
  params.seller_table = table(config.seller_embedding_dim, config.seller_hash_buckets);

  auto glorot = [&](int out, int in) {
    Mat<S> w(out, in);
    double a = std::sqrt(6.0 / (out + in));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        w(r, c) = static_cast<S>(rng.uniform(-a, a));
    return w;
  };
  auto make_mlp = [&](int in_width) {
    std::vector<DenseLayer<S>> layers;
    layers.push_back({glorot(hidden_dim, in_width), Mat<S>::Zero(hidden_dim, 1), Activation::Relu});
    layers.push_back({glorot(output_dim, hidden_dim), Mat<S>::Zero(output_dim, 1), Activation::Linear});
    return layers;
  };
  params.mlp = make_mlp(config.concat_width());
  if (mode == EncoderMode::Complementary) {
    params.query_mlp = make_mlp(config.concat_width() + config.category_embedding_dim);
    params.projection_weight = glorot(config.category_embedding_dim, config.category_embedding_dim);
    params.projection_bias = Mat<S>::Zero(config.category_embedding_dim, 1);
  }
  return params;
}

template <typename S>
void check_shapes(const EncoderParams<S>& params, const FeatureConfig& config) {
  auto expect = [](bool ok, const std::string& what) {
    if (!ok) throw ShapeError("encoder shape mismatch: " + what);
  };
  expect(params.title_table.rows() == config.title_embedding_dim &&
             params.title_table.cols() == config.title_hash_buckets,
         "title_table");
  expect(params.price_table.rows() == config.price_embedding_dim &&
             params.price_table.cols() == config.num_price_buckets(),
         "price_table");
  expect(params.category_table.rows() == config.category_embedding_dim &&
             params.category_table.cols() == config.num_category_rows(),
         "category_table");
  expect(params.seller_table.rows() == config.seller_embedding_dim &&
             params.seller_table.cols() == config.seller_hash_buckets,
         "seller_table");
  auto check_mlp = [&](const std::vector<DenseLayer<S>>& mlp, int in_width, const char* name) {
    expect(!mlp.empty(), std::string(name) + " empty");
    int width = in_width;
    for (const auto& layer : mlp) {
      expect(layer.weight.cols() == width, std::string(name) + " input width");
      expect(layer.bias.rows() == layer.weight.rows() && layer.bias.cols() == 1,
             std::string(name) + " bias");
      width = static_cast<int>(layer.weight.rows());
    }
    expect(width == params.output_dim, std::string(name) + " output width");
  };
  check_mlp(params.mlp, config.concat_width(), "mlp");
  if (params.mode == EncoderMode::Complementary) {
    check_mlp(params.query_mlp, config.concat_width() + config.category_embedding_dim, "query_mlp");
    expect(params.projection_weight.rows() == config.category_embedding_dim &&
               params.projection_weight.cols() == config.category_embedding_dim,
           "projection_weight");
    expect(params.projection_bias.rows() == config.category_embedding_dim &&
               params.projection_bias.cols() == 1,
           "projection_bias");
  } else {
    expect(params.query_mlp.empty() && params.projection_weight.size() == 0,
           "similarity checkpoint carries complementary tensors");
  }
}

// Forward state kept for backprop.
template <typename S>
struct EncodeCache {
  Tower tower = Tower::Target;
  Mat<S> input;                     // concat width x B
  std::vector<Mat<S>> pre;          // pre-activations per layer
  std::vector<Mat<S>> post;         // activations per layer
  Vec<S> inv_norm;                  // 1 / pre-normalization norm per column
  Mat<S> out;                       // unit columns, output_dim x B
  std::vector<FeatureIndices> features;
  std::vector<std::int32_t> conditioned_rows;  // complementary query only
};

namespace detail {

template <typename S>
void fill_input_column(Mat<S>& input, Eigen::Index col, const FeatureIndices& f,
                       const EncoderParams<S>& params, const FeatureConfig& config,
                       const std::int32_t* conditioned_row) {
  Eigen::Index offset = 0;
  auto title = input.col(col).segment(offset, config.title_embedding_dim);
  title.setZero();
  for (std::int32_t b : f.title_buckets) title += params.title_table.col(b);
  if (!f.title_buckets.empty()) title /= static_cast<S>(f.title_buckets.size());
  offset += config.title_embedding_dim;

  input.col(col).segment(offset, config.price_embedding_dim) = params.price_table.col(f.price_bucket);
  offset += config.price_embedding_dim;

  for (std::int32_t row : f.category_rows) {
    input.col(col).segment(offset, config.category_embedding_dim) = params.category_table.col(row);
    offset += config.category_embedding_dim;
  }

  input.col(col).segment(offset, config.seller_embedding_dim) = params.seller_table.col(f.seller_bucket);
  offset += config.seller_embedding_dim;

  if (conditioned_row) {
    input.col(col).segment(offset, config.category_embedding_dim) =
        params.category_table.col(*conditioned_row);
    offset += config.category_embedding_dim;
  }
}

template <typename S>
void scatter_input_gradient(const Mat<S>& d_input, Eigen::Index col, const FeatureIndices& f,
                            const FeatureConfig& config, EncoderParams<S>& grads,
                            const std::int32_t* conditioned_row) {
  Eigen::Index offset = 0;
  if (!f.title_buckets.empty()) {
    auto d_title = d_input.col(col).segment(offset, config.title_embedding_dim) /
                   static_cast<S>(f.title_buckets.size());
    for (std::int32_t b : f.title_buckets) grads.title_table.col(b) += d_title;
  }
  offset += config.title_embedding_dim;

  grads.price_table.col(f.price_bucket) +=
      d_input.col(col).segment(offset, config.price_embedding_dim);
  offset += config.price_embedding_dim;

  for (std::int32_t row : f.category_rows) {
    grads.category_table.col(row) +=
        d_input.col(col).segment(offset, config.category_embedding_dim);
    offset += config.category_embedding_dim;
  }

  grads.seller_table.col(f.seller_bucket) +=
      d_input.col(col).segment(offset, config.seller_embedding_dim);
  offset += config.seller_embedding_dim;

  if (conditioned_row) {
    grads.category_table.col(*conditioned_row) +=
        d_input.col(col).segment(offset, config.category_embedding_dim);
    offset += config.category_embedding_dim;
  }
}

}  // namespace detail

// Encodes a batch of featurized products into unit-norm columns. For the
// complementary query tower, conditioned_rows supplies one target-category
// table row per example.
template <typename S>
EncodeCache<S> encode_batch(std::vector<FeatureIndices> features, const EncoderParams<S>& params,
                            const FeatureConfig& config, Tower tower,
                            std::vector<std::int32_t> conditioned_rows = {}) {
  const auto& mlp = tower == Tower::Target ? params.mlp : params.query_mlp;
  if (tower == Tower::ComplementaryQuery) {
    if (params.mode != EncoderMode::Complementary)
      throw ShapeError("complementary query tower requested from a similarity encoder");
    if (conditioned_rows.size() != features.size())
      throw ShapeError("conditioned rows must match batch size");
  }

  EncodeCache<S> cache;
  cache.tower = tower;
  const Eigen::Index batch = static_cast<Eigen::Index>(features.size());
  const Eigen::Index width =
      config.concat_width() +
      (tower == Tower::ComplementaryQuery ? config.category_embedding_dim : 0);
  cache.input.resize(width, batch);
  for (Eigen::Index j = 0; j < batch; ++j)
    detail::fill_input_column(cache.input, j, features[static_cast<std::size_t>(j)], params, config,
                              tower == Tower::ComplementaryQuery
                                  ? &conditioned_rows[static_cast<std::size_t>(j)]
                                  : nullptr);

  const Mat<S>* h = &cache.input;
  for (const auto& layer : mlp) {
    Mat<S> z = layer.weight * (*h);
    z.colwise() += layer.bias.col(0);
    cache.pre.push_back(std::move(z));
    Mat<S> a = layer.activation == Activation::Relu
                   ? cache.pre.back().cwiseMax(S(0)).eval()
                   : cache.pre.back();
    cache.post.push_back(std::move(a));
    h = &cache.post.back();
  }

  const Mat<S>& raw = cache.post.back();
  if (!raw.allFinite()) throw Error("encoder produced non-finite activations");
  cache.inv_norm.resize(batch);
  cache.out.resize(raw.rows(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    double n = raw.col(j).template cast<double>().norm();
    if (n < 1e-12) throw Error("degenerate embedding norm");
    cache.inv_norm(j) = static_cast<S>(1.0 / n);
    cache.out.col(j) = raw.col(j) * cache.inv_norm(j);
  }
  cache.features = std::move(features);
  cache.conditioned_rows = std::move(conditioned_rows);
  return cache;
}

// Backpropagates d(loss)/d(out) through normalization, MLP and embedding
// lookups, accumulating into grads.
template <typename S>
void encode_backward(const EncodeCache<S>& cache, const Mat<S>& d_out,
                     const EncoderParams<S>& params, const FeatureConfig& config,
                     EncoderParams<S>& grads) {
  const auto& mlp = cache.tower == Tower::Target ? params.mlp : params.query_mlp;
  auto& mlp_grads = cache.tower == Tower::Target ? grads.mlp : grads.query_mlp;
  const Eigen::Index batch = cache.out.cols();

  // y = r / |r|  =>  dr = (dy - y (y . dy)) / |r|
  Mat<S> d_h(cache.out.rows(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    S along = cache.out.col(j).dot(d_out.col(j));
    d_h.col(j) = (d_out.col(j) - cache.out.col(j) * along) * cache.inv_norm(j);
  }

  for (int li = static_cast<int>(mlp.size()) - 1; li >= 0; --li) {
    const auto& layer = mlp[static_cast<std::size_t>(li)];
    auto& layer_grads = mlp_grads[static_cast<std::size_t>(li)];
    Mat<S> d_z = layer.activation == Activation::Relu
                     ? (cache.pre[static_cast<std::size_t>(li)].array() > S(0))
                           .select(d_h, Mat<S>::Zero(d_h.rows(), d_h.cols()))
                           .eval()
                     : std::move(d_h);
    const Mat<S>& below =
        li == 0 ? cache.input : cache.post[static_cast<std::size_t>(li) - 1];
    layer_grads.weight.noalias() += d_z * below.transpose();
    layer_grads.bias.col(0) += d_z.rowwise().sum();
    d_h = layer.weight.transpose() * d_z;
  }

  for (Eigen::Index j = 0; j < batch; ++j)
    detail::scatter_input_gradient(d_h, j, cache.features[static_cast<std::size_t>(j)], config,
                                   grads,
                                   cache.tower == Tower::ComplementaryQuery
                                       ? &cache.conditioned_rows[static_cast<std::size_t>(j)]
                                       : nullptr);
}

template <typename S>
Vec<S> encode(const Product& product, const EncoderParams<S>& params, const FeatureConfig& config) {
  auto cache = encode_batch<S>({featurize(product, config)}, params, config, Tower::Target);
  return cache.out.col(0);
}

// Query-side encoding conditioned on a target category. Unknown categories
// fall back to the reserved row; used_unknown_row reports that when non-null.
template <typename S>
Vec<S> encode_complementary_query(const Product& product, const std::string& target_category,
                                  const EncoderParams<S>& params, const FeatureConfig& config,
                                  bool* used_unknown_row = nullptr) {
  std::int32_t row = static_cast<std::int32_t>(config.category_row(target_category));
  if (used_unknown_row) *used_unknown_row = row == 0;
  auto cache = encode_batch<S>({featurize(product, config)}, params, config,
                               Tower::ComplementaryQuery, {row});
  return cache.out.col(0);
}

// Maps the query's leaf-category embedding into the category space; trained to
// reconstruct the target category's embedding row.
template <typename S>
Vec<S> project_complementary(const FeatureIndices& features, const EncoderParams<S>& params) {
  if (params.mode != EncoderMode::Complementary)
    throw ShapeError("projection head only exists in complementary mode");
  return params.projection_weight * params.category_table.col(features.leaf_category_row) +
         params.projection_bias.col(0);
}

// Bulk encoding with the Product Encoder, batched for index builds.
std::vector<ProductEmbedding> encode_catalog(const Catalog& catalog,
                                             const EncoderParams<float>& params,
                                             const FeatureConfig& config);

struct Checkpoint {
  EncoderParams<float> params;
  FeatureConfig config;
};

// Single-file binary checkpoint with a format version and explicit shapes;
// loading re-validates every tensor against the stored feature config.
void save_checkpoint(const std::string& path, const EncoderParams<float>& params,
                     const FeatureConfig& config);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace twotower
