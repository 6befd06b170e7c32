#include "twotower/encoder.hpp"

#include "twotower/detail/binio.hpp"

namespace twotower {

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4b435454;  // "TTCK"
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

std::vector<ProductEmbedding> encode_catalog(const Catalog& catalog,
                                             const EncoderParams<float>& params,
                                             const FeatureConfig& config) {
  std::vector<ProductEmbedding> out;
  out.reserve(catalog.size());
  const std::size_t block = 1024;
  for (std::size_t begin = 0; begin < catalog.size(); begin += block) {
    std::size_t end = std::min(begin + block, catalog.size());
    std::vector<FeatureIndices> features;
    features.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i)
      features.push_back(featurize(catalog.products[i], config));
    auto cache = encode_batch(std::move(features), params, config, Tower::Target);
    for (std::size_t i = begin; i < end; ++i)
      out.push_back({catalog.products[i].product_id,
                     cache.out.col(static_cast<Eigen::Index>(i - begin))});
  }
  return out;
}

void save_checkpoint(const std::string& path, const EncoderParams<float>& params,
                     const FeatureConfig& config) {
  check_shapes(params, config);
  detail::BinaryWriter w(path);
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u8(params.mode == EncoderMode::Similarity ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(params.output_dim));

  w.u32(static_cast<std::uint32_t>(config.title_hash_buckets));
  w.u32(static_cast<std::uint32_t>(config.title_embedding_dim));
  w.u32(static_cast<std::uint32_t>(config.price_embedding_dim));
  w.u32(static_cast<std::uint32_t>(config.category_embedding_dim));
  w.u32(static_cast<std::uint32_t>(config.max_category_levels));
  w.u32(static_cast<std::uint32_t>(config.seller_hash_buckets));
  w.u32(static_cast<std::uint32_t>(config.seller_embedding_dim));
  w.u32(static_cast<std::uint32_t>(config.price_bucket_edges.size()));
  for (double e : config.price_bucket_edges) w.f64(e);
  w.u32(static_cast<std::uint32_t>(config.category_ids.size()));
  for (const auto& id : config.category_ids) w.string(id);

  w.u32(static_cast<std::uint32_t>(params.mlp.size()));
  for (const auto& layer : params.mlp) w.u8(static_cast<std::uint8_t>(layer.activation));
  w.u32(static_cast<std::uint32_t>(params.query_mlp.size()));
  for (const auto& layer : params.query_mlp) w.u8(static_cast<std::uint8_t>(layer.activation));

  auto tensors = tensor_list(params);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, mat] : tensors) {
    w.string(name);
    w.u64(static_cast<std::uint64_t>(mat->rows()));
    w.u64(static_cast<std::uint64_t>(mat->cols()));
    w.f32_array(mat->data(), static_cast<std::size_t>(mat->size()));
  }
  w.commit();
}

Checkpoint load_checkpoint(const std::string& path) {
  detail::BinaryReader r(path);
  if (r.u32() != kCheckpointMagic) throw ParseError(path + ": not a checkpoint file");
  if (r.u32() != kCheckpointVersion) throw ParseError(path + ": unsupported checkpoint version");

  Checkpoint ckpt;
  std::uint8_t mode = r.u8();
  if (mode > 1) throw ParseError(path + ": unknown encoder mode");
  ckpt.params.mode = mode == 0 ? EncoderMode::Similarity : EncoderMode::Complementary;
  ckpt.params.output_dim = static_cast<int>(r.u32());

  FeatureConfig& config = ckpt.config;
  config.title_hash_buckets = static_cast<int>(r.u32());
  config.title_embedding_dim = static_cast<int>(r.u32());
  config.price_embedding_dim = static_cast<int>(r.u32());
  config.category_embedding_dim = static_cast<int>(r.u32());
  config.max_category_levels = static_cast<int>(r.u32());
  config.seller_hash_buckets = static_cast<int>(r.u32());
  config.seller_embedding_dim = static_cast<int>(r.u32());
  std::uint32_t num_edges = r.u32();
  config.price_bucket_edges.resize(num_edges);
  for (auto& e : config.price_bucket_edges) e = r.f64();
  std::uint32_t num_categories = r.u32();
  config.category_ids.resize(num_categories);
  for (auto& id : config.category_ids) id = r.string();
  config.rebuild_category_lookup();
  config.validate();

  std::uint32_t mlp_layers = r.u32();
  ckpt.params.mlp.resize(mlp_layers);
  for (auto& layer : ckpt.params.mlp) layer.activation = static_cast<Activation>(r.u8());
  std::uint32_t query_layers = r.u32();
  ckpt.params.query_mlp.resize(query_layers);
  for (auto& layer : ckpt.params.query_mlp) layer.activation = static_cast<Activation>(r.u8());

  auto tensors = tensor_list(ckpt.params);
  std::uint32_t tensor_count = r.u32();
  if (tensor_count != tensors.size())
    throw ParseError(path + ": tensor count does not match encoder layout");
  for (auto& [name, mat] : tensors) {
    std::string stored = r.string();
    if (stored != name)
      throw ParseError(path + ": expected tensor " + name + ", found " + stored);
    auto rows = static_cast<Eigen::Index>(r.u64());
    auto cols = static_cast<Eigen::Index>(r.u64());
    if (rows < 0 || cols < 0 || rows * cols > (1ll << 32))
      throw ParseError(path + ": implausible tensor shape for " + name);
    mat->resize(rows, cols);
    r.f32_array(mat->data(), static_cast<std::size_t>(mat->size()));
  }

  check_shapes(ckpt.params, config);
  if (!all_finite(ckpt.params)) throw ValidationError(path + ": checkpoint has non-finite values");
  return ckpt;
}

}  // namespace twotower
