#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twotower/loss.hpp"
#include "twotower/pairs.hpp"

namespace twotower {

struct EncoderOverrides {
  int output_dim = 64;
  int hidden_dim = 128;
  int title_hash_buckets = 4096;
  int title_embedding_dim = 32;
  int price_embedding_dim = 16;
  int category_embedding_dim = 16;
  int max_category_levels = 4;
  int seller_hash_buckets = 1024;
  int seller_embedding_dim = 16;
};

struct TrainConfig {
  int batch_size = 256;
  int uniform_negatives_per_batch = 512;
  double temperature = 0.05;
  double learning_rate = 0.05;
  int epochs = 10;
  std::string optimizer = "momentum";  // "sgd" | "momentum"
  double momentum = 0.9;
  double reconstruction_weight = 0.0;  // forced to 0 in similarity mode
  std::uint64_t seed = 1;
  bool logq_correction = true;
  bool accidental_hit_masking = true;
  EncoderOverrides encoder;

  void validate() const;
};

TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& config, const std::string& path);

// Default feature config for the catalogue with the override dims applied.
FeatureConfig feature_config_for(const Catalog& catalog, const EncoderOverrides& overrides);

struct LossReport {
  int epoch = 0;
  double main_loss = 0.0;
  double reconstruction_loss = 0.0;
  double total = 0.0;  // main + lambda * reconstruction
  double grad_norm = 0.0;
  double wall_time_s = 0.0;
};

// One optimizer step's worth of inputs, resolved to catalogue indices.
// candidate_items lists the item behind every softmax candidate (in-batch
// targets first, then uniform negatives) and is empty when masking is off.
struct TrainBatch {
  std::vector<int> query_products;
  std::vector<int> target_products;
  std::vector<int> negative_products;
  std::vector<std::int32_t> conditioned_rows;  // complementary mode only
  std::vector<std::int32_t> candidate_items;
  std::vector<double> log_q;
};

template <typename S>
struct BatchLossResult {
  S main_loss = S(0);
  S reconstruction = S(0);
  S total = S(0);
};

// Full forward pass for one batch: conditioned/shared tower encodings, sampled
// softmax over the mixed candidate set and, when lambda > 0, the projection
// reconstruction term. When grads is non-null the matching backward pass
// accumulates into it. This single code path serves float training, double
// gradient checking and the finite-difference oracle.
template <typename S>
BatchLossResult<S> batch_loss(const EncoderParams<S>& params, const FeatureConfig& config,
                              std::span<const FeatureIndices> product_features,
                              const TrainBatch& batch, S temperature, S lambda,
                              EncoderParams<S>* grads) {
  auto gather = [&](const std::vector<int>& products) {
    std::vector<FeatureIndices> out;
    out.reserve(products.size());
    for (int p : products) out.push_back(product_features[static_cast<std::size_t>(p)]);
    return out;
  };

  const bool conditioned = !batch.conditioned_rows.empty();
  auto query_cache =
      conditioned
          ? encode_batch<S>(gather(batch.query_products), params, config,
                            Tower::ComplementaryQuery, batch.conditioned_rows)
          : encode_batch<S>(gather(batch.query_products), params, config, Tower::Target);
  auto target_cache = encode_batch<S>(gather(batch.target_products), params, config, Tower::Target);
  auto negative_cache =
      encode_batch<S>(gather(batch.negative_products), params, config, Tower::Target);

  std::optional<Vec<S>> log_q;
  if (!batch.log_q.empty()) {
    log_q.emplace(static_cast<Eigen::Index>(batch.log_q.size()));
    for (std::size_t i = 0; i < batch.log_q.size(); ++i)
      (*log_q)(static_cast<Eigen::Index>(i)) = static_cast<S>(batch.log_q[i]);
  }
  auto softmax = sampled_softmax_loss<S>(query_cache.out, target_cache.out, negative_cache.out,
                                         temperature, batch.candidate_items,
                                         log_q ? &*log_q : nullptr);

  BatchLossResult<S> result;
  result.main_loss = softmax.loss;

  Mat<S> projection_in, projection_out, target_rows;
  ReconstructionResult<S> recon;
  if (lambda > S(0)) {
    if (!conditioned) throw InvalidArgument("reconstruction term needs a conditioned query tower");
    const Eigen::Index b = static_cast<Eigen::Index>(batch.query_products.size());
    const Eigen::Index dim = params.projection_weight.rows();
    projection_in.resize(dim, b);
    target_rows.resize(dim, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto& f = product_features[static_cast<std::size_t>(
          batch.query_products[static_cast<std::size_t>(j)])];
      projection_in.col(j) = params.category_table.col(f.leaf_category_row);
      target_rows.col(j) =
          params.category_table.col(batch.conditioned_rows[static_cast<std::size_t>(j)]);
    }
    projection_out = params.projection_weight * projection_in;
    projection_out.colwise() += params.projection_bias.col(0);
    recon = reconstruction_loss<S>(projection_out, target_rows);
    result.reconstruction = recon.loss;
  }
  result.total = result.main_loss + lambda * result.reconstruction;

  if (grads) {
    encode_backward(query_cache, softmax.grad_queries, params, config, *grads);
    encode_backward(target_cache, softmax.grad_targets, params, config, *grads);
    if (negative_cache.out.cols() > 0)
      encode_backward(negative_cache, softmax.grad_negatives, params, config, *grads);
    if (lambda > S(0)) {
      Mat<S> d_projection = recon.grad_projection * lambda;
      grads->projection_weight.noalias() += d_projection * projection_in.transpose();
      grads->projection_bias.col(0) += d_projection.rowwise().sum();
      Mat<S> d_in = params.projection_weight.transpose() * d_projection;
      for (Eigen::Index j = 0; j < d_in.cols(); ++j) {
        const auto& f = product_features[static_cast<std::size_t>(
            batch.query_products[static_cast<std::size_t>(j)])];
        grads->category_table.col(f.leaf_category_row) += d_in.col(j);
        grads->category_table.col(batch.conditioned_rows[static_cast<std::size_t>(j)]) +=
            recon.grad_target_rows.col(j) * lambda;
      }
    }
  }
  return result;
}

// Draws weighted positive pairs plus uniform catalogue negatives and attaches
// the log-q and masking side data the loss needs.
class BatchSampler {
 public:
  BatchSampler(const PairSet& pairs, const Catalog& catalog, EncoderMode mode,
               const TrainConfig& config, std::span<const FeatureIndices> product_features);

  TrainBatch sample(Rng& rng) const;
  std::size_t pair_count() const { return pair_queries_.size(); }

 private:
  const Catalog& catalog_;
  EncoderMode mode_;
  const TrainConfig& config_;
  std::vector<int> pair_queries_;
  std::vector<int> pair_targets_;
  std::vector<std::int32_t> pair_target_leaf_rows_;
  std::vector<double> target_log_freq_;  // per catalogue item, as softmax target
  double uniform_log_q_ = 0.0;
  std::optional<WeightedSampler> sampler_;
};

using EpochCallback =
    std::function<void(const EncoderParams<float>&, const FeatureConfig&, const LossReport&)>;

struct TrainResult {
  EncoderParams<float> params;
  FeatureConfig config;
  std::vector<LossReport> reports;
};

TrainResult train_similarity(const PairSet& pairs, const Catalog& catalog,
                             const TrainConfig& config, const EpochCallback& on_epoch = {});

// Query tower conditioned on the target product's leaf category; total loss is
// sampled softmax plus reconstruction_weight times the reconstruction error.
// Every pair must satisfy the complementary map, otherwise the offending pair
// is reported.
TrainResult train_complementary(const PairSet& pairs, const Catalog& catalog,
                                const ComplementaryMap& map, const TrainConfig& config,
                                const EpochCallback& on_epoch = {});

// Analytic-vs-central-difference check over randomly sampled parameters of the
// full batch loss, in double precision. Returns the max relative error
// |a - n| / max(1e-8, |a| + |n|).
double gradcheck(const EncoderParams<double>& params, const FeatureConfig& config,
                 std::span<const FeatureIndices> product_features, const TrainBatch& batch,
                 double temperature, double lambda, int sample_params, double step,
                 std::uint64_t seed);

// Self-contained random gradcheck instance; catalogue-free.
struct GradcheckInstance {
  EncoderParams<double> params;
  FeatureConfig config;
  std::vector<FeatureIndices> features;
  TrainBatch batch;
};
GradcheckInstance make_gradcheck_instance(EncoderMode mode, int batch_size, int num_negatives,
                                          int dim, bool logq_correction, bool masking,
                                          std::uint64_t seed);

void append_training_log(const std::string& path, const LossReport& report);

}  // namespace twotower
