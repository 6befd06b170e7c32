#include "twotower/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace twotower {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 2) throw InvalidArgument("train config: batch_size must be >= 2");
  if (uniform_negatives_per_batch < 0)
    throw InvalidArgument("train config: uniform_negatives_per_batch must be >= 0");
  if (!(temperature > 0.0)) throw InvalidArgument("train config: temperature must be positive");
  if (learning_rate < 0.0) throw InvalidArgument("train config: learning_rate must be >= 0");
  if (epochs < 1) throw InvalidArgument("train config: epochs must be >= 1");
  if (optimizer != "sgd" && optimizer != "momentum")
    throw InvalidArgument("train config: optimizer must be sgd or momentum");
  if (momentum < 0.0 || momentum >= 1.0)
    throw InvalidArgument("train config: momentum must be in [0, 1)");
  if (reconstruction_weight < 0.0)
    throw InvalidArgument("train config: reconstruction_weight must be >= 0");
}

namespace {

template <typename T>
void read_key(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

const char* const kTrainKeys[] = {"batch_size",      "uniform_negatives_per_batch",
                                  "temperature",     "learning_rate",
                                  "epochs",          "optimizer",
                                  "momentum",        "reconstruction_weight",
                                  "seed",            "logq_correction",
                                  "accidental_hit_masking", "encoder"};
const char* const kEncoderKeys[] = {"output_dim",           "hidden_dim",
                                    "title_hash_buckets",   "title_embedding_dim",
                                    "price_embedding_dim",  "category_embedding_dim",
                                    "max_category_levels",  "seller_hash_buckets",
                                    "seller_embedding_dim"};

void reject_unknown_keys(const json& obj, std::span<const char* const> known,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ParseError(where + ": unknown key \"" + key + "\"");
  }
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json obj;
  try {
    obj = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  reject_unknown_keys(obj, kTrainKeys, path);

  TrainConfig config;
  read_key(obj, "batch_size", config.batch_size);
  read_key(obj, "uniform_negatives_per_batch", config.uniform_negatives_per_batch);
  read_key(obj, "temperature", config.temperature);
  read_key(obj, "learning_rate", config.learning_rate);
  read_key(obj, "epochs", config.epochs);
  read_key(obj, "optimizer", config.optimizer);
  read_key(obj, "momentum", config.momentum);
  read_key(obj, "reconstruction_weight", config.reconstruction_weight);
  read_key(obj, "seed", config.seed);
  read_key(obj, "logq_correction", config.logq_correction);
  read_key(obj, "accidental_hit_masking", config.accidental_hit_masking);
  if (obj.contains("encoder")) {
    const json& enc = obj.at("encoder");
    reject_unknown_keys(enc, kEncoderKeys, path + " (encoder)");
    read_key(enc, "output_dim", config.encoder.output_dim);
    read_key(enc, "hidden_dim", config.encoder.hidden_dim);
    read_key(enc, "title_hash_buckets", config.encoder.title_hash_buckets);
    read_key(enc, "title_embedding_dim", config.encoder.title_embedding_dim);
    read_key(enc, "price_embedding_dim", config.encoder.price_embedding_dim);
    read_key(enc, "category_embedding_dim", config.encoder.category_embedding_dim);
    read_key(enc, "max_category_levels", config.encoder.max_category_levels);
    read_key(enc, "seller_hash_buckets", config.encoder.seller_hash_buckets);
    read_key(enc, "seller_embedding_dim", config.encoder.seller_embedding_dim);
  }
  config.validate();
  return config;
}

void save_train_config(const TrainConfig& config, const std::string& path) {
  json enc = {{"output_dim", config.encoder.output_dim},
              {"hidden_dim", config.encoder.hidden_dim},
              {"title_hash_buckets", config.encoder.title_hash_buckets},
              {"title_embedding_dim", config.encoder.title_embedding_dim},
              {"price_embedding_dim", config.encoder.price_embedding_dim},
              {"category_embedding_dim", config.encoder.category_embedding_dim},
              {"max_category_levels", config.encoder.max_category_levels},
              {"seller_hash_buckets", config.encoder.seller_hash_buckets},
              {"seller_embedding_dim", config.encoder.seller_embedding_dim}};
  json obj = {{"batch_size", config.batch_size},
              {"uniform_negatives_per_batch", config.uniform_negatives_per_batch},
              {"temperature", config.temperature},
              {"learning_rate", config.learning_rate},
              {"epochs", config.epochs},
              {"optimizer", config.optimizer},
              {"momentum", config.momentum},
              {"reconstruction_weight", config.reconstruction_weight},
              {"seed", config.seed},
              {"logq_correction", config.logq_correction},
              {"accidental_hit_masking", config.accidental_hit_masking},
              {"encoder", enc}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << obj.dump(2) << "\n";
}

FeatureConfig feature_config_for(const Catalog& catalog, const EncoderOverrides& overrides) {
  FeatureConfig config = default_feature_config(catalog);
  config.title_hash_buckets = overrides.title_hash_buckets;
  config.title_embedding_dim = overrides.title_embedding_dim;
  config.price_embedding_dim = overrides.price_embedding_dim;
  config.category_embedding_dim = overrides.category_embedding_dim;
  config.max_category_levels = overrides.max_category_levels;
  config.seller_hash_buckets = overrides.seller_hash_buckets;
  config.seller_embedding_dim = overrides.seller_embedding_dim;
  config.validate();
  return config;
}

BatchSampler::BatchSampler(const PairSet& pairs, const Catalog& catalog, EncoderMode mode,
                           const TrainConfig& config,
                           std::span<const FeatureIndices> product_features)
    : catalog_(catalog), mode_(mode), config_(config) {
  if (pairs.empty()) throw InvalidArgument("training needs a non-empty pair set");
  if (product_features.size() != catalog.size())
    throw ShapeError("product features not aligned with catalogue");

  std::vector<double> weights;
  weights.reserve(pairs.size());
  std::vector<double> target_weight(catalog.size(), 0.0);
  double total_weight = 0.0;
  for (const auto& pair : pairs.pairs) {
    int q = catalog.index_of(pair.query_id);
    int t = catalog.index_of(pair.target_id);
    if (q < 0) throw ValidationError("pair references unknown product " + pair.query_id);
    if (t < 0) throw ValidationError("pair references unknown product " + pair.target_id);
    pair_queries_.push_back(q);
    pair_targets_.push_back(t);
    pair_target_leaf_rows_.push_back(product_features[static_cast<std::size_t>(t)].leaf_category_row);
    weights.push_back(static_cast<double>(pair.weight));
    target_weight[static_cast<std::size_t>(t)] += static_cast<double>(pair.weight);
    total_weight += static_cast<double>(pair.weight);
  }
  sampler_.emplace(weights);

  target_log_freq_.resize(catalog.size(), 0.0);
  for (std::size_t i = 0; i < catalog.size(); ++i)
    target_log_freq_[i] =
        target_weight[i] > 0.0 ? std::log(target_weight[i] / total_weight) : 0.0;
  uniform_log_q_ = -std::log(static_cast<double>(catalog.size()));
}

TrainBatch BatchSampler::sample(Rng& rng) const {
  TrainBatch batch;
  const int b = config_.batch_size;
  const int m = config_.uniform_negatives_per_batch;
  batch.query_products.reserve(static_cast<std::size_t>(b));
  batch.target_products.reserve(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    std::size_t p = sampler_->sample(rng);
    batch.query_products.push_back(pair_queries_[p]);
    batch.target_products.push_back(pair_targets_[p]);
    if (mode_ == EncoderMode::Complementary)
      batch.conditioned_rows.push_back(pair_target_leaf_rows_[p]);
  }
  for (int i = 0; i < m; ++i)
    batch.negative_products.push_back(
        static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(catalog_.size()))));

  if (config_.accidental_hit_masking) {
    batch.candidate_items.reserve(static_cast<std::size_t>(b + m));
    for (int t : batch.target_products) batch.candidate_items.push_back(t);
    for (int n : batch.negative_products) batch.candidate_items.push_back(n);
  }
  if (config_.logq_correction) {
    batch.log_q.reserve(static_cast<std::size_t>(b + m));
    for (int t : batch.target_products)
      batch.log_q.push_back(target_log_freq_[static_cast<std::size_t>(t)]);
    for (int i = 0; i < m; ++i) batch.log_q.push_back(uniform_log_q_);
  }
  return batch;
}

namespace {

double gradient_norm(const EncoderParams<float>& grads) {
  double sum = 0.0;
  for (const auto& [name, mat] : tensor_list(grads))
    sum += mat->template cast<double>().squaredNorm();
  return std::sqrt(sum);
}

TrainResult train_impl(const PairSet& pairs, const Catalog& catalog, EncoderMode mode,
                       const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const double lambda = mode == EncoderMode::Similarity ? 0.0 : config.reconstruction_weight;

  FeatureConfig feature_config = feature_config_for(catalog, config.encoder);
  std::vector<FeatureIndices> features;
  features.reserve(catalog.size());
  for (const auto& p : catalog.products) features.push_back(featurize(p, feature_config));

  auto params = init_encoder_params<float>(feature_config, mode, config.encoder.output_dim,
                                           config.encoder.hidden_dim, config.seed);
  BatchSampler batches(pairs, catalog, mode, config, features);

  auto grads = zeros_like(params);
  auto velocity = zeros_like(params);
  auto grad_tensors = tensor_list(grads);
  auto param_tensors = tensor_list(params);
  auto velocity_tensors = tensor_list(velocity);

  Rng rng(config.seed);
  const int steps_per_epoch = static_cast<int>(
      (batches.pair_count() + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size));
  const float lr = static_cast<float>(config.learning_rate);
  const float mu = static_cast<float>(config.momentum);
  const bool use_momentum = config.optimizer == "momentum";

  TrainResult result;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto epoch_start = std::chrono::steady_clock::now();
    double sum_main = 0.0, sum_recon = 0.0, sum_total = 0.0, sum_grad_norm = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      TrainBatch batch = batches.sample(rng);
      for (auto& [name, mat] : grad_tensors) mat->setZero();
      BatchLossResult<float> losses;
      try {
        losses = batch_loss<float>(params, feature_config, features, batch,
                                   static_cast<float>(config.temperature),
                                   static_cast<float>(lambda), &grads);
      } catch (const Error& e) {
        throw TrainingDiverged("training aborted at epoch " + std::to_string(epoch) + ": " +
                               e.what());
      }
      double grad_norm = gradient_norm(grads);
      if (!std::isfinite(losses.total) || !std::isfinite(grad_norm))
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(step));

      if (use_momentum) {
        for (std::size_t t = 0; t < param_tensors.size(); ++t) {
          *velocity_tensors[t].second =
              mu * *velocity_tensors[t].second - lr * *grad_tensors[t].second;
          *param_tensors[t].second += *velocity_tensors[t].second;
        }
      } else {
        for (std::size_t t = 0; t < param_tensors.size(); ++t)
          *param_tensors[t].second -= lr * *grad_tensors[t].second;
      }

      sum_main += losses.main_loss;
      sum_recon += losses.reconstruction;
      sum_total += losses.total;
      sum_grad_norm += grad_norm;
    }
    if (!all_finite(params))
      throw TrainingDiverged("non-finite parameters after epoch " + std::to_string(epoch));

    LossReport report;
    report.epoch = epoch;
    report.main_loss = sum_main / steps_per_epoch;
    report.reconstruction_loss = sum_recon / steps_per_epoch;
    report.total = sum_total / steps_per_epoch;
    report.grad_norm = sum_grad_norm / steps_per_epoch;
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.reports.push_back(report);
    if (on_epoch) on_epoch(params, feature_config, report);
  }

  result.params = std::move(params);
  result.config = std::move(feature_config);
  return result;
}

}  // namespace

TrainResult train_similarity(const PairSet& pairs, const Catalog& catalog,
                             const TrainConfig& config, const EpochCallback& on_epoch) {
  return train_impl(pairs, catalog, EncoderMode::Similarity, config, on_epoch);
}

TrainResult train_complementary(const PairSet& pairs, const Catalog& catalog,
                                const ComplementaryMap& map, const TrainConfig& config,
                                const EpochCallback& on_epoch) {
  for (const auto& pair : pairs.pairs) {
    const Product* q = catalog.find(pair.query_id);
    const Product* t = catalog.find(pair.target_id);
    if (!q || !t)
      throw ValidationError("pair references unknown product (" + pair.query_id + ", " +
                            pair.target_id + ")");
    const auto* targets = map.targets_for(q->leaf_category());
    bool mapped = targets && std::find(targets->begin(), targets->end(), t->leaf_category()) !=
                                 targets->end();
    if (!mapped || q->leaf_category() == t->leaf_category())
      throw ValidationError("pair (" + pair.query_id + ", " + pair.target_id +
                            ") violates the complementary map");
  }
  return train_impl(pairs, catalog, EncoderMode::Complementary, config, on_epoch);
}

double gradcheck(const EncoderParams<double>& params, const FeatureConfig& config,
                 std::span<const FeatureIndices> product_features, const TrainBatch& batch,
                 double temperature, double lambda, int sample_params, double step,
                 std::uint64_t seed) {
  EncoderParams<double> work = params;
  auto analytic = zeros_like(work);
  batch_loss<double>(work, config, product_features, batch, temperature, lambda, &analytic);

  auto tensors = tensor_list(work);
  auto analytic_tensors = tensor_list(analytic);
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  for (const auto& [name, mat] : tensors) {
    sizes.push_back(static_cast<std::size_t>(mat->size()));
    total += sizes.back();
  }

  auto loss_at = [&]() {
    return batch_loss<double>(work, config, product_features, batch, temperature, lambda, nullptr)
        .total;
  };

  Rng rng(seed);
  double max_rel_error = 0.0;
  for (int s = 0; s < sample_params; ++s) {
    std::size_t flat = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(total)));
    std::size_t tensor_idx = 0;
    while (flat >= sizes[tensor_idx]) {
      flat -= sizes[tensor_idx];
      ++tensor_idx;
    }
    double* value = tensors[tensor_idx].second->data() + flat;
    const double saved = *value;
    *value = saved + step;
    double plus = loss_at();
    *value = saved - step;
    double minus = loss_at();
    *value = saved;

    double numeric = (plus - minus) / (2.0 * step);
    double a = analytic_tensors[tensor_idx].second->data()[flat];
    double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    max_rel_error = std::max(max_rel_error, rel);
  }
  return max_rel_error;
}

GradcheckInstance make_gradcheck_instance(EncoderMode mode, int batch_size, int num_negatives,
                                          int dim, bool logq_correction, bool masking,
                                          std::uint64_t seed) {
  GradcheckInstance inst;
  inst.config.title_hash_buckets = 13;
  inst.config.title_embedding_dim = 5;
  inst.config.price_bucket_edges = {1.0, 10.0, 100.0};
  inst.config.price_embedding_dim = 3;
  inst.config.category_embedding_dim = 4;
  inst.config.max_category_levels = 2;
  inst.config.seller_hash_buckets = 7;
  inst.config.seller_embedding_dim = 3;
  inst.config.category_ids = {"c0", "c1", "c2", "c3", "c4"};
  inst.config.rebuild_category_lookup();

  inst.params = init_encoder_params<double>(inst.config, mode, dim, 2 * dim, seed);

  Rng rng(seed + 1);
  const int num_items = 2 * batch_size + num_negatives;
  for (int i = 0; i < num_items; ++i) {
    FeatureIndices f;
    int num_tokens = static_cast<int>(rng.uniform_int(4));  // empty titles included
    for (int t = 0; t < num_tokens; ++t)
      f.title_buckets.push_back(static_cast<std::int32_t>(rng.uniform_int(13)));
    f.price_bucket = static_cast<std::int32_t>(rng.uniform_int(4));
    f.category_rows = {static_cast<std::int32_t>(1 + rng.uniform_int(5)),
                       static_cast<std::int32_t>(1 + rng.uniform_int(5))};
    f.leaf_category_row = f.category_rows.back();
    f.seller_bucket = static_cast<std::int32_t>(rng.uniform_int(7));
    inst.features.push_back(std::move(f));
  }

  TrainBatch& batch = inst.batch;
  for (int i = 0; i < batch_size; ++i) {
    batch.query_products.push_back(i);
    batch.target_products.push_back(batch_size + i);
    if (mode == EncoderMode::Complementary)
      batch.conditioned_rows.push_back(
          inst.features[static_cast<std::size_t>(batch_size + i)].leaf_category_row);
  }
  for (int i = 0; i < num_negatives; ++i) batch.negative_products.push_back(2 * batch_size + i);
  if (masking) {
    for (int t : batch.target_products) batch.candidate_items.push_back(t);
    // plant one accidental hit: the first negative duplicates target 0
    for (int i = 0; i < num_negatives; ++i)
      batch.candidate_items.push_back(i == 0 && batch_size > 0 ? batch.target_products[0]
                                                               : batch.negative_products[
                                                                     static_cast<std::size_t>(i)]);
  }
  if (logq_correction) {
    for (int i = 0; i < batch_size; ++i) batch.log_q.push_back(std::log(1.0 / (1.0 + i % 3)));
    for (int i = 0; i < num_negatives; ++i)
      batch.log_q.push_back(-std::log(static_cast<double>(num_items)));
  }
  return inst;
}

void append_training_log(const std::string& path, const LossReport& report) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write " + path);
  json obj = {{"epoch", report.epoch},
              {"main_loss", report.main_loss},
              {"reconstruction_loss", report.reconstruction_loss},
              {"total", report.total},
              {"grad_norm", report.grad_norm},
              {"wall_time_s", report.wall_time_s}};
  out << obj.dump() << "\n";
}

}  // namespace twotower
