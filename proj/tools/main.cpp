#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "twotower/eval.hpp"
#include "twotower/server.hpp"
#include "twotower/synthetic.hpp"

namespace tt = twotower;

namespace {

int run_generate(const std::string& out_dir, const tt::SyntheticSpec& spec, std::uint64_t seed) {
  auto data = tt::generate_synthetic(spec, seed);
  tt::save_synthetic(data, out_dir);
  std::cout << "wrote " << data.catalog.size() << " products, " << data.log.events.size()
            << " events to " << out_dir << "\n";
  return 0;
}

int run_mine(const std::string& kind, std::int64_t min_cooccurrence, const std::string& log_path,
             const std::string& catalog_dir, const std::string& out_path) {
  auto log = tt::load_interactions(log_path);
  tt::PairSet pairs;
  if (kind == "coview") {
    pairs = tt::mine_coview_pairs(log, min_cooccurrence);
  } else {
    auto catalog = tt::load_catalog(catalog_dir);
    pairs = tt::mine_copurchase_pairs(log, catalog, catalog.complementary, min_cooccurrence);
  }
  tt::save_pairs(pairs, out_path);
  std::cout << "mined " << pairs.size() << " " << kind << " pairs -> " << out_path << "\n";
  return 0;
}

int run_train(const std::string& mode, const std::string& pairs_path,
              const std::string& catalog_dir, const std::string& map_path,
              const std::string& config_path, const std::string& out_path) {
  auto catalog = tt::load_catalog(catalog_dir);
  if (!map_path.empty()) catalog.complementary = tt::load_complementary_map(map_path);
  auto pairs = tt::load_pairs(pairs_path);
  tt::TrainConfig config =
      config_path.empty() ? tt::TrainConfig{} : tt::load_train_config(config_path);

  const std::string log_path = out_path + ".train.jsonl";
  if (std::filesystem::exists(log_path)) std::filesystem::remove(log_path);
  auto on_epoch = [&](const tt::EncoderParams<float>& params, const tt::FeatureConfig& fc,
                      const tt::LossReport& report) {
    tt::save_checkpoint(out_path, params, fc);
    tt::append_training_log(log_path, report);
    std::cout << "epoch " << report.epoch << " loss " << report.total << " (main "
              << report.main_loss << ", recon " << report.reconstruction_loss << ") grad_norm "
              << report.grad_norm << " [" << report.wall_time_s << "s]\n";
  };

  try {
    if (mode == "similarity") {
      tt::train_similarity(pairs, catalog, config, on_epoch);
    } else {
      if (config.reconstruction_weight == 0.0) config.reconstruction_weight = 0.5;
      tt::train_complementary(pairs, catalog, catalog.complementary, config, on_epoch);
    }
  } catch (const tt::TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n"
              << "last good checkpoint kept at " << out_path << "\n";
    return 2;
  }
  std::cout << "checkpoint -> " << out_path << "\n";
  return 0;
}

int run_build_index(const std::string& ckpt_path, const std::string& catalog_dir,
                    const std::string& out_path, bool hierarchical, int k, std::uint64_t seed,
                    const std::string& centroid_scoring) {
  auto catalog = tt::load_catalog(catalog_dir);
  auto ckpt = tt::load_checkpoint(ckpt_path);
  auto embeddings = tt::encode_catalog(catalog, ckpt.params, ckpt.config);

  tt::AnyIndex index;
  if (hierarchical) {
    if (k <= 0) k = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(embeddings.size()))));
    tt::KMeansOptions options;
    options.seed = seed;
    auto scoring = centroid_scoring == "normalized" ? tt::CentroidScoring::Normalized
                                                    : tt::CentroidScoring::RawMean;
    index = tt::HierarchicalIndex::build(embeddings, k, options, scoring);
  } else {
    index = tt::FlatIndex::build(embeddings);
  }
  tt::save_index(index, out_path);
  std::cout << (hierarchical ? "hierarchical" : "flat") << " index over " << embeddings.size()
            << " vectors -> " << out_path << "\n";
  return 0;
}

int run_inspect_index(const std::string& path) {
  auto info = tt::inspect_index(path);
  std::cout << "kind: " << info.kind << "\n"
            << "version: " << info.version << "\n"
            << "dim: " << info.dim << "\n"
            << "vectors: " << info.num_vectors << "\n";
  if (info.kind == "hierarchical")
    std::cout << "clusters: " << info.num_clusters << "\n"
              << "centroid scoring: " << info.scoring << "\n";
  return 0;
}

int run_serve(int port, const std::string& ckpt_path, const std::string& index_path,
              const std::string& catalog_dir, const std::string& mode, int probe_n, int skip_l) {
  auto catalog = tt::load_catalog(catalog_dir);
  tt::EngineOptions options;
  options.default_probe_n = probe_n;
  options.default_skip_l = skip_l;
  tt::Engine engine(std::move(catalog), options);
  engine.load(ckpt_path, index_path);

  auto snap = engine.snapshot();
  if (mode == "complementary" && snap->params.mode != tt::EncoderMode::Complementary)
    throw tt::InvalidArgument("serve --mode complementary needs a complementary checkpoint");
  if (mode == "inspire-capable" && !std::holds_alternative<tt::HierarchicalIndex>(snap->index))
    throw tt::InvalidArgument("serve --mode inspire-capable needs a hierarchical index");

  tt::HttpService service(engine);
  std::cout << "serving on :" << port << " (mode " << mode << ", index "
            << (std::holds_alternative<tt::FlatIndex>(snap->index) ? "flat" : "hierarchical")
            << ", " << tt::index_size(snap->index) << " vectors)\n";
  service.listen("0.0.0.0", port);
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& index_path,
             const std::string& flat_index_path, const std::string& pairs_path,
             const std::string& catalog_dir, const std::string& report_path,
             const std::string& ks_csv, std::uint64_t seed, bool bench) {
  auto catalog = tt::load_catalog(catalog_dir);
  auto ckpt = tt::load_checkpoint(ckpt_path);
  auto index = tt::load_index(index_path);
  auto pairs = tt::load_pairs(pairs_path);

  std::vector<int> ks;
  for (std::size_t pos = 0; pos < ks_csv.size();) {
    std::size_t comma = ks_csv.find(',', pos);
    if (comma == std::string::npos) comma = ks_csv.size();
    ks.push_back(std::stoi(ks_csv.substr(pos, comma - pos)));
    pos = comma + 1;
  }

  tt::EvalReport report;
  report.seed = seed;
  report.checkpoint_path = ckpt_path;
  report.index_path = index_path;
  report.recall_at_k = tt::recall_at_k(ckpt.params, ckpt.config, index, catalog, pairs, ks);

  if (!flat_index_path.empty()) {
    auto flat_any = tt::load_index(flat_index_path);
    const auto* flat = std::get_if<tt::FlatIndex>(&flat_any);
    const auto* hier = std::get_if<tt::HierarchicalIndex>(&index);
    if (!flat || !hier)
      throw tt::InvalidArgument("index recall needs --flat-index flat and --index hierarchical");
    tt::Rng rng(seed);
    Eigen::MatrixXf queries(flat->dim(), 200);
    for (Eigen::Index c = 0; c < queries.cols(); ++c) {
      for (Eigen::Index r = 0; r < queries.rows(); ++r)
        queries(r, c) = static_cast<float>(rng.normal());
      queries.col(c).normalize();
    }
    for (int k : ks)
      report.index_recall_at_k[k] = tt::index_recall(*flat, *hier, queries, k, 16, 0);
  }

  if (bench) {
    tt::Engine engine(std::move(catalog));
    engine.load(ckpt_path, index_path);
    std::vector<std::string> workload;
    for (const auto& p : engine.catalog().products) workload.push_back(p.product_id);
    report.latency.push_back(tt::bench_latency(engine, workload, 10000, 10, 1));
    report.latency.push_back(tt::bench_latency(engine, workload, 10000, 10, 4));
  }

  tt::save_report(report, report_path);
  std::cout << "report -> " << report_path << "\n";
  for (const auto& [k, v] : report.recall_at_k) std::cout << "recall@" << k << " = " << v << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"content-based two tower retrieval engine"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "write a seeded synthetic dataset");
  std::string gen_out;
  std::uint64_t gen_seed = 7;
  tt::SyntheticSpec spec;
  generate->add_option("--out", gen_out, "output directory")->required();
  generate->add_option("--seed", gen_seed, "rng seed");
  generate->add_option("--products", spec.num_products);
  generate->add_option("--leaf-categories", spec.num_leaf_categories);
  generate->add_option("--depth", spec.taxonomy_depth);
  generate->add_option("--sellers", spec.num_sellers);
  generate->add_option("--groups", spec.num_groups);
  generate->add_option("--view-sessions", spec.num_view_sessions);
  generate->add_option("--views-per-session", spec.views_per_session);
  generate->add_option("--purchase-sessions", spec.num_purchase_sessions);
  generate->add_option("--micro-cluster-size", spec.micro_cluster_size);
  generate->add_option("--within-group-prob", spec.within_group_prob);
  generate->add_option("--micro-bias", spec.micro_bias);
  generate->add_option("--map-density", spec.map_density);

  // mine
  auto* mine = app.add_subcommand("mine", "mine training pairs from an interaction log");
  std::string mine_kind, mine_log, mine_catalog, mine_out;
  std::int64_t mine_min = 2;
  mine->add_option("--kind", mine_kind, "coview|copurchase")
      ->required()
      ->check(CLI::IsMember({"coview", "copurchase"}));
  mine->add_option("--min-cooccurrence", mine_min, "co-occurrence threshold");
  mine->add_option("--log", mine_log, "interaction log (jsonl)")->required();
  mine->add_option("--catalog", mine_catalog, "catalogue directory")->required();
  mine->add_option("--out", mine_out, "output pair file")->required();

  // train
  auto* train = app.add_subcommand("train", "train encoder parameters on mined pairs");
  std::string train_mode, train_pairs, train_catalog, train_map, train_config, train_out;
  train->add_option("--mode", train_mode, "similarity|complementary")
      ->required()
      ->check(CLI::IsMember({"similarity", "complementary"}));
  train->add_option("--pairs", train_pairs)->required();
  train->add_option("--catalog", train_catalog)->required();
  train->add_option("--map", train_map, "complementary map override (jsonl)");
  train->add_option("--config", train_config, "training config (json)");
  train->add_option("--out", train_out, "checkpoint path")->required();

  // build-index
  auto* build = app.add_subcommand("build-index", "encode the catalogue and build an index");
  std::string build_ckpt, build_catalog, build_out, build_scoring = "raw";
  bool build_hier = false;
  int build_k = 0;
  std::uint64_t build_seed = 0;
  build->add_option("--ckpt", build_ckpt)->required();
  build->add_option("--catalog", build_catalog)->required();
  build->add_option("--out", build_out)->required();
  build->add_flag("--hierarchical", build_hier, "two-level k-means index");
  build->add_option("--k", build_k, "cluster count (default ceil(sqrt(N)))");
  build->add_option("--seed", build_seed, "k-means seed");
  build->add_option("--centroid-scoring", build_scoring)
      ->check(CLI::IsMember({"raw", "normalized"}));

  // inspect-index
  auto* inspect = app.add_subcommand("inspect-index", "print index header fields");
  std::string inspect_path;
  inspect->add_option("index", inspect_path, "index file")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "serve recommendations over HTTP");
  std::string serve_ckpt, serve_index, serve_catalog, serve_mode = "similarity";
  int serve_port = 8080, serve_probe = 16, serve_skip = 0;
  serve->add_option("--port", serve_port);
  serve->add_option("--ckpt", serve_ckpt)->required();
  serve->add_option("--index", serve_index)->required();
  serve->add_option("--catalog", serve_catalog)->required();
  serve->add_option("--mode", serve_mode)
      ->check(CLI::IsMember({"similarity", "complementary", "inspire-capable"}));
  serve->add_option("--probe-n", serve_probe, "default cluster probes for /similar");
  serve->add_option("--skip-l", serve_skip, "default skipped clusters for /similar");

  // eval
  auto* eval = app.add_subcommand("eval", "offline evaluation report");
  std::string eval_ckpt, eval_index, eval_flat, eval_pairs, eval_catalog, eval_report;
  std::string eval_ks = "1,10,100";
  std::uint64_t eval_seed = 7;
  bool eval_bench = false;
  eval->add_option("--ckpt", eval_ckpt)->required();
  eval->add_option("--index", eval_index)->required();
  eval->add_option("--flat-index", eval_flat, "exact oracle index for index recall");
  eval->add_option("--pairs", eval_pairs, "held-out pair file")->required();
  eval->add_option("--catalog", eval_catalog)->required();
  eval->add_option("--report", eval_report, "output report (json)")->required();
  eval->add_option("--ks", eval_ks, "comma-separated k values");
  eval->add_option("--seed", eval_seed);
  eval->add_flag("--bench", eval_bench, "include latency percentiles");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return run_generate(gen_out, spec, gen_seed);
    if (*mine) return run_mine(mine_kind, mine_min, mine_log, mine_catalog, mine_out);
    if (*train)
      return run_train(train_mode, train_pairs, train_catalog, train_map, train_config, train_out);
    if (*build)
      return run_build_index(build_ckpt, build_catalog, build_out, build_hier, build_k, build_seed,
                             build_scoring);
    if (*inspect) return run_inspect_index(inspect_path);
    if (*serve)
      return run_serve(serve_port, serve_ckpt, serve_index, serve_catalog, serve_mode, serve_probe,
                       serve_skip);
    if (*eval)
      return run_eval(eval_ckpt, eval_index, eval_flat, eval_pairs, eval_catalog, eval_report,
                      eval_ks, eval_seed, eval_bench);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
