#include "twotower/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace twotower {

using nlohmann::json;

void SyntheticSpec::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw InvalidArgument(std::string("synthetic spec: ") + name + " must be positive");
  };
  positive(num_products, "num_products");
  positive(num_leaf_categories, "num_leaf_categories");
  positive(taxonomy_depth, "taxonomy_depth");
  positive(num_sellers, "num_sellers");
  positive(num_groups, "num_groups");
  positive(num_view_sessions, "num_view_sessions");
  positive(views_per_session, "views_per_session");
  positive(micro_cluster_size, "micro_cluster_size");
  if (num_purchase_sessions < 0)
    throw InvalidArgument("synthetic spec: num_purchase_sessions must be non-negative");
  if (within_group_prob < 0.0 || within_group_prob > 1.0 || micro_bias < 0.0 || micro_bias > 1.0 ||
      map_density < 0.0 || map_density > 1.0)
    throw InvalidArgument("synthetic spec: probabilities must be in [0, 1]");
  if (num_groups > num_products)
    throw InvalidArgument("synthetic spec: more groups than products");
}

namespace {

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SyntheticData data;

  // Taxonomy: leaf level of num_leaf_categories nodes; each level above is a
  // three-fold coarsening down to a single root.
  const int depth = spec.taxonomy_depth;
  std::vector<int> level_sizes(static_cast<std::size_t>(depth));
  level_sizes[static_cast<std::size_t>(depth) - 1] = spec.num_leaf_categories;
  for (int l = depth - 2; l >= 0; --l)
    level_sizes[static_cast<std::size_t>(l)] =
        std::max(1, level_sizes[static_cast<std::size_t>(l) + 1] / 3);
  if (depth > 1) level_sizes[0] = 1;

  auto node_name = [&](int level, int i) {
    if (level == depth - 1) return "leaf_" + zero_pad(i, 4);
    return "cat" + std::to_string(level) + "_" + zero_pad(i, 4);
  };
  for (int l = 0; l < depth; ++l) {
    for (int i = 0; i < level_sizes[static_cast<std::size_t>(l)]; ++i) {
      std::string parent =
          l == 0 ? std::string() : node_name(l - 1, i % level_sizes[static_cast<std::size_t>(l) - 1]);
      data.catalog.taxonomy.add_node(node_name(l, i), parent);
    }
  }

  auto path_of_leaf = [&](int leaf) {
    std::vector<std::string> path;
    int idx = leaf;
    for (int l = depth - 1; l >= 0; --l) {
      path.push_back(node_name(l, idx));
      idx %= level_sizes[static_cast<std::size_t>(std::max(l - 1, 0))];
    }
    std::reverse(path.begin(), path.end());
    return path;
  };

  // Complementary map over the first map_density share of leaves.
  const int L = spec.num_leaf_categories;
  int num_sources = static_cast<int>(std::lround(spec.map_density * L));
  for (int i = 0; i < num_sources; ++i) {
    std::vector<std::string> targets;
    int t1 = (i + 1) % L;
    if (t1 != i) targets.push_back(node_name(depth - 1, t1));
    if (i % 2 == 0 && L > 2) {
      int t2 = (i + L / 2) % L;
      if (t2 != i && t2 != t1) targets.push_back(node_name(depth - 1, t2));
    }
    if (!targets.empty())
      data.catalog.complementary.entries.emplace(node_name(depth - 1, i), std::move(targets));
  }

  // Products. Micro-neighbourhood m lives in group m % G and leaf m % L.
  const int n = spec.num_products;
  const int num_micros = (n + spec.micro_cluster_size - 1) / spec.micro_cluster_size;
  data.group_of.resize(static_cast<std::size_t>(n));
  data.micro_of.resize(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> members_of_micro(static_cast<std::size_t>(num_micros));
  std::vector<std::vector<int>> members_of_group(static_cast<std::size_t>(spec.num_groups));
  std::vector<std::vector<int>> members_of_leaf(static_cast<std::size_t>(L));

  const int id_width = static_cast<int>(std::to_string(n - 1).size());
  for (int i = 0; i < n; ++i) {
    int micro = i % num_micros;
    int group = micro % spec.num_groups;
    int leaf = micro % L;
    data.micro_of[static_cast<std::size_t>(i)] = micro;
    data.group_of[static_cast<std::size_t>(i)] = group;
    members_of_micro[static_cast<std::size_t>(micro)].push_back(i);
    members_of_group[static_cast<std::size_t>(group)].push_back(i);
    members_of_leaf[static_cast<std::size_t>(leaf)].push_back(i);

    Product p;
    p.product_id = "p" + zero_pad(i, id_width);
    std::string title = "g" + std::to_string(group) + "sig0 g" + std::to_string(group) + "sig1";
    for (int t = 0; t < 3; ++t) title += " m" + std::to_string(micro) + "tok" + std::to_string(t);
    for (int t = 0; t < 2; ++t) title += " w" + std::to_string(rng.uniform_int(500));
    p.title = std::move(title);
    double base = 10.0 * (group + 1);
    p.price = std::round(std::exp(std::log(base) + 0.3 * rng.normal()) * 100.0) / 100.0;
    p.category_path = path_of_leaf(leaf);
    int seller = rng.uniform() < 0.7 ? micro % spec.num_sellers
                                     : static_cast<int>(rng.uniform_int(spec.num_sellers));
    p.seller_id = "s" + zero_pad(seller, 4);
    data.catalog.products.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < data.catalog.products.size(); ++i)
    data.catalog.product_index.emplace(data.catalog.products[i].product_id, static_cast<int>(i));

  auto pick = [&](const std::vector<int>& pool) {
    return pool[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(pool.size())))];
  };

  // View sessions anchor on a micro-neighbourhood. A session stays inside its
  // group with probability within_group_prob; otherwise one of its views is
  // replaced by catalogue-wide noise. In-group views favour the anchor
  // neighbourhood over the rest of the group by micro_bias.
  std::int64_t ts = 1'600'000'000;
  for (int s = 0; s < spec.num_view_sessions; ++s) {
    int micro = static_cast<int>(rng.uniform_int(num_micros));
    int group = micro % spec.num_groups;
    std::string session = "vs" + std::to_string(s);
    std::string user = "u" + std::to_string(s);
    int noise_slot = rng.uniform() < spec.within_group_prob
                         ? -1
                         : static_cast<int>(rng.uniform_int(spec.views_per_session));
    for (int v = 0; v < spec.views_per_session; ++v) {
      int product;
      if (v == noise_slot) {
        product = static_cast<int>(rng.uniform_int(n));
      } else if (rng.uniform() < spec.micro_bias) {
        product = pick(members_of_micro[static_cast<std::size_t>(micro)]);
      } else {
        product = pick(members_of_group[static_cast<std::size_t>(group)]);
      }
      data.log.events.push_back({user,
                                 data.catalog.products[static_cast<std::size_t>(product)].product_id,
                                 ts++, EventKind::View, session});
    }
  }

  // Purchase sessions follow the complementary map; products are drawn with a
  // harmonic popularity skew so pairs repeat across sessions.
  std::vector<std::string> sources;
  for (const auto& [source, _] : data.catalog.complementary.entries) sources.push_back(source);
  std::sort(sources.begin(), sources.end());
  auto pick_popular = [&](const std::vector<int>& pool) {
    double u = rng.uniform();
    double total = 0.0;
    for (std::size_t r = 0; r < pool.size(); ++r) total += 1.0 / (1.0 + static_cast<double>(r));
    double acc = 0.0;
    for (std::size_t r = 0; r < pool.size(); ++r) {
      acc += 1.0 / (1.0 + static_cast<double>(r)) / total;
      if (u < acc) return pool[r];
    }
    return pool.back();
  };
  if (spec.num_purchase_sessions > 0 && sources.empty())
    throw InvalidArgument("synthetic spec: purchase sessions need a non-empty complementary map");
  for (int s = 0; s < spec.num_purchase_sessions; ++s) {
    const auto& source = sources[static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(sources.size())))];
    const auto& targets = data.catalog.complementary.entries.at(source);
    const auto& target =
        targets[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(targets.size())))];
    int src_leaf = std::stoi(source.substr(source.find('_') + 1));
    int tgt_leaf = std::stoi(target.substr(target.find('_') + 1));
    const auto& src_pool = members_of_leaf[static_cast<std::size_t>(src_leaf)];
    const auto& tgt_pool = members_of_leaf[static_cast<std::size_t>(tgt_leaf)];
    if (src_pool.empty() || tgt_pool.empty()) continue;
    int p = pick_popular(src_pool);
    int q = pick_popular(tgt_pool);
    std::string session = "ps" + std::to_string(s);
    std::string user = "pu" + std::to_string(s);
    data.log.events.push_back(
        {user, data.catalog.products[static_cast<std::size_t>(p)].product_id, ts++,
         EventKind::Purchase, session});
    data.log.events.push_back(
        {user, data.catalog.products[static_cast<std::size_t>(q)].product_id, ts++,
         EventKind::Purchase, session});
  }

  validate_catalog(data.catalog);
  data.log.validate();
  return data;
}

void save_ground_truth(const SyntheticData& data, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t i = 0; i < data.catalog.products.size(); ++i) {
    json obj = {{"product_id", data.catalog.products[i].product_id},
                {"group", data.group_of[i]},
                {"micro", data.micro_of[i]}};
    out << obj.dump() << "\n";
  }
}

std::pair<std::vector<int>, std::vector<int>> load_ground_truth(const std::string& path,
                                                                const Catalog& catalog) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<int> group(catalog.size(), -1);
  std::vector<int> micro(catalog.size(), -1);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json obj = json::parse(line);
      int idx = catalog.index_of(obj.at("product_id").get<std::string>());
      if (idx < 0) throw ValidationError("ground truth references unknown product");
      group[static_cast<std::size_t>(idx)] = obj.at("group").get<int>();
      micro[static_cast<std::size_t>(idx)] = obj.at("micro").get<int>();
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return {std::move(group), std::move(micro)};
}

void save_synthetic(const SyntheticData& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_catalog(data.catalog, dir);
  save_interactions(data.log, (fs::path(dir) / "interactions.jsonl").string());
  save_ground_truth(data, (fs::path(dir) / "groundtruth.jsonl").string());
}

}  // namespace twotower
