#include "gcib/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "gcib/io.hpp"
#include "gcib/rng.hpp"

namespace fs = std::filesystem;

namespace gcib {

namespace {

int64_t pair_key(int u, int i, int num_items) {
  return static_cast<int64_t>(u) * num_items + i;
}

void sort_unique(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

std::unordered_set<int64_t> edge_key_set(const std::vector<Edge>& edges, int num_items) {
  std::unordered_set<int64_t> keys;
  keys.reserve(edges.size() * 2);
  for (const auto& [u, i] : edges) keys.insert(pair_key(u, i, num_items));
  return keys;
}

}  // namespace

std::vector<int> Dataset::auxiliary_behaviors() const {
  std::vector<int> aux;
  for (int k = 0; k < behaviors(); ++k)
    if (k != target) aux.push_back(k);
  return aux;
}

int Dataset::behavior_index(const std::string& name) const {
  for (int k = 0; k < behaviors(); ++k)
    if (behavior_names[k] == name) return k;
  return -1;
}

int Dataset::test_user_count() const {
  int n = 0;
  for (int t : test_item)
    if (t >= 0) ++n;
  return n;
}

Dataset load_dataset(const std::string& dir, const std::string& target_name) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path p = entry.path();
    if (p.extension() != ".txt") continue;
    names.push_back(p.stem().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw std::runtime_error("no behavior files (*.txt) in " + dir);
  if (std::find(names.begin(), names.end(), target_name) == names.end())
    throw std::runtime_error("target behavior file not found: " + target_name + ".txt in " + dir);

  // raw records per behavior
  std::vector<std::vector<std::pair<std::string, std::string>>> raw(names.size());
  std::set<std::string> raw_users, raw_items;
  for (size_t k = 0; k < names.size(); ++k) {
    const std::string path = (fs::path(dir) / (names[k] + ".txt")).string();
    const auto lines = read_lines(path);
    for (size_t ln = 0; ln < lines.size(); ++ln) {
      std::string line = lines[ln];
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') continue;
      const auto fields = split(line, '\t');
      if (fields.size() != 2 || trim(fields[0]).empty() || trim(fields[1]).empty())
        throw std::runtime_error(path + ":" + std::to_string(ln + 1) + ": malformed line '" +
                                 line + "'");
      raw[k].emplace_back(trim(fields[0]), trim(fields[1]));
      raw_users.insert(raw[k].back().first);
      raw_items.insert(raw[k].back().second);
    }
    if (raw[k].empty()) throw std::runtime_error("behavior file has no records: " + path);
  }

  Dataset ds;
  ds.behavior_names = names;
  ds.target = static_cast<int>(std::find(names.begin(), names.end(), target_name) - names.begin());
  ds.user_ids.assign(raw_users.begin(), raw_users.end());
  ds.item_ids.assign(raw_items.begin(), raw_items.end());
  ds.num_users = static_cast<int>(ds.user_ids.size());
  ds.num_items = static_cast<int>(ds.item_ids.size());

  std::map<std::string, int> user_map, item_map;
  for (int u = 0; u < ds.num_users; ++u) user_map[ds.user_ids[u]] = u;
  for (int i = 0; i < ds.num_items; ++i) item_map[ds.item_ids[i]] = i;

  ds.edges.resize(names.size());
  ds.noise_edges.resize(names.size());
  for (size_t k = 0; k < names.size(); ++k) {
    auto& out = ds.edges[k];
    out.reserve(raw[k].size());
    for (const auto& [ru, ri] : raw[k]) out.emplace_back(user_map[ru], item_map[ri]);
    sort_unique(out);
  }
  ds.test_item.assign(ds.num_users, -1);
  return ds;
}

Dataset split_leave_one_out(const Dataset& ds, uint64_t seed) {
  if (ds.target < 0) throw std::runtime_error("dataset has no target behavior");
  if (ds.has_split) throw std::runtime_error("dataset is already split");

  Dataset out = ds;
  Rng rng(seed);

  std::vector<std::vector<int>> per_user(ds.num_users);
  for (const auto& [u, i] : ds.edges[ds.target]) per_user[u].push_back(i);

  out.excluded_eval_users = 0;
  std::vector<Edge> train;
  train.reserve(ds.edges[ds.target].size());
  for (int u = 0; u < ds.num_users; ++u) {
    const auto& items = per_user[u];  // ascending, edges were sorted
    if (items.size() >= 2) {
      const int held = items[rng.index(static_cast<int>(items.size()))];
      out.test_item[u] = held;
      for (int i : items)
        if (i != held) train.emplace_back(u, i);
    } else {
      if (items.size() == 1) ++out.excluded_eval_users;
      for (int i : items) train.emplace_back(u, i);
    }
  }
  std::sort(train.begin(), train.end());
  out.edges[ds.target] = std::move(train);
  out.has_split = true;
  return out;
}

void SyntheticSpec::validate() const {
  if (num_users < 1 || num_items < 1) throw std::runtime_error("synthetic: users/items must be >= 1");
  if (behaviors < 2) throw std::runtime_error("synthetic: need a target and at least one auxiliary behavior");
  if (latent_dim < 1) throw std::runtime_error("synthetic: latent_dim must be >= 1");
  if (!(target_density > 0.0 && target_density <= 1.0))
    throw std::runtime_error("synthetic: target_density must be in (0,1]");
  if (aux_density.empty()) throw std::runtime_error("synthetic: aux_density missing");
  if (aux_density.size() != 1 && aux_density.size() != static_cast<size_t>(behaviors - 1))
    throw std::runtime_error("synthetic: aux_density must have 1 or behaviors-1 entries");
  for (double d : aux_density)
    if (!(d > 0.0 && d <= 1.0)) throw std::runtime_error("synthetic: aux densities must be in (0,1]");
  if (!(noise_fraction >= 0.0 && noise_fraction < 1.0))
    throw std::runtime_error("synthetic: noise_fraction must be in [0,1)");
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  const auto kv = parse_kv_file(path);
  SyntheticSpec spec;
  for (const auto& [key, value] : kv) {
    if (key == "users") spec.num_users = static_cast<int>(parse_int(value, key));
    else if (key == "items") spec.num_items = static_cast<int>(parse_int(value, key));
    else if (key == "behaviors") spec.behaviors = static_cast<int>(parse_int(value, key));
    else if (key == "latent_dim") spec.latent_dim = static_cast<int>(parse_int(value, key));
    else if (key == "target_density") spec.target_density = parse_double(value, key);
    else if (key == "aux_density") {
      for (const auto& part : split(value, ','))
        spec.aux_density.push_back(parse_double(trim(part), key));
    } else if (key == "noise_fraction") spec.noise_fraction = parse_double(value, key);
    else if (key == "seed") spec.seed = parse_u64(value, key);
    else throw std::runtime_error(path + ": unknown key '" + key + "'");
  }
  spec.validate();
  return spec;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int m = spec.num_users, n = spec.num_items;
  const int64_t total_pairs = static_cast<int64_t>(m) * n;
  Rng rng(spec.seed);

  // planted preference model
  std::vector<double> ulat(static_cast<size_t>(m) * spec.latent_dim);
  std::vector<double> vlat(static_cast<size_t>(n) * spec.latent_dim);
  for (auto& x : ulat) x = rng.normal();
  for (auto& x : vlat) x = rng.normal();

  std::vector<double> score(static_cast<size_t>(total_pairs));
  for (int u = 0; u < m; ++u) {
    const double* urow = &ulat[static_cast<size_t>(u) * spec.latent_dim];
    for (int i = 0; i < n; ++i) {
      const double* irow = &vlat[static_cast<size_t>(i) * spec.latent_dim];
      double s = 0.0;
      for (int d = 0; d < spec.latent_dim; ++d) s += urow[d] * irow[d];
      score[static_cast<size_t>(u) * n + i] = s;
    }
  }
  std::vector<int64_t> order(static_cast<size_t>(total_pairs));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });

  const auto count_for = [&](double density) -> int64_t {
    const int64_t c = llround(density * static_cast<double>(total_pairs));
    if (c < 1 || c > total_pairs)
      throw std::runtime_error("synthetic: density infeasible for " + std::to_string(m) + "x" +
                               std::to_string(n));
    return c;
  };

  Dataset ds;
  ds.num_users = m;
  ds.num_items = n;
  ds.behavior_names.push_back("target");
  for (int k = 1; k < spec.behaviors; ++k) ds.behavior_names.push_back("aux" + std::to_string(k));
  // keep behavior order deterministic and name-sorted, like directory loading
  std::sort(ds.behavior_names.begin(), ds.behavior_names.end());
  ds.target = ds.behavior_index("target");
  ds.edges.resize(spec.behaviors);
  ds.noise_edges.resize(spec.behaviors);
  ds.test_item.assign(m, -1);
  ds.user_ids.resize(m);
  ds.item_ids.resize(n);
  for (int u = 0; u < m; ++u) ds.user_ids[u] = "u" + std::to_string(u);
  for (int i = 0; i < n; ++i) ds.item_ids[i] = "i" + std::to_string(i);
  ds.has_noise_labels = true;

  // target: top-scoring pairs
  const int64_t target_count = count_for(spec.target_density);
  auto& tgt = ds.edges[ds.target];
  tgt.reserve(static_cast<size_t>(target_count));
  for (int64_t r = 0; r < target_count; ++r) {
    const int64_t key = order[static_cast<size_t>(r)];
    tgt.emplace_back(static_cast<int>(key / n), static_cast<int>(key % n));
  }
  sort_unique(tgt);

  // auxiliary behaviors: relevant edges sampled from a high-score pool, plus
  // uniform noise over pairs unused by that behavior
  int aux_index = 0;
  for (int k = 0; k < spec.behaviors; ++k) {
    if (k == ds.target) continue;
    const double density =
        spec.aux_density.size() == 1 ? spec.aux_density[0] : spec.aux_density[aux_index];
    ++aux_index;
    const int64_t total_k = count_for(density);
    const int64_t relevant_k = llround(static_cast<double>(total_k) * (1.0 - spec.noise_fraction));
    const int64_t noise_k = total_k - relevant_k;

    std::unordered_set<int64_t> chosen;
    chosen.reserve(static_cast<size_t>(total_k) * 2);
    auto& out = ds.edges[k];
    out.reserve(static_cast<size_t>(total_k));

    // pool of the top 5/4 * relevant_k pairs keeps behaviors correlated with
    // the target without being identical copies of each other
    const int64_t pool = std::min<int64_t>(total_pairs, relevant_k + (relevant_k + 3) / 4);
    std::vector<int64_t> pool_keys(order.begin(), order.begin() + pool);
    rng.shuffle(pool_keys);
    for (int64_t r = 0; r < relevant_k; ++r) {
      const int64_t key = pool_keys[static_cast<size_t>(r)];
      chosen.insert(key);
      out.emplace_back(static_cast<int>(key / n), static_cast<int>(key % n));
    }

    if (noise_k > total_pairs - relevant_k)
      throw std::runtime_error("synthetic: density infeasible (no room for noise edges)");
    auto& noise = ds.noise_edges[k];
    int64_t attempts = 0;
    const int64_t max_attempts = 1000 * std::max<int64_t>(noise_k, 1) + 1000;
    while (static_cast<int64_t>(noise.size()) < noise_k) {
      if (++attempts > max_attempts)
        throw std::runtime_error("synthetic: could not place noise edges (density too high)");
      const int u = rng.index(m);
      const int i = rng.index(n);
      const int64_t key = pair_key(u, i, n);
      if (chosen.count(key)) continue;
      chosen.insert(key);
      noise.emplace_back(u, i);
      out.emplace_back(u, i);
    }
    sort_unique(out);
    std::sort(noise.begin(), noise.end());
  }
  return ds;
}

Dataset inject_noise(const Dataset& ds, int behavior, double ratio, uint64_t seed,
                     std::vector<Edge>* injected_out) {
  if (behavior < 0 || behavior >= ds.behaviors()) throw std::runtime_error("inject_noise: bad behavior index");
  if (behavior == ds.target) throw std::runtime_error("inject_noise: cannot inject into the target behavior");
  if (!(ratio > 0.0)) throw std::runtime_error("inject_noise: ratio must be > 0");

  const int64_t existing = static_cast<int64_t>(ds.edges[behavior].size());
  const int64_t count = static_cast<int64_t>(std::floor(ratio * static_cast<double>(existing)));
  const int64_t total_pairs = static_cast<int64_t>(ds.num_users) * ds.num_items;
  if (total_pairs - existing < count)
    throw std::runtime_error("inject_noise: insufficient unobserved pairs");

  Dataset out = ds;
  Rng rng(seed);
  auto keys = edge_key_set(ds.edges[behavior], ds.num_items);
  std::vector<Edge> injected;
  injected.reserve(static_cast<size_t>(count));
  int64_t attempts = 0;
  const int64_t max_attempts = 1000 * std::max<int64_t>(count, 1) + 1000;
  while (static_cast<int64_t>(injected.size()) < count) {
    if (++attempts > max_attempts)
      throw std::runtime_error("inject_noise: could not find enough unobserved pairs");
    const int u = rng.index(ds.num_users);
    const int i = rng.index(ds.num_items);
    const int64_t key = pair_key(u, i, ds.num_items);
    if (keys.count(key)) continue;
    keys.insert(key);
    injected.emplace_back(u, i);
  }
  std::sort(injected.begin(), injected.end());

  auto& edges = out.edges[behavior];
  edges.insert(edges.end(), injected.begin(), injected.end());
  sort_unique(edges);
  auto& noise = out.noise_edges[behavior];
  noise.insert(noise.end(), injected.begin(), injected.end());
  sort_unique(noise);
  out.has_noise_labels = true;
  if (injected_out) *injected_out = injected;
  return out;
}

namespace {

std::string edges_text(const std::vector<Edge>& edges) {
  std::ostringstream ss;
  for (const auto& [u, i] : edges) ss << u << '\t' << i << '\n';
  return ss.str();
}

std::vector<Edge> parse_edges(const std::string& path, int num_users, int num_items) {
  std::vector<Edge> edges;
  const auto lines = read_lines(path);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    std::string line = trim(lines[ln]);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2)
      throw std::runtime_error(path + ":" + std::to_string(ln + 1) + ": malformed line");
    const int u = static_cast<int>(parse_int(fields[0], "user"));
    const int i = static_cast<int>(parse_int(fields[1], "item"));
    if (u < 0 || u >= num_users || i < 0 || i >= num_items)
      throw std::runtime_error(path + ":" + std::to_string(ln + 1) + ": id out of range");
    edges.emplace_back(u, i);
  }
  return edges;
}

}  // namespace

void save_prepared(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream meta;
  meta << "users=" << ds.num_users << '\n'
       << "items=" << ds.num_items << '\n'
       << "target=" << ds.behavior_names[ds.target] << '\n'
       << "behaviors=";
  for (int k = 0; k < ds.behaviors(); ++k) meta << (k ? "," : "") << ds.behavior_names[k];
  meta << '\n'
       << "has_split=" << (ds.has_split ? 1 : 0) << '\n'
       << "has_noise_labels=" << (ds.has_noise_labels ? 1 : 0) << '\n'
       << "excluded_eval_users=" << ds.excluded_eval_users << '\n';
  atomic_write_file((fs::path(dir) / "meta.txt").string(), meta.str());

  for (int k = 0; k < ds.behaviors(); ++k) {
    atomic_write_file((fs::path(dir) / ("train_" + ds.behavior_names[k] + ".txt")).string(),
                      edges_text(ds.edges[k]));
    if (!ds.noise_edges[k].empty())
      atomic_write_file((fs::path(dir) / ("noise_" + ds.behavior_names[k] + ".txt")).string(),
                        edges_text(ds.noise_edges[k]));
  }
  if (ds.has_split) {
    std::vector<Edge> test;
    for (int u = 0; u < ds.num_users; ++u)
      if (ds.test_item[u] >= 0) test.emplace_back(u, ds.test_item[u]);
    atomic_write_file((fs::path(dir) / "test.txt").string(), edges_text(test));
  }
  std::ostringstream us, is;
  for (const auto& s : ds.user_ids) us << s << '\n';
  for (const auto& s : ds.item_ids) is << s << '\n';
  atomic_write_file((fs::path(dir) / "users.txt").string(), us.str());
  atomic_write_file((fs::path(dir) / "items.txt").string(), is.str());
}

Dataset load_prepared(const std::string& dir) {
  const auto kv = parse_kv_file((fs::path(dir) / "meta.txt").string());
  Dataset ds;
  ds.num_users = static_cast<int>(parse_int(kv.at("users"), "users"));
  ds.num_items = static_cast<int>(parse_int(kv.at("items"), "items"));
  for (const auto& name : split(kv.at("behaviors"), ',')) ds.behavior_names.push_back(trim(name));
  ds.target = ds.behavior_index(trim(kv.at("target")));
  if (ds.target < 0) throw std::runtime_error(dir + ": meta target not among behaviors");
  ds.has_split = kv.count("has_split") && kv.at("has_split") == "1";
  ds.has_noise_labels = kv.count("has_noise_labels") && kv.at("has_noise_labels") == "1";
  if (kv.count("excluded_eval_users"))
    ds.excluded_eval_users =
        static_cast<int>(parse_int(kv.at("excluded_eval_users"), "excluded_eval_users"));

  ds.edges.resize(ds.behaviors());
  ds.noise_edges.resize(ds.behaviors());
  for (int k = 0; k < ds.behaviors(); ++k) {
    const auto train_path = (fs::path(dir) / ("train_" + ds.behavior_names[k] + ".txt")).string();
    ds.edges[k] = parse_edges(train_path, ds.num_users, ds.num_items);
    sort_unique(ds.edges[k]);
    const auto noise_path = (fs::path(dir) / ("noise_" + ds.behavior_names[k] + ".txt")).string();
    if (fs::exists(noise_path)) {
      ds.noise_edges[k] = parse_edges(noise_path, ds.num_users, ds.num_items);
      std::sort(ds.noise_edges[k].begin(), ds.noise_edges[k].end());
    }
  }

  ds.test_item.assign(ds.num_users, -1);
  if (ds.has_split) {
    const auto test_path = (fs::path(dir) / "test.txt").string();
    for (const auto& [u, i] : parse_edges(test_path, ds.num_users, ds.num_items))
      ds.test_item[u] = i;
  }

  const auto users_path = (fs::path(dir) / "users.txt").string();
  const auto items_path = (fs::path(dir) / "items.txt").string();
  if (fs::exists(users_path)) ds.user_ids = read_lines(users_path);
  if (fs::exists(items_path)) ds.item_ids = read_lines(items_path);
  if (ds.user_ids.empty()) {
    ds.user_ids.resize(ds.num_users);
    for (int u = 0; u < ds.num_users; ++u) ds.user_ids[u] = std::to_string(u);
  }
  if (ds.item_ids.empty()) {
    ds.item_ids.resize(ds.num_items);
    for (int i = 0; i < ds.num_items; ++i) ds.item_ids[i] = std::to_string(i);
  }
  return ds;
}

}  // namespace gcib
