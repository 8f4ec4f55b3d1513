#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gcib {

// (user, item) with internal 0-based ids
using Edge = std::pair<int, int>;

struct Dataset {
  int num_users = 0;
  int num_items = 0;
  std::vector<std::string> behavior_names;
  int target = -1;
  // Per behavior, sorted by (user, item), duplicate-free. Once a split
  // exists, the target list holds the training edges only.
  std::vector<std::vector<Edge>> edges;
  // Per user: held-out target item, or -1 when the user is not evaluated.
  std::vector<int> test_item;
  std::vector<std::string> user_ids;  // raw id per internal index
  std::vector<std::string> item_ids;
  // Per behavior: edges known to be target-irrelevant (planted by the
  // synthetic generator or added by inject_noise).
  std::vector<std::vector<Edge>> noise_edges;
  bool has_noise_labels = false;
  bool has_split = false;
  int excluded_eval_users = 0;  // users with some target history but below the split threshold

  int behaviors() const { return static_cast<int>(behavior_names.size()); }
  std::vector<int> auxiliary_behaviors() const;
  int behavior_index(const std::string& name) const;  // -1 if absent
  int test_user_count() const;
};

// Reads one interaction file per behavior from `dir` (format: tab-separated
// raw user / raw item per line, '#' comments; file stem = behavior name) and
// remaps ids to a contiguous 0-based space shared across behaviors.
Dataset load_dataset(const std::string& dir, const std::string& target_name);

// Holds out one uniformly chosen target interaction per user with at least
// two of them; everything else stays as training data.
Dataset split_leave_one_out(const Dataset& ds, uint64_t seed);

struct SyntheticSpec {
  int num_users = 0;
  int num_items = 0;
  int behaviors = 0;
  int latent_dim = 8;
  double target_density = 0.0;
  std::vector<double> aux_density;  // one shared value or one per auxiliary behavior
  double noise_fraction = 0.0;
  uint64_t seed = 0;

  void validate() const;
};

SyntheticSpec load_synthetic_spec(const std::string& path);

// Planted-preference generator: user/item latent factors define pair scores;
// the target behavior takes the top-scoring pairs at its density, auxiliary
// behaviors mix pairs drawn from the high-score pool with uniform random
// noise pairs. Noise edges are recorded per behavior so retention precision
// and recall are well-defined downstream.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Adds floor(ratio * |E_behavior|) edges sampled uniformly without
// replacement from pairs unobserved in that behavior. Returns the modified
// dataset; `injected_out` (optional) receives the sorted injected edges.
Dataset inject_noise(const Dataset& ds, int behavior, double ratio, uint64_t seed,
                     std::vector<Edge>* injected_out = nullptr);

void save_prepared(const Dataset& ds, const std::string& dir);
Dataset load_prepared(const std::string& dir);

}  // namespace gcib
