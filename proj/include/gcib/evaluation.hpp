#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gcib/dataset.hpp"
#include "gcib/model.hpp"

namespace gcib {

struct RankingResult {
  std::vector<int> ranks;  // 1-based rank of the held-out item per evaluated user
  std::map<int, double> hr;
  std::map<int, double> ndcg;
  int evaluated_users = 0;
};

// 1-based position of held_out in descending score order over candidates,
// ties broken by ascending item index. scores[j] belongs to candidates[j].
int rank_of_held_out(const std::vector<int>& candidates, const std::vector<double>& scores,
                     int held_out);

double hr_at_k(const std::vector<int>& ranks, int k);
double ndcg_at_k(const std::vector<int>& ranks, int k);

struct EvalOptions {
  std::vector<int> cutoffs = {10, 20};
  // 0 = rank against every non-training item; n > 0 = rank against n sampled
  // negatives plus the held-out item.
  int sampled_negatives = 0;
  uint64_t sample_seed = 0;
};

Mat fused_embeddings(const ModelState& state, const GraphSet& graphs, int target_behavior,
                     const std::vector<int>& aux_behaviors, const Hyperparams& hp, Ablation ab);

// Ranks each (user, held-out item) pair among the user's candidate items:
// every item outside the user's training target interactions, or a sampled
// subset of them. `ds` supplies the training interactions for exclusion.
RankingResult evaluate_held_out(const Mat& fused, const Dataset& ds,
                                const std::vector<Edge>& held, const EvalOptions& opts);

RankingResult evaluate_model(const ModelState& state, const Dataset& ds, const GraphSet& graphs,
                             const Hyperparams& hp, Ablation ab, const EvalOptions& opts = {});

struct RetentionRow {
  std::string behavior;
  double mean_gate = 0.0;
  double hard_retention = 0.0;  // fraction of edges with gate >= theta
  std::optional<double> precision;  // vs planted noise labels, when present
  std::optional<double> recall;
};

std::vector<RetentionRow> retention_report(const ModelState& state, const Dataset& ds,
                                           const GraphSet& graphs, const Hyperparams& hp,
                                           Ablation ab, double theta = 0.5);

std::string retention_csv(const std::vector<RetentionRow>& rows);

struct TrainConfig;  // training.hpp

struct MetricCell {
  std::map<int, double> hr;
  std::map<int, double> ndcg;
};

struct RobustnessReport {
  // variant -> {clean, noisy} metrics at cutoffs {10, 20}, averaged over seeds
  MetricCell gcib_clean, gcib_noisy;
  MetricCell noib_clean, noib_noisy;
};

// Trains the full model and the bottleneck-free ablation on the dataset as
// given and on a copy with `ratio` random edges injected into
// `noise_behavior`, under each seed; metrics are averaged over seeds.
RobustnessReport robustness_compare(const Dataset& ds, const TrainConfig& cfg, int noise_behavior,
                                    double ratio, const std::vector<uint64_t>& seeds);

double relative_change(double clean, double noisy);
std::string format_percent(double fraction);  // "+3.91%" / "-3.62%"
std::string robustness_csv(const RobustnessReport& r);

std::string embeddings_csv(const ModelState& state, const Dataset& ds, const GraphSet& graphs,
                           const Hyperparams& hp, Ablation ab);

}  // namespace gcib
