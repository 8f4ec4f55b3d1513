#include "gcib/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "gcib/training.hpp"

namespace gcib {

int rank_of_held_out(const std::vector<int>& candidates, const std::vector<double>& scores,
                     int held_out) {
  if (candidates.size() != scores.size())
    throw std::invalid_argument("rank_of_held_out: candidate/score size mismatch");
  int held_pos = -1;
  for (size_t j = 0; j < candidates.size(); ++j)
    if (candidates[j] == held_out) {
      held_pos = static_cast<int>(j);
      break;
    }
  if (held_pos < 0) throw std::runtime_error("rank_of_held_out: held-out item not a candidate");
  const double held_score = scores[held_pos];
  int rank = 1;
  for (size_t j = 0; j < candidates.size(); ++j) {
    if (static_cast<int>(j) == held_pos) continue;
    if (scores[j] > held_score || (scores[j] == held_score && candidates[j] < held_out)) ++rank;
  }
  return rank;
}

double hr_at_k(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) throw std::runtime_error("hr_at_k: no evaluated users");
  if (k < 1) throw std::invalid_argument("hr_at_k: k must be >= 1");
  int hits = 0;
  for (int r : ranks)
    if (r <= k) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg_at_k(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) throw std::runtime_error("ndcg_at_k: no evaluated users");
  if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  double sum = 0.0;
  for (int r : ranks)
    if (r <= k) sum += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return sum / static_cast<double>(ranks.size());
}

Mat fused_embeddings(const ModelState& state, const GraphSet& graphs, int target_behavior,
                     const std::vector<int>& aux_behaviors, const Hyperparams& hp, Ablation ab) {
  Tape tape;
  const StateLeaves sl = make_leaves(tape, state);
  const Forward fwd =
      build_forward(tape, sl, graphs, target_behavior, aux_behaviors, hp, ab, nullptr);
  return tape.val(fwd.fused);
}

namespace {

std::vector<std::vector<int>> target_adjacency(const Dataset& ds) {
  std::vector<std::vector<int>> adj(ds.num_users);
  for (const auto& [u, i] : ds.edges[ds.target]) adj[u].push_back(i);
  return adj;
}

}  // namespace

RankingResult evaluate_held_out(const Mat& fused, const Dataset& ds,
                                const std::vector<Edge>& held, const EvalOptions& opts) {
  const int m = ds.num_users, n = ds.num_items;
  const auto adj = target_adjacency(ds);
  Rng sample_rng(opts.sample_seed);

  RankingResult result;
  result.ranks.reserve(held.size());
  std::vector<int> candidates;
  std::vector<double> scores;
  for (const auto& [u, held_item] : held) {
    const auto& trained = adj[u];
    candidates.clear();
    if (opts.sampled_negatives > 0) {
      const int want = std::min(opts.sampled_negatives, n - 1);
      candidates.push_back(held_item);
      int attempts = 0;
      while (static_cast<int>(candidates.size()) < want + 1 && attempts < 100000) {
        ++attempts;
        const int c = sample_rng.index(n);
        if (c == held_item) continue;
        if (std::binary_search(trained.begin(), trained.end(), c)) continue;
        if (std::find(candidates.begin(), candidates.end(), c) != candidates.end()) continue;
        candidates.push_back(c);
      }
      std::sort(candidates.begin(), candidates.end());
    } else {
      for (int i = 0; i < n; ++i)
        if (i == held_item || !std::binary_search(trained.begin(), trained.end(), i))
          candidates.push_back(i);
    }
    scores.resize(candidates.size());
    const double* urow = fused.row(u);
    for (size_t j = 0; j < candidates.size(); ++j) {
      const double* irow = fused.row(m + candidates[j]);
      double s = 0.0;
      for (int d = 0; d < fused.cols; ++d) s += urow[d] * irow[d];
      scores[j] = s;
    }
    result.ranks.push_back(rank_of_held_out(candidates, scores, held_item));
  }
  result.evaluated_users = static_cast<int>(result.ranks.size());
  for (int k : opts.cutoffs) {
    result.hr[k] = hr_at_k(result.ranks, k);
    result.ndcg[k] = ndcg_at_k(result.ranks, k);
  }
  return result;
}

RankingResult evaluate_model(const ModelState& state, const Dataset& ds, const GraphSet& graphs,
                             const Hyperparams& hp, Ablation ab, const EvalOptions& opts) {
  std::vector<Edge> held;
  for (int u = 0; u < ds.num_users; ++u)
    if (ds.test_item[u] >= 0) held.emplace_back(u, ds.test_item[u]);
  if (held.empty()) throw std::runtime_error("evaluate_model: no test users");
  const Mat fused = fused_embeddings(state, graphs, ds.target, ds.auxiliary_behaviors(), hp, ab);
  return evaluate_held_out(fused, ds, held, opts);
}

std::vector<RetentionRow> retention_report(const ModelState& state, const Dataset& ds,
                                           const GraphSet& graphs, const Hyperparams& hp,
                                           Ablation ab, double theta) {
  Tape tape;
  const StateLeaves sl = make_leaves(tape, state);
  const auto aux = ds.auxiliary_behaviors();
  const Forward fwd = build_forward(tape, sl, graphs, ds.target, aux, hp, ab, nullptr);

  std::vector<RetentionRow> rows;
  for (const AuxForward& af : fwd.aux) {
    const Mat& gates = tape.val(af.gates);
    const auto& edges = graphs.behavior[af.behavior].edges;
    RetentionRow row;
    row.behavior = ds.behavior_names[af.behavior];
    int retained = 0;
    double sum = 0.0;
    for (int e = 0; e < gates.rows; ++e) {
      sum += gates(e, 0);
      if (gates(e, 0) >= theta) ++retained;
    }
    row.mean_gate = gates.rows > 0 ? sum / gates.rows : 0.0;
    row.hard_retention = gates.rows > 0 ? static_cast<double>(retained) / gates.rows : 0.0;

    if (ds.has_noise_labels) {
      const auto& noise = ds.noise_edges[af.behavior];
      int retained_relevant = 0, relevant = 0;
      for (int e = 0; e < gates.rows; ++e) {
        const bool is_noise = std::binary_search(noise.begin(), noise.end(), edges[e]);
        if (!is_noise) {
          ++relevant;
          if (gates(e, 0) >= theta) ++retained_relevant;
        }
      }
      row.precision = retained > 0 ? static_cast<double>(retained_relevant) / retained : 1.0;
      row.recall = relevant > 0 ? static_cast<double>(retained_relevant) / relevant : 1.0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string retention_csv(const std::vector<RetentionRow>& rows) {
  std::ostringstream ss;
  ss << "behavior,mean_gate,hard_retention,precision,recall\n";
  char buf[64];
  const auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return std::string(buf);
  };
  for (const RetentionRow& r : rows) {
    ss << r.behavior << ',' << num(r.mean_gate) << ',' << num(r.hard_retention) << ','
       << (r.precision ? num(*r.precision) : "") << ',' << (r.recall ? num(*r.recall) : "")
       << '\n';
  }
  return ss.str();
}

double relative_change(double clean, double noisy) {
  return (noisy - clean) / clean;
}

std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.2f%%", 100.0 * fraction);
  return std::string(buf);
}

namespace {

// With early stopping configured, each run is scored through its
// best-validation checkpoint; otherwise through the final state.
MetricCell eval_cell(const TrainResult& tr, const Dataset& ds, const TrainConfig& cfg,
                     Ablation ab) {
  const GraphSet graphs = build_graphs(ds);
  EvalOptions opts;
  opts.cutoffs = {10, 20};
  const ModelState& state =
      cfg.early_stop_patience > 0 ? tr.best_state : tr.final_state;
  const RankingResult r = evaluate_model(state, ds, graphs, cfg.hp, ab, opts);
  MetricCell cell;
  cell.hr = r.hr;
  cell.ndcg = r.ndcg;
  return cell;
}

void accumulate(MetricCell& into, const MetricCell& add, double weight) {
  for (const auto& [k, v] : add.hr) into.hr[k] += weight * v;
  for (const auto& [k, v] : add.ndcg) into.ndcg[k] += weight * v;
}

}  // namespace

RobustnessReport robustness_compare(const Dataset& ds, const TrainConfig& cfg, int noise_behavior,
                                    double ratio, const std::vector<uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("robustness_compare: no seeds");
  RobustnessReport report;
  const double w = 1.0 / static_cast<double>(seeds.size());
  for (uint64_t seed : seeds) {
    TrainConfig run_cfg = cfg;
    run_cfg.hp.seed = seed;
    run_cfg.checkpoint_dir.clear();
    const Dataset noisy = inject_noise(ds, noise_behavior, ratio, seed);

    run_cfg.ablation = Ablation::none;
    accumulate(report.gcib_clean, eval_cell(train(ds, run_cfg), ds, run_cfg, Ablation::none), w);
    accumulate(report.gcib_noisy, eval_cell(train(noisy, run_cfg), noisy, run_cfg, Ablation::none),
               w);

    run_cfg.ablation = Ablation::no_ib;
    accumulate(report.noib_clean, eval_cell(train(ds, run_cfg), ds, run_cfg, Ablation::no_ib), w);
    accumulate(report.noib_noisy,
               eval_cell(train(noisy, run_cfg), noisy, run_cfg, Ablation::no_ib), w);
  }
  return report;
}

std::string robustness_csv(const RobustnessReport& r) {
  std::ostringstream ss;
  ss << "variant,setting,hr@10,ndcg@10,hr@20,ndcg@20\n";
  char buf[64];
  const auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return std::string(buf);
  };
  const auto emit = [&](const std::string& variant, const MetricCell& clean,
                        const MetricCell& noisy) {
    ss << variant << ",clean," << num(clean.hr.at(10)) << ',' << num(clean.ndcg.at(10)) << ','
       << num(clean.hr.at(20)) << ',' << num(clean.ndcg.at(20)) << '\n';
    ss << variant << ",+noise," << num(noisy.hr.at(10)) << ',' << num(noisy.ndcg.at(10)) << ','
       << num(noisy.hr.at(20)) << ',' << num(noisy.ndcg.at(20)) << '\n';
    ss << variant << ",rel_change," << format_percent(relative_change(clean.hr.at(10), noisy.hr.at(10)))
       << ',' << format_percent(relative_change(clean.ndcg.at(10), noisy.ndcg.at(10))) << ','
       << format_percent(relative_change(clean.hr.at(20), noisy.hr.at(20))) << ','
       << format_percent(relative_change(clean.ndcg.at(20), noisy.ndcg.at(20))) << '\n';
  };
  emit("gcib", r.gcib_clean, r.gcib_noisy);
  emit("no_ib", r.noib_clean, r.noib_noisy);
  return ss.str();
}

std::string embeddings_csv(const ModelState& state, const Dataset& ds, const GraphSet& graphs,
                           const Hyperparams& hp, Ablation ab) {
  Tape tape;
  const StateLeaves sl = make_leaves(tape, state);
  const Forward fwd =
      build_forward(tape, sl, graphs, ds.target, ds.auxiliary_behaviors(), hp, ab, nullptr);
  const Mat& zt = tape.val(fwd.z_tgt);
  const Mat& za = tape.val(fwd.z_aux);

  std::ostringstream ss;
  ss << "kind,index,domain";
  for (int d = 0; d < hp.dim; ++d) ss << ",e" << d;
  ss << '\n';
  char buf[64];
  const auto emit_row = [&](const char* kind, int index, const char* domain, const double* row) {
    ss << kind << ',' << index << ',' << domain;
    for (int d = 0; d < hp.dim; ++d) {
      std::snprintf(buf, sizeof buf, "%.10g", row[d]);
      ss << ',' << buf;
    }
    ss << '\n';
  };
  for (int u = 0; u < ds.num_users; ++u) {
    emit_row("user", u, "target", zt.row(u));
    emit_row("user", u, "auxiliary", za.row(u));
  }
  for (int i = 0; i < ds.num_items; ++i) {
    emit_row("item", i, "target", zt.row(ds.num_users + i));
    emit_row("item", i, "auxiliary", za.row(ds.num_users + i));
  }
  return ss.str();
}

}  // namespace gcib
