// Command-line entry points for the multi-behavior recommendation engine.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gcib/checkpoint.hpp"
#include "gcib/evaluation.hpp"
#include "gcib/io.hpp"
#include "gcib/training.hpp"

namespace fs = std::filesystem;
using namespace gcib;

namespace {

std::vector<int> parse_cutoffs(const std::string& spec) {
  std::vector<int> out;
  for (const auto& part : split(spec, ','))
    out.push_back(static_cast<int>(parse_int(trim(part), "k")));
  if (out.empty()) throw std::runtime_error("empty cutoff list");
  return out;
}

std::string metrics_csv(const RankingResult& r) {
  std::ostringstream ss;
  ss << "metric,K,value\n";
  char buf[64];
  for (const auto& [k, v] : r.hr) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    ss << "hr," << k << ',' << buf << '\n';
  }
  for (const auto& [k, v] : r.ndcg) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    ss << "ndcg," << k << ',' << buf << '\n';
  }
  return ss.str();
}

struct LoadedModel {
  Checkpoint ck;
  Dataset ds;
  GraphSet graphs;
};

LoadedModel load_model(const std::string& checkpoint_path, const std::string& data_dir) {
  LoadedModel lm;
  lm.ck = load_checkpoint(checkpoint_path);
  lm.ds = load_prepared(data_dir);
  if (lm.ds.num_users != lm.ck.num_users || lm.ds.num_items != lm.ck.num_items)
    throw std::runtime_error("checkpoint and dataset shapes do not match");
  if (lm.ds.behavior_names != lm.ck.behavior_names)
    throw std::runtime_error("checkpoint and dataset behaviors do not match");
  lm.graphs = build_graphs(lm.ds);
  return lm;
}

int run(int argc, char** argv) {
  CLI::App app{"gcib: multi-behavior recommendation with bottleneck edge denoising"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "remap a raw interaction directory and hold out test items");
  std::string prep_dir, prep_target, prep_out;
  uint64_t prep_seed = 42;
  prepare->add_option("dir", prep_dir, "directory of <behavior>.txt files")->required();
  prepare->add_option("--target", prep_target, "target behavior name")->required();
  prepare->add_option("--seed", prep_seed, "split seed");
  prepare->add_option("--out", prep_out, "output directory")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a planted synthetic dataset");
  std::string synth_spec, synth_out;
  synth->add_option("--spec", synth_spec, "synthetic spec file (key=value)")->required();
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string train_config, train_data, train_out = ".";
  train_cmd->add_option("--config", train_config, "config file (key=value)")->required();
  train_cmd->add_option("--data", train_data, "prepared dataset directory")->required();
  train_cmd->add_option("--out", train_out, "output directory for checkpoints and the metric log");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_k = "10,20", eval_out;
  int eval_sampled = 0;
  uint64_t eval_seed = 42;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "prepared dataset directory")->required();
  eval_cmd->add_option("--k", eval_k, "comma-separated cutoffs");
  eval_cmd->add_option("--sampled-negatives", eval_sampled,
                       "rank against n sampled negatives instead of all items");
  eval_cmd->add_option("--seed", eval_seed, "negative-sampling seed");
  eval_cmd->add_option("--out", eval_out, "metrics CSV path (default: stdout only)");

  // inject-noise
  auto* inject = app.add_subcommand("inject-noise", "add random unobserved edges to an auxiliary behavior");
  std::string inj_data, inj_behavior, inj_out;
  double inj_ratio = 0.2;
  uint64_t inj_seed = 42;
  inject->add_option("--data", inj_data, "prepared dataset directory")->required();
  inject->add_option("--behavior", inj_behavior, "auxiliary behavior name")->required();
  inject->add_option("--ratio", inj_ratio, "edges to add as a fraction of existing ones");
  inject->add_option("--seed", inj_seed, "sampling seed");
  inject->add_option("--out", inj_out, "output directory")->required();

  // report-retention
  auto* retention = app.add_subcommand("report-retention", "per-behavior gate statistics");
  std::string ret_ckpt, ret_data, ret_out;
  double ret_theta = 0.5;
  retention->add_option("--checkpoint", ret_ckpt, "checkpoint file")->required();
  retention->add_option("--data", ret_data, "prepared dataset directory")->required();
  retention->add_option("--hard-gates", ret_theta, "retention threshold on the eval gate value");
  retention->add_option("--out", ret_out, "retention CSV path (default: stdout only)");

  // robustness
  auto* robust = app.add_subcommand("robustness", "clean vs +noise comparison for the full model and the no_ib ablation");
  std::string rob_config, rob_data, rob_behavior, rob_out;
  double rob_ratio = 0.2;
  int rob_seeds = 3;
  robust->add_option("--config", rob_config, "config file")->required();
  robust->add_option("--data", rob_data, "prepared dataset directory")->required();
  robust->add_option("--behavior", rob_behavior, "behavior to corrupt (default: first auxiliary)");
  robust->add_option("--ratio", rob_ratio, "injection ratio");
  robust->add_option("--seeds", rob_seeds, "number of seeds to average over");
  robust->add_option("--out", rob_out, "report CSV path")->required();

  // export-embeddings
  auto* export_cmd = app.add_subcommand("export-embeddings", "write per-node target/auxiliary readouts");
  std::string exp_ckpt, exp_data, exp_out;
  export_cmd->add_option("--checkpoint", exp_ckpt, "checkpoint file")->required();
  export_cmd->add_option("--data", exp_data, "prepared dataset directory")->required();
  export_cmd->add_option("--out", exp_out, "embeddings CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  if (prepare->parsed()) {
    Dataset ds = load_dataset(prep_dir, prep_target);
    ds = split_leave_one_out(ds, prep_seed);
    save_prepared(ds, prep_out);
    std::printf("prepared %s: %d users, %d items, %d behaviors, %d test users (%d excluded)\n",
                prep_out.c_str(), ds.num_users, ds.num_items, ds.behaviors(),
                ds.test_user_count(), ds.excluded_eval_users);
  } else if (synth->parsed()) {
    const SyntheticSpec spec = load_synthetic_spec(synth_spec);
    Dataset ds = generate_synthetic(spec);
    ds = split_leave_one_out(ds, spec.seed);
    save_prepared(ds, synth_out);
    std::printf("synthetic dataset in %s: %d users, %d items, %d behaviors, %d test users\n",
                synth_out.c_str(), ds.num_users, ds.num_items, ds.behaviors(),
                ds.test_user_count());
  } else if (train_cmd->parsed()) {
    TrainConfig cfg = parse_config_file(train_config);
    cfg.checkpoint_dir = train_out;
    const Dataset ds = load_prepared(train_data);
    const TrainResult result = train(ds, cfg);
    std::printf("trained %d epochs; best epoch %d; artifacts in %s\n",
                result.log.empty() ? 0 : result.log.back().epoch, result.best_epoch,
                train_out.c_str());
    if (!result.log.empty() && result.log.back().eval) {
      for (int k : cfg.hp.eval_cutoffs)
        std::printf("  hr@%d %.6f  ndcg@%d %.6f\n", k, result.log.back().eval->hr.at(k), k,
                    result.log.back().eval->ndcg.at(k));
    }
  } else if (eval_cmd->parsed()) {
    const LoadedModel lm = load_model(eval_ckpt, eval_data);
    EvalOptions opts;
    opts.cutoffs = parse_cutoffs(eval_k);
    opts.sampled_negatives = eval_sampled;
    opts.sample_seed = eval_seed;
    const RankingResult r = evaluate_model(lm.ck.state, lm.ds, lm.graphs, lm.ck.hp, lm.ck.ablation,
                                           opts);
    const std::string csv = metrics_csv(r);
    std::fputs(csv.c_str(), stdout);
    if (!eval_out.empty()) atomic_write_file(eval_out, csv);
  } else if (inject->parsed()) {
    const Dataset ds = load_prepared(inj_data);
    const int behavior = ds.behavior_index(inj_behavior);
    if (behavior < 0) throw std::runtime_error("unknown behavior: " + inj_behavior);
    std::vector<Edge> injected;
    const Dataset out = inject_noise(ds, behavior, inj_ratio, inj_seed, &injected);
    save_prepared(out, inj_out);
    std::ostringstream audit;
    for (const auto& [u, i] : injected) audit << u << '\t' << i << '\n';
    atomic_write_file((fs::path(inj_out) / "injected_edges.txt").string(), audit.str());
    std::printf("injected %zu edges into %s; audit in %s/injected_edges.txt\n", injected.size(),
                inj_behavior.c_str(), inj_out.c_str());
  } else if (retention->parsed()) {
    const LoadedModel lm = load_model(ret_ckpt, ret_data);
    const auto rows = retention_report(lm.ck.state, lm.ds, lm.graphs, lm.ck.hp, lm.ck.ablation,
                                       ret_theta);
    const std::string csv = retention_csv(rows);
    std::fputs(csv.c_str(), stdout);
    if (!ret_out.empty()) atomic_write_file(ret_out, csv);
  } else if (robust->parsed()) {
    const TrainConfig cfg = parse_config_file(rob_config);
    const Dataset ds = load_prepared(rob_data);
    int behavior;
    if (rob_behavior.empty()) {
      behavior = ds.auxiliary_behaviors().front();
    } else {
      behavior = ds.behavior_index(rob_behavior);
      if (behavior < 0) throw std::runtime_error("unknown behavior: " + rob_behavior);
    }
    std::vector<uint64_t> seeds;
    for (int s = 0; s < rob_seeds; ++s) seeds.push_back(cfg.hp.seed + static_cast<uint64_t>(s));
    const RobustnessReport report = robustness_compare(ds, cfg, behavior, rob_ratio, seeds);
    const std::string csv = robustness_csv(report);
    std::fputs(csv.c_str(), stdout);
    atomic_write_file(rob_out, csv);
  } else if (export_cmd->parsed()) {
    const LoadedModel lm = load_model(exp_ckpt, exp_data);
    atomic_write_file(exp_out,
                      embeddings_csv(lm.ck.state, lm.ds, lm.graphs, lm.ck.hp, lm.ck.ablation));
    std::printf("embeddings written to %s\n", exp_out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
