#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gcib/evaluation.hpp"
#include "gcib/objectives.hpp"

namespace gcib {

struct TrainConfig {
  Hyperparams hp;
  Ablation ablation = Ablation::none;
  int eval_every = 10;
  std::string checkpoint_dir;     // empty = keep checkpoints in memory only
  int early_stop_patience = 0;    // 0 disables early stopping and the validation carve-out

  void validate() const;
};

TrainConfig parse_config_text(const std::string& text, const std::string& origin);
TrainConfig parse_config_file(const std::string& path);

struct AdamState {
  std::vector<Mat> m;
  std::vector<Mat> v;
  uint64_t step = 0;
};

AdamState init_adam(const ModelState& state);

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction.
// Rejects non-finite gradients.
void adam_step(const std::vector<Mat*>& params, const std::vector<Mat>& grads, AdamState& st,
               double lr);

// Uniform positives with replacement; negatives resampled (cap 100) until
// they miss the user's training target set; hsic nodes drawn without
// replacement from the batch's users and items.
TrainBatch sample_batch(const Dataset& ds, int batch_size, int hsic_batch, Rng& rng);

// One epoch's batches: all training positives shuffled and sliced.
std::vector<TrainBatch> make_epoch_batches(const Dataset& ds, int batch_size, int hsic_batch,
                                           Rng& rng);

struct EpochRow {
  int epoch = 0;
  double bpr = 0.0;
  double ib = 0.0;
  double cl = 0.0;
  double total = 0.0;
  std::optional<RankingResult> eval;
};

class Trainer {
 public:
  Trainer(const Dataset& ds, const TrainConfig& cfg);

  void run_epoch();
  RankingResult evaluate_test(const EvalOptions& opts) const;
  double validation_hr(int k) const;  // only meaningful with a validation carve-out

  const EpochRow& last_losses() const { return last_; }
  int epoch() const { return epoch_; }
  const ModelState& state() const { return state_; }
  const AdamState& optimizer() const { return opt_; }
  const Dataset& dataset() const { return ds_; }
  const GraphSet& graphs() const { return graphs_; }
  const TrainConfig& config() const { return cfg_; }
  std::array<uint64_t, 4> sampler_rng_state() const { return sampler_rng_.state(); }
  std::array<uint64_t, 4> noise_state() const { return {noise_seed_, noise_step_, 0, 0}; }
  int validation_size() const { return static_cast<int>(val_items_.size()); }

 private:
  Dataset ds_;  // post validation carve-out
  TrainConfig cfg_;
  std::vector<int> aux_;
  GraphSet graphs_;
  ModelState state_;
  AdamState opt_;
  Rng sampler_rng_;
  uint64_t noise_seed_ = 0;
  uint64_t noise_step_ = 0;  // one tick per optimization step
  std::vector<Edge> val_items_;
  std::vector<std::vector<int>> user_target_items_;  // sorted, for candidate exclusion
  EpochRow last_;
  int epoch_ = 0;
};

struct TrainResult {
  ModelState final_state;
  ModelState best_state;
  int best_epoch = -1;
  double best_metric = -1.0;
  std::vector<EpochRow> log;
};

TrainResult train(const Dataset& ds, const TrainConfig& cfg);

std::string metric_log_csv(const std::vector<EpochRow>& log, const std::vector<int>& cutoffs);

}  // namespace gcib
