#include "gcib/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gcib/checkpoint.hpp"
#include "gcib/io.hpp"

namespace fs = std::filesystem;

namespace gcib {

void TrainConfig::validate() const {
  hp.validate();
  if (eval_every < 0) throw std::runtime_error("config: eval_every must be >= 0");
  if (early_stop_patience < 0) throw std::runtime_error("config: early_stop_patience must be >= 0");
}

TrainConfig parse_config_text(const std::string& text, const std::string& origin) {
  const auto kv = parse_kv_text(text, origin);
  TrainConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "d") cfg.hp.dim = static_cast<int>(parse_int(value, key));
    else if (key == "layers_global") cfg.hp.layers_global = static_cast<int>(parse_int(value, key));
    else if (key == "layers_domain") cfg.hp.layers_domain = static_cast<int>(parse_int(value, key));
    else if (key == "beta") cfg.hp.beta = parse_double(value, key);
    else if (key == "lambda") cfg.hp.lambda = parse_double(value, key);
    else if (key == "gamma") cfg.hp.gamma = parse_double(value, key);
    else if (key == "tau") cfg.hp.tau = parse_double(value, key);
    else if (key == "concrete_temp") cfg.hp.concrete_temp = parse_double(value, key);
    else if (key == "rbf_sigma") cfg.hp.rbf_sigma = parse_double(value, key);
    else if (key == "lr") cfg.hp.lr = parse_double(value, key);
    else if (key == "batch_size") cfg.hp.batch_size = static_cast<int>(parse_int(value, key));
    else if (key == "hsic_batch") cfg.hp.hsic_batch = static_cast<int>(parse_int(value, key));
    else if (key == "epochs") cfg.hp.epochs = static_cast<int>(parse_int(value, key));
    else if (key == "seed") cfg.hp.seed = parse_u64(value, key);
    else if (key == "eval_cutoffs") {
      cfg.hp.eval_cutoffs.clear();
      for (const auto& part : split(value, ','))
        cfg.hp.eval_cutoffs.push_back(static_cast<int>(parse_int(trim(part), key)));
    } else if (key == "gate_input") {
      if (value == "prob") cfg.hp.gate_input = GateInput::prob;
      else if (value == "logit") cfg.hp.gate_input = GateInput::logit;
      else throw std::runtime_error("config: gate_input must be prob or logit");
    } else if (key == "hsic_repr") {
      if (value == "last") cfg.hp.hsic_repr = HsicRepr::last;
      else if (value == "mean") cfg.hp.hsic_repr = HsicRepr::mean;
      else throw std::runtime_error("config: hsic_repr must be last or mean");
    } else if (key == "ablation") cfg.ablation = ablation_from_name(value);
    else if (key == "eval_every") cfg.eval_every = static_cast<int>(parse_int(value, key));
    else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
    else if (key == "early_stop_patience")
      cfg.early_stop_patience = static_cast<int>(parse_int(value, key));
    else throw std::runtime_error(origin + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
  return parse_config_text(read_file(path), path);
}

AdamState init_adam(const ModelState& state) {
  AdamState st;
  for (const Mat* p : state.params()) {
    st.m.emplace_back(p->rows, p->cols, 0.0);
    st.v.emplace_back(p->rows, p->cols, 0.0);
  }
  return st;
}

void adam_step(const std::vector<Mat*>& params, const std::vector<Mat>& grads, AdamState& st,
               double lr) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient/moment count mismatch");
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  st.step += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Mat& pm = *params[p];
    const Mat& gm = grads[p];
    if (!pm.same_shape(gm)) throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (int k = 0; k < pm.size(); ++k) {
      const double g = gm.a[k];
      if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");
      st.m[p].a[k] = kBeta1 * st.m[p].a[k] + (1.0 - kBeta1) * g;
      st.v[p].a[k] = kBeta2 * st.v[p].a[k] + (1.0 - kBeta2) * g * g;
      const double mhat = st.m[p].a[k] / bc1;
      const double vhat = st.v[p].a[k] / bc2;
      pm.a[k] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

namespace {

std::vector<std::vector<int>> target_adjacency(const Dataset& ds) {
  std::vector<std::vector<int>> adj(ds.num_users);
  for (const auto& [u, i] : ds.edges[ds.target]) adj[u].push_back(i);  // sorted input
  return adj;
}

bool has_item(const std::vector<int>& sorted_items, int item) {
  return std::binary_search(sorted_items.begin(), sorted_items.end(), item);
}

int sample_negative(const std::vector<int>& user_items, int num_items, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int candidate = rng.index(num_items);
    if (!has_item(user_items, candidate)) return candidate;
  }
  throw std::runtime_error("negative sampling: no free item found after 100 attempts");
}

void fill_hsic_nodes(TrainBatch& batch, int num_users, int hsic_batch, Rng& rng) {
  std::vector<int> nodes;
  nodes.reserve(batch.users.size() * 3);
  for (int u : batch.users) nodes.push_back(u);
  for (int i : batch.pos_items) nodes.push_back(num_users + i);
  for (int i : batch.neg_items) nodes.push_back(num_users + i);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  const int want = std::min<int>(hsic_batch, static_cast<int>(nodes.size()));
  // partial Fisher-Yates: the first `want` entries are a uniform sample
  for (int k = 0; k < want; ++k) {
    const int j = k + rng.index(static_cast<int>(nodes.size()) - k);
    std::swap(nodes[k], nodes[j]);
  }
  nodes.resize(want);
  std::sort(nodes.begin(), nodes.end());
  batch.hsic_nodes = std::move(nodes);
}

}  // namespace

TrainBatch sample_batch(const Dataset& ds, int batch_size, int hsic_batch, Rng& rng) {
  if (ds.target < 0 || ds.edges[ds.target].empty())
    throw std::runtime_error("sample_batch: no training target edges");
  const auto& target_edges = ds.edges[ds.target];
  const auto adj = target_adjacency(ds);
  TrainBatch batch;
  batch.users.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const auto& [u, i] = target_edges[rng.index(static_cast<int>(target_edges.size()))];
    batch.users.push_back(u);
    batch.pos_items.push_back(i);
    batch.neg_items.push_back(sample_negative(adj[u], ds.num_items, rng));
  }
  fill_hsic_nodes(batch, ds.num_users, hsic_batch, rng);
  return batch;
}

std::vector<TrainBatch> make_epoch_batches(const Dataset& ds, int batch_size, int hsic_batch,
                                           Rng& rng) {
  if (ds.target < 0 || ds.edges[ds.target].empty())
    throw std::runtime_error("make_epoch_batches: no training target edges");
  const auto& target_edges = ds.edges[ds.target];
  const auto adj = target_adjacency(ds);

  std::vector<int> perm(target_edges.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);

  std::vector<TrainBatch> batches;
  for (size_t start = 0; start < perm.size(); start += batch_size) {
    const size_t end = std::min(perm.size(), start + batch_size);
    TrainBatch batch;
    batch.users.reserve(end - start);
    for (size_t p = start; p < end; ++p) {
      const auto& [u, i] = target_edges[perm[p]];
      batch.users.push_back(u);
      batch.pos_items.push_back(i);
      batch.neg_items.push_back(sample_negative(adj[u], ds.num_items, rng));
    }
    fill_hsic_nodes(batch, ds.num_users, hsic_batch, rng);
    batches.push_back(std::move(batch));
  }
  return batches;
}

Trainer::Trainer(const Dataset& ds, const TrainConfig& cfg)
    : ds_(ds), cfg_(cfg), sampler_rng_(0) {
  cfg_.validate();
  if (ds_.target < 0) throw std::runtime_error("train: dataset has no target behavior");
  if (!ds_.has_split) throw std::runtime_error("train: dataset has no leave-one-out split");
  aux_ = ds_.auxiliary_behaviors();
  if (aux_.empty()) throw std::runtime_error("train: no auxiliary behaviors");

  Rng master(cfg_.hp.seed);
  Rng init_rng(master.next());
  sampler_rng_ = Rng(master.next());
  noise_seed_ = master.next();
  Rng val_rng(master.next());

  // validation carve-out for early stopping: one extra held-out target edge
  // per user that still has at least two
  if (cfg_.early_stop_patience > 0) {
    const auto adj = target_adjacency(ds_);
    std::vector<Edge> train;
    train.reserve(ds_.edges[ds_.target].size());
    for (int u = 0; u < ds_.num_users; ++u) {
      const auto& items = adj[u];
      if (items.size() >= 2) {
        const int held = items[val_rng.index(static_cast<int>(items.size()))];
        val_items_.emplace_back(u, held);
        for (int i : items)
          if (i != held) train.emplace_back(u, i);
      } else {
        for (int i : items) train.emplace_back(u, i);
      }
    }
    std::sort(train.begin(), train.end());
    ds_.edges[ds_.target] = std::move(train);
  }

  graphs_ = build_graphs(ds_);
  state_ = init_state(ds_.num_users, ds_.num_items, static_cast<int>(aux_.size()), cfg_.hp,
                      init_rng);
  opt_ = init_adam(state_);
  user_target_items_ = target_adjacency(ds_);
}

void Trainer::run_epoch() {
  const Hyperparams& hp = cfg_.hp;
  const bool gates_learned = cfg_.ablation == Ablation::none ||
                             cfg_.ablation == Ablation::no_global ||
                             cfg_.ablation == Ablation::no_infonce;
  const auto batches = make_epoch_batches(ds_, hp.batch_size, hp.hsic_batch, sampler_rng_);

  double bpr = 0.0, ib = 0.0, cl = 0.0, total = 0.0;
  for (const TrainBatch& batch : batches) {
    Tape tape;
    const StateLeaves sl = make_leaves(tape, state_);
    GateNoise noise;
    if (gates_learned) noise = gate_noise_for_step(graphs_, aux_, noise_seed_, noise_step_);
    ++noise_step_;
    const Forward fwd = build_forward(tape, sl, graphs_, ds_.target, aux_, hp, cfg_.ablation,
                                      gates_learned ? &noise : nullptr);
    const LossNodes loss = total_loss(tape, fwd, sl, batch, ds_.num_users, hp, cfg_.ablation);

    const auto term = [&](Tape::Id id) { return id >= 0 ? tape.val(id)(0, 0) : 0.0; };
    const double b = term(loss.bpr), h = term(loss.ib), c = term(loss.cl), tot = term(loss.total);
    if (!std::isfinite(b)) throw std::runtime_error("train: non-finite bpr loss");
    if (!std::isfinite(h)) throw std::runtime_error("train: non-finite ib loss");
    if (!std::isfinite(c)) throw std::runtime_error("train: non-finite infonce loss");
    if (!std::isfinite(tot)) throw std::runtime_error("train: non-finite total loss");
    bpr += b;
    ib += h;
    cl += c;
    total += tot;

    tape.backward(loss.total);
    std::vector<Mat> grads;
    grads.push_back(tape.grad(sl.e0));
    for (Tape::Id w : sl.w) grads.push_back(tape.grad(w));
    for (Tape::Id b_id : sl.b) grads.push_back(tape.grad(b_id));
    adam_step(state_.params(), grads, opt_, hp.lr);
  }

  const double nb = static_cast<double>(batches.size());
  ++epoch_;
  last_ = EpochRow{epoch_, bpr / nb, ib / nb, cl / nb, total / nb, std::nullopt};
}

RankingResult Trainer::evaluate_test(const EvalOptions& opts) const {
  return evaluate_model(state_, ds_, graphs_, cfg_.hp, cfg_.ablation, opts);
}

double Trainer::validation_hr(int k) const {
  if (val_items_.empty()) return 0.0;
  const Mat fused = fused_embeddings(state_, graphs_, ds_.target, aux_, cfg_.hp, cfg_.ablation);
  EvalOptions opts;
  opts.cutoffs = {k};
  const RankingResult r = evaluate_held_out(fused, ds_, val_items_, opts);
  return r.hr.at(k);
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  Trainer trainer(ds, cfg);
  const Hyperparams& hp = cfg.hp;
  const int selection_k =
      std::find(hp.eval_cutoffs.begin(), hp.eval_cutoffs.end(), 10) != hp.eval_cutoffs.end()
          ? 10
          : hp.eval_cutoffs.front();

  TrainResult result;
  result.best_state = trainer.state();
  int evals_since_best = 0;
  bool stopped = false;
  if (!cfg.checkpoint_dir.empty()) fs::create_directories(cfg.checkpoint_dir);

  const auto checkpoint_of = [&](const Trainer& tr, uint64_t epochs) {
    Checkpoint ck;
    ck.hp = hp;
    ck.ablation = cfg.ablation;
    ck.num_users = tr.dataset().num_users;
    ck.num_items = tr.dataset().num_items;
    ck.behavior_names = tr.dataset().behavior_names;
    ck.target = tr.dataset().target;
    ck.state = tr.state();
    ck.opt = tr.optimizer();
    ck.trained_epochs = epochs;
    ck.sampler_rng = tr.sampler_rng_state();
    ck.noise_rng = tr.noise_state();
    return ck;
  };

  for (int epoch = 1; epoch <= hp.epochs && !stopped; ++epoch) {
    trainer.run_epoch();
    EpochRow row = trainer.last_losses();
    const bool eval_now =
        (cfg.eval_every > 0 && epoch % cfg.eval_every == 0) || epoch == hp.epochs;
    if (eval_now) {
      EvalOptions opts;
      opts.cutoffs = hp.eval_cutoffs;
      row.eval = trainer.evaluate_test(opts);
      const double metric = cfg.early_stop_patience > 0 ? trainer.validation_hr(selection_k)
                                                        : row.eval->hr.at(selection_k);
      if (metric > result.best_metric) {
        result.best_metric = metric;
        result.best_epoch = epoch;
        result.best_state = trainer.state();
        evals_since_best = 0;
        if (!cfg.checkpoint_dir.empty())
          save_checkpoint(checkpoint_of(trainer, static_cast<uint64_t>(epoch)),
                          (fs::path(cfg.checkpoint_dir) / "best.ckpt").string());
      } else if (cfg.early_stop_patience > 0) {
        if (++evals_since_best >= cfg.early_stop_patience) stopped = true;
      }
    }
    result.log.push_back(std::move(row));
  }

  result.final_state = trainer.state();
  if (result.best_epoch < 0) result.best_state = trainer.state();
  if (!cfg.checkpoint_dir.empty()) {
    save_checkpoint(checkpoint_of(trainer, static_cast<uint64_t>(trainer.epoch())),
                    (fs::path(cfg.checkpoint_dir) / "final.ckpt").string());
    atomic_write_file((fs::path(cfg.checkpoint_dir) / "metrics.csv").string(),
                      metric_log_csv(result.log, hp.eval_cutoffs));
  }
  return result;
}

std::string metric_log_csv(const std::vector<EpochRow>& log, const std::vector<int>& cutoffs) {
  std::ostringstream ss;
  ss << "epoch,loss_bpr,loss_ib,loss_cl,loss_total";
  for (int k : cutoffs) ss << ",hr@" << k << ",ndcg@" << k;
  ss << '\n';
  char buf[64];
  const auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return std::string(buf);
  };
  for (const EpochRow& row : log) {
    if (!row.eval) continue;
    ss << row.epoch << ',' << num(row.bpr) << ',' << num(row.ib) << ',' << num(row.cl) << ','
       << num(row.total);
    for (int k : cutoffs) ss << ',' << num(row.eval->hr.at(k)) << ',' << num(row.eval->ndcg.at(k));
    ss << '\n';
  }
  return ss.str();
}

}  // namespace gcib
