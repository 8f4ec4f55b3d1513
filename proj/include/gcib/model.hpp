#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcib/graph.hpp"
#include "gcib/rng.hpp"
#include "gcib/tape.hpp"

namespace gcib {

enum class Ablation { none, no_global, no_ib, no_infonce, both_off };
enum class GateInput { prob, logit };
enum class HsicRepr { last, mean };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& s);

struct Hyperparams {
  int dim = 64;
  int layers_global = 2;  // propagation steps on the global graph
  int layers_domain = 2;  // per-domain stack depth counting layer 0
  double beta = 1.0;      // bottleneck weight
  double lambda = 0.1;    // contrastive weight
  double gamma = 1e-5;    // L2 weight
  double tau = 0.2;       // contrastive temperature
  double concrete_temp = 0.2;
  double rbf_sigma = 0.25;
  double lr = 1e-3;
  int batch_size = 1024;
  int hsic_batch = 1024;
  int epochs = 100;
  uint64_t seed = 42;
  std::vector<int> eval_cutoffs = {10, 20};
  GateInput gate_input = GateInput::prob;
  HsicRepr hsic_repr = HsicRepr::last;

  void validate() const;
};

// Trainable parameters: shared initial embeddings plus one single-layer
// confidence MLP (weight 2d x 1, bias) per auxiliary behavior.
struct ModelState {
  Mat e0;  // (M+N) x d
  std::vector<Mat> mlp_w;
  std::vector<Mat> mlp_b;

  std::vector<Mat*> params();
  std::vector<const Mat*> params() const;
};

ModelState init_state(int num_users, int num_items, int aux_behaviors, const Hyperparams& hp,
                      Rng& rng);

struct GraphSet {
  BipartiteGraph global;
  std::vector<BipartiteGraph> behavior;
};

GraphSet build_graphs(const Dataset& ds);

// Concrete-relaxation noise, logit(delta) per auxiliary edge; fresh each
// training step and treated as a constant by the tape. Each edge's delta is a
// pure function of (seed, behavior, edge, step), so runs on datasets sharing
// edges draw identical noise for them regardless of edge-set differences.
struct GateNoise {
  std::vector<std::vector<double>> logits;  // per auxiliary behavior
};

GateNoise gate_noise_for_step(const GraphSet& graphs, const std::vector<int>& aux_behaviors,
                              uint64_t noise_seed, uint64_t step);

struct StateLeaves {
  Tape::Id e0 = -1;
  std::vector<Tape::Id> w;
  std::vector<Tape::Id> b;
};

StateLeaves make_leaves(Tape& t, const ModelState& state);

// Relaxed Bernoulli gate: sigmoid((noise + input)/temp). Training passes
// fresh logit(delta) noise; eval passes none, which is exactly the
// delta = 0.5 case. gate_input selects whether the confidence enters as the
// raw (0,1) value or as its logit.
Tape::Id sample_gates(Tape& t, Tape::Id confidence, double temp,
                      const std::vector<double>* noise_logits, GateInput gi);

struct AuxForward {
  int behavior = -1;
  Tape::Id pre_activation = -1;  // MLP output before the sigmoid, |E| x 1
  Tape::Id confidence = -1;      // w per edge in (0,1); -1 when gates are forced to 1
  Tape::Id gates = -1;
  std::vector<Tape::Id> gated_stack;
  std::vector<Tape::Id> raw_stack;
  Tape::Id z = -1;           // layer-mean readout of the gated stack
  Tape::Id repr_gated = -1;  // bottleneck inputs
  Tape::Id repr_raw = -1;
};

// Every intermediate the training step and the reports need, as tape nodes.
struct Forward {
  Tape::Id e_global = -1;
  std::vector<Tape::Id> target_stack;
  Tape::Id z_tgt = -1;
  Tape::Id z_aux = -1;
  Tape::Id fused = -1;  // (M+N) x d, e = (z_tgt + z_aux)/2
  std::vector<AuxForward> aux;
};

// Builds the full network on the tape. `noise == nullptr` selects the
// deterministic eval path. Requires at least one auxiliary behavior.
Forward build_forward(Tape& t, const StateLeaves& sl, const GraphSet& graphs, int target_behavior,
                      const std::vector<int>& aux_behaviors, const Hyperparams& hp, Ablation ab,
                      const GateNoise* noise);

// Dot-product scores for (users[j], items[j]) pairs from the fused embedding.
Tape::Id score_pairs(Tape& t, Tape::Id fused, int num_users, const std::vector<int>& users,
                     const std::vector<int>& items);

}  // namespace gcib
