#include "gcib/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gcib {

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_global: return "no_global";
    case Ablation::no_ib: return "no_ib";
    case Ablation::no_infonce: return "no_infonce";
    case Ablation::both_off: return "both_off";
  }
  return "none";
}

Ablation ablation_from_name(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "no_global") return Ablation::no_global;
  if (s == "no_ib") return Ablation::no_ib;
  if (s == "no_infonce") return Ablation::no_infonce;
  if (s == "both_off") return Ablation::both_off;
  throw std::runtime_error("unknown ablation: " + s);
}

void Hyperparams::validate() const {
  if (dim < 1) throw std::runtime_error("hyperparams: dim must be >= 1");
  if (layers_global < 1 || layers_global > 4)
    throw std::runtime_error("hyperparams: layers_global must be in {1,2,3,4}");
  if (layers_domain < 1 || layers_domain > 4)
    throw std::runtime_error("hyperparams: layers_domain must be in {1,2,3,4}");
  if (!(tau > 0.0)) throw std::runtime_error("hyperparams: tau must be > 0");
  if (!(concrete_temp > 0.0)) throw std::runtime_error("hyperparams: concrete_temp must be > 0");
  if (!(rbf_sigma > 0.0)) throw std::runtime_error("hyperparams: rbf_sigma must be > 0");
  if (beta < 0.0 || lambda < 0.0 || gamma < 0.0)
    throw std::runtime_error("hyperparams: loss weights must be >= 0");
  if (!(lr > 0.0)) throw std::runtime_error("hyperparams: lr must be > 0");
  if (batch_size < 1) throw std::runtime_error("hyperparams: batch_size must be >= 1");
  if (hsic_batch < 2) throw std::runtime_error("hyperparams: hsic_batch must be >= 2");
  if (epochs < 0) throw std::runtime_error("hyperparams: epochs must be >= 0");
  if (eval_cutoffs.empty()) throw std::runtime_error("hyperparams: eval_cutoffs empty");
  for (int k : eval_cutoffs)
    if (k < 1) throw std::runtime_error("hyperparams: cutoffs must be >= 1");
}

std::vector<Mat*> ModelState::params() {
  std::vector<Mat*> out{&e0};
  for (auto& w : mlp_w) out.push_back(&w);
  for (auto& b : mlp_b) out.push_back(&b);
  return out;
}

std::vector<const Mat*> ModelState::params() const {
  std::vector<const Mat*> out{&e0};
  for (const auto& w : mlp_w) out.push_back(&w);
  for (const auto& b : mlp_b) out.push_back(&b);
  return out;
}

ModelState init_state(int num_users, int num_items, int aux_behaviors, const Hyperparams& hp,
                      Rng& rng) {
  ModelState st;
  st.e0 = Mat(num_users + num_items, hp.dim);
  for (double& x : st.e0.a) x = 0.1 * rng.normal();
  // zero-initialized confidence MLPs start every gate at the neutral w = 0.5
  st.mlp_w.assign(aux_behaviors, Mat(2 * hp.dim, 1, 0.0));
  st.mlp_b.assign(aux_behaviors, Mat(1, 1, 0.0));
  return st;
}

GraphSet build_graphs(const Dataset& ds) {
  GraphSet gs;
  gs.global = build_global_graph(ds);
  gs.behavior.reserve(ds.behaviors());
  for (int k = 0; k < ds.behaviors(); ++k) gs.behavior.push_back(build_behavior_graph(ds, k));
  return gs;
}

GateNoise gate_noise_for_step(const GraphSet& graphs, const std::vector<int>& aux_behaviors,
                              uint64_t noise_seed, uint64_t step) {
  GateNoise noise;
  noise.logits.reserve(aux_behaviors.size());
  for (int k : aux_behaviors) {
    const BipartiteGraph& g = graphs.behavior[k];
    std::vector<double> logits(g.edge_count());
    for (int e = 0; e < g.edge_count(); ++e) {
      uint64_t h = hash_mix(noise_seed, static_cast<uint64_t>(k));
      h = hash_mix(h, static_cast<uint64_t>(g.edges[e].first));
      h = hash_mix(h, static_cast<uint64_t>(g.edges[e].second));
      h = hash_mix(h, step);
      const double delta = hash_unit_open(h);
      logits[e] = std::log(delta / (1.0 - delta));
    }
    noise.logits.push_back(std::move(logits));
  }
  return noise;
}

StateLeaves make_leaves(Tape& t, const ModelState& state) {
  StateLeaves sl;
  sl.e0 = t.leaf(state.e0);
  for (const auto& w : state.mlp_w) sl.w.push_back(t.leaf(w));
  for (const auto& b : state.mlp_b) sl.b.push_back(t.leaf(b));
  return sl;
}

namespace {

// sigmoid((noise + x)/temp) with the noise entering as a constant
Tape::Id relaxed_gate(Tape& t, Tape::Id x, double temp, const std::vector<double>* noise_logits) {
  if (noise_logits) {
    const Mat& v = t.val(x);
    if (static_cast<int>(noise_logits->size()) != v.rows)
      throw std::invalid_argument("sample_gates: noise size does not match edge count");
    Mat nm(v.rows, 1);
    for (int e = 0; e < v.rows; ++e) nm(e, 0) = (*noise_logits)[e];
    x = t.add(x, t.constant(std::move(nm)));
  }
  return t.sigmoid(t.scale(x, 1.0 / temp));
}

}  // namespace

Tape::Id sample_gates(Tape& t, Tape::Id confidence, double temp,
                      const std::vector<double>* noise_logits, GateInput gi) {
  if (!(temp > 0.0)) throw std::invalid_argument("sample_gates: temperature must be > 0");
  Tape::Id x = confidence;
  if (gi == GateInput::logit) {
    const Mat& w = t.val(confidence);
    Mat ones(w.rows, w.cols, 1.0);
    const Tape::Id one = t.constant(std::move(ones));
    x = t.sub(t.log(confidence), t.log(t.sub(one, confidence)));
  }
  return relaxed_gate(t, x, temp, noise_logits);
}

namespace {

// layer-0 seed plus (depth-1) propagation steps
std::vector<Tape::Id> propagation_stack(Tape& t, const BipartiteGraph& g, Tape::Id gates,
                                        Tape::Id layer0, int depth) {
  std::vector<Tape::Id> stack{layer0};
  for (int l = 1; l < depth; ++l)
    stack.push_back(gates >= 0 ? t.propagate_gated(g, gates, stack.back())
                               : t.propagate(g, stack.back()));
  return stack;
}

}  // namespace

Forward build_forward(Tape& t, const StateLeaves& sl, const GraphSet& graphs, int target_behavior,
                      const std::vector<int>& aux_behaviors, const Hyperparams& hp, Ablation ab,
                      const GateNoise* noise) {
  if (aux_behaviors.empty())
    throw std::runtime_error("build_forward: at least one auxiliary behavior is required");
  if (target_behavior < 0 || target_behavior >= static_cast<int>(graphs.behavior.size()))
    throw std::runtime_error("build_forward: bad target behavior index");

  Forward f;
  const int m = graphs.global.num_users;

  // global encoding over the union graph; the ablation swaps in the raw
  // initial embeddings instead
  if (ab == Ablation::no_global) {
    f.e_global = sl.e0;
  } else {
    std::vector<Tape::Id> layers{sl.e0};
    for (int l = 0; l < hp.layers_global; ++l)
      layers.push_back(t.propagate(graphs.global, layers.back()));
    f.e_global = t.mean_of(layers);
  }

  // target domain
  const BipartiteGraph& g_target = graphs.behavior[target_behavior];
  f.target_stack = propagation_stack(t, g_target, -1, f.e_global, hp.layers_domain);
  f.z_tgt = t.mean_of(f.target_stack);

  const bool gates_learned = ab == Ablation::none || ab == Ablation::no_global ||
                             ab == Ablation::no_infonce;

  std::vector<Tape::Id> aux_readouts;
  for (size_t j = 0; j < aux_behaviors.size(); ++j) {
    const int k = aux_behaviors[j];
    const BipartiteGraph& g_k = graphs.behavior[k];
    AuxForward af;
    af.behavior = k;

    if (gates_learned) {
      // target-readout confidence per auxiliary edge: sigmoid(W [e_u; e_i] + b)
      std::vector<int> user_rows, item_rows;
      user_rows.reserve(g_k.edges.size());
      item_rows.reserve(g_k.edges.size());
      for (const auto& [u, i] : g_k.edges) {
        user_rows.push_back(u);
        item_rows.push_back(m + i);
      }
      const Tape::Id pair_repr = t.concat_rows(t.gather_rows(f.z_tgt, std::move(user_rows)),
                                               t.gather_rows(f.z_tgt, std::move(item_rows)));
      af.pre_activation = t.add_scalar(t.matmul(pair_repr, sl.w[j]), sl.b[j]);
      af.confidence = t.sigmoid(af.pre_activation);
      if (hp.gate_input == GateInput::logit) {
        // logit(sigmoid(p)) == p, so feed the pre-activation directly; this
        // stays exact where sigmoid saturates and log(1 - w) would not
        af.gates = relaxed_gate(t, af.pre_activation, hp.concrete_temp,
                                noise ? &noise->logits[j] : nullptr);
      } else {
        af.gates = sample_gates(t, af.confidence, hp.concrete_temp,
                                noise ? &noise->logits[j] : nullptr, hp.gate_input);
      }
    } else {
      af.gates = t.constant(Mat(g_k.edge_count(), 1, 1.0));
    }

    af.gated_stack = propagation_stack(t, g_k, af.gates, f.e_global, hp.layers_domain);
    af.raw_stack = propagation_stack(t, g_k, -1, f.e_global, hp.layers_domain);
    af.z = t.mean_of(af.gated_stack);
    if (hp.hsic_repr == HsicRepr::last) {
      af.repr_gated = af.gated_stack.back();
      af.repr_raw = af.raw_stack.back();
    } else {
      af.repr_gated = af.z;
      af.repr_raw = t.mean_of(af.raw_stack);
    }
    aux_readouts.push_back(af.z);
    f.aux.push_back(std::move(af));
  }

  f.z_aux = t.mean_of(aux_readouts);
  f.fused = t.scale(t.add(f.z_tgt, f.z_aux), 0.5);
  return f;
}

Tape::Id score_pairs(Tape& t, Tape::Id fused, int num_users, const std::vector<int>& users,
                     const std::vector<int>& items) {
  if (users.size() != items.size())
    throw std::invalid_argument("score_pairs: user/item count mismatch");
  std::vector<int> item_rows(items.size());
  for (size_t j = 0; j < items.size(); ++j) item_rows[j] = num_users + items[j];
  return t.rows_dot(t.gather_rows(fused, users), t.gather_rows(fused, item_rows));
}

}  // namespace gcib
