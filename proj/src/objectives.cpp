#include "gcib/objectives.hpp"

#include <algorithm>
#include <stdexcept>

namespace gcib {

Tape::Id bpr_loss(Tape& t, Tape::Id pos_scores, Tape::Id neg_scores) {
  const Mat &p = t.val(pos_scores), &n = t.val(neg_scores);
  if (p.rows == 0) throw std::invalid_argument("bpr_loss: empty batch");
  if (p.rows != n.rows || p.cols != 1 || n.cols != 1)
    throw std::invalid_argument("bpr_loss: scores must be equal-length column vectors");
  // -ln sigmoid(pos - neg) == softplus(neg - pos)
  return t.mean_all(t.softplus(t.sub(neg_scores, pos_scores)));
}

Tape::Id infonce_in_batch(Tape& t, Tape::Id z_a, Tape::Id z_b,
                          const std::vector<int>& anchor_rows, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("infonce: tau must be > 0");
  if (anchor_rows.empty()) throw std::invalid_argument("infonce: no anchors");
  const Tape::Id a = t.l2_norm_rows(t.gather_rows(z_a, anchor_rows));
  const Tape::Id b = t.l2_norm_rows(t.gather_rows(z_b, anchor_rows));
  const Tape::Id sims = t.scale(t.matmul(a, t.transpose(b)), 1.0 / tau);
  const Tape::Id pos = t.scale(t.rows_dot(a, b), 1.0 / tau);  // the diagonal of sims
  return t.mean_all(t.sub(t.logsumexp_rows(sims), pos));
}

Tape::Id ib_loss(Tape& t, const Forward& fwd, const std::vector<int>& hsic_nodes, double sigma) {
  if (hsic_nodes.size() < 2) throw std::invalid_argument("ib_loss: need at least 2 hsic nodes");
  std::vector<Tape::Id> terms;
  terms.reserve(fwd.aux.size());
  for (const AuxForward& af : fwd.aux) {
    const Tape::Id x = t.gather_rows(af.repr_gated, hsic_nodes);
    const Tape::Id y = t.gather_rows(af.repr_raw, hsic_nodes);
    terms.push_back(t.hsic_from_grams(t.rbf_gram(x, sigma), t.rbf_gram(y, sigma)));
  }
  return t.mean_of(terms);
}

Tape::Id l2_penalty(Tape& t, const StateLeaves& sl) {
  Tape::Id total = t.sum_all(t.square(sl.e0));
  for (Tape::Id w : sl.w) total = t.add(total, t.sum_all(t.square(w)));
  for (Tape::Id b : sl.b) total = t.add(total, t.sum_all(t.square(b)));
  return total;
}

namespace {

std::vector<int> unique_sorted(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

LossNodes total_loss(Tape& t, const Forward& fwd, const StateLeaves& sl, const TrainBatch& batch,
                     int num_users, const Hyperparams& hp, Ablation ab) {
  LossNodes loss;
  const Tape::Id pos = score_pairs(t, fwd.fused, num_users, batch.users, batch.pos_items);
  const Tape::Id neg = score_pairs(t, fwd.fused, num_users, batch.users, batch.neg_items);
  loss.bpr = bpr_loss(t, pos, neg);
  loss.total = loss.bpr;

  const bool with_ib = ab == Ablation::none || ab == Ablation::no_global ||
                       ab == Ablation::no_infonce;
  const bool with_cl = ab == Ablation::none || ab == Ablation::no_global || ab == Ablation::no_ib;

  if (with_ib && hp.beta > 0.0) {
    loss.ib = ib_loss(t, fwd, batch.hsic_nodes, hp.rbf_sigma);
    loss.total = t.add(loss.total, t.scale(loss.ib, hp.beta));
  }
  if (with_cl && hp.lambda > 0.0) {
    const std::vector<int> user_anchors = unique_sorted(batch.users);
    std::vector<int> item_rows(batch.pos_items.size());
    for (size_t j = 0; j < batch.pos_items.size(); ++j) item_rows[j] = num_users + batch.pos_items[j];
    const std::vector<int> item_anchors = unique_sorted(std::move(item_rows));
    const Tape::Id user_cl = infonce_in_batch(t, fwd.z_tgt, fwd.z_aux, user_anchors, hp.tau);
    const Tape::Id item_cl = infonce_in_batch(t, fwd.z_tgt, fwd.z_aux, item_anchors, hp.tau);
    loss.cl = t.scale(t.add(user_cl, item_cl), 0.5);
    loss.total = t.add(loss.total, t.scale(loss.cl, hp.lambda));
  }
  if (hp.gamma > 0.0) {
    loss.l2 = l2_penalty(t, sl);
    loss.total = t.add(loss.total, t.scale(loss.l2, hp.gamma));
  }
  return loss;
}

}  // namespace gcib
