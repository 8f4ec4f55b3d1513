#pragma once

#include <vector>

#include "gcib/model.hpp"
#include "gcib/tape.hpp"

namespace gcib {

// One optimization step's worth of supervision: positives from the target
// behavior, one sampled negative each, plus the node sample feeding the
// bottleneck term.
struct TrainBatch {
  std::vector<int> users;
  std::vector<int> pos_items;
  std::vector<int> neg_items;
  std::vector<int> hsic_nodes;  // global node indices (items offset by M)
};

// mean over pairs of -ln sigmoid(score_pos - score_neg)
Tape::Id bpr_loss(Tape& t, Tape::Id pos_scores, Tape::Id neg_scores);

// Cross-view InfoNCE with in-batch negatives: every anchor row is pulled
// toward its own row in the other view against all other anchors.
// anchor_rows are global node indices into both embeddings.
Tape::Id infonce_in_batch(Tape& t, Tape::Id z_a, Tape::Id z_b,
                          const std::vector<int>& anchor_rows, double tau);

// Mean over auxiliary behaviors of the empirical HSIC between the gated and
// raw representations of the sampled nodes.
Tape::Id ib_loss(Tape& t, const Forward& fwd, const std::vector<int>& hsic_nodes, double sigma);

// Sum of squared parameters (weight-decay convention).
Tape::Id l2_penalty(Tape& t, const StateLeaves& sl);

struct LossNodes {
  Tape::Id bpr = -1;
  Tape::Id ib = -1;  // -1 when the ablation removes the term
  Tape::Id cl = -1;
  Tape::Id l2 = -1;
  Tape::Id total = -1;
};

// total = bpr + beta*ib + lambda*cl + gamma*l2, with terms dropped according
// to the ablation.
LossNodes total_loss(Tape& t, const Forward& fwd, const StateLeaves& sl, const TrainBatch& batch,
                     int num_users, const Hyperparams& hp, Ablation ab);

}  // namespace gcib
