#pragma once

#include <functional>
#include <vector>

#include "gcib/graph.hpp"
#include "gcib/mat.hpp"

namespace gcib {

// Reverse-mode tape over dense matrices plus the sparse bipartite propagation
// kernel. A tape is recorded per training step and discarded; leaf nodes copy
// parameter values in, gradients accumulate tape-locally and are read back
// after backward(). All math is in 64-bit floats.
class Tape {
 public:
  using Id = int;

  Id leaf(const Mat& m);
  Id constant(Mat m) { return leaf(m); }

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);  // elementwise
  Id scale(Id a, double c);
  Id neg(Id a) { return scale(a, -1.0); }
  Id matmul(Id a, Id b);
  Id transpose(Id a);
  // row r of the result = [row r of a, row r of b]
  Id concat_rows(Id a, Id b);
  Id gather_rows(Id a, std::vector<int> idx);
  Id row_mean(Id a);  // 1 x cols
  Id mean_of(const std::vector<Id>& xs);
  Id rows_dot(Id a, Id b);  // n x 1
  Id sigmoid(Id a);
  Id exp(Id a);
  Id log(Id a);   // rejects non-positive input
  Id square(Id a);
  Id sqrt(Id a);  // rejects negative input
  Id softplus(Id a);
  Id l2_norm_rows(Id a);  // rows rescaled to unit L2 norm; rejects zero rows
  Id add_scalar(Id a, Id s);  // s is 1x1, broadcast over a
  Id logsumexp_rows(Id a);    // n x 1
  Id sum_all(Id a);   // 1 x 1
  Id mean_all(Id a);  // 1 x 1

  // LightGCN step: user row u accumulates coeff * gate * item row, item row
  // accumulates symmetrically. Embedding rows: users first, then items.
  Id propagate(const BipartiteGraph& g, Id emb);
  Id propagate_gated(const BipartiteGraph& g, Id gates, Id emb);  // gates: |E| x 1

  Id rbf_gram(Id x, double sigma);        // K[i][j] = exp(-|xi-xj|^2 / (2 sigma^2))
  Id hsic_from_grams(Id kx, Id ky);       // (n-1)^-2 Tr(Kx H Ky H), H = I - 11^T/n

  void backward(Id loss);  // loss must be 1x1
  const Mat& val(Id id) const { return nodes_[id].val; }
  const Mat& grad(Id id) const;
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Tape&)> back;  // pull this node's grad into its inputs
  };

  Id push(Mat val, std::function<void(Tape&)> back = nullptr);
  Mat& g(Id id) { return nodes_[id].grad; }
  const Mat& v(Id id) const { return nodes_[id].val; }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// Max over all parameter coordinates of
//   |analytic - central difference| / max(1, |analytic|)
// for the scalar loss produced by `f`. `f` is re-invoked on a fresh tape for
// every perturbed evaluation, with leaves created from `params` in order.
double grad_check(const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& f,
                  const std::vector<Mat*>& params, double h = 1e-5);

}  // namespace gcib
