#include "gcib/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace gcib {

namespace {

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows) +
                              "x" + std::to_string(a.cols) + " vs " + std::to_string(b.rows) +
                              "x" + std::to_string(b.cols));
}

// (H A H)_ij = A_ij - rowmean_i - colmean_j + totalmean, with H = I - 11^T/n
Mat double_center(const Mat& a) {
  const int n = a.rows;
  Mat out(n, n);
  std::vector<double> rm(n, 0.0), cm(n, 0.0);
  double tm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = a(i, j);
      rm[i] += x;
      cm[j] += x;
      tm += x;
    }
  for (int i = 0; i < n; ++i) rm[i] /= n;
  for (int j = 0; j < n; ++j) cm[j] /= n;
  tm /= static_cast<double>(n) * n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = a(i, j) - rm[i] - cm[j] + tm;
  return out;
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Tape::Id Tape::push(Mat val, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(val), Mat{}, std::move(back)});
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::leaf(const Mat& m) { return push(m); }

const Mat& Tape::grad(Id id) const {
  if (!ran_backward_) throw std::logic_error("grad() before backward()");
  return nodes_[id].grad;
}

void Tape::backward(Id loss) {
  const Mat& lv = v(loss);
  if (lv.rows != 1 || lv.cols != 1) throw std::invalid_argument("backward: loss must be 1x1");
  for (Id i = 0; i <= loss; ++i)
    nodes_[i].grad = Mat(nodes_[i].val.rows, nodes_[i].val.cols, 0.0);
  nodes_[loss].grad(0, 0) = 1.0;
  ran_backward_ = true;
  for (Id i = loss; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back(*this);
}

Tape::Id Tape::add(Id a, Id b) {
  const Mat &va = v(a), &vb = v(b);
  if (!va.same_shape(vb)) shape_error("add", va, vb);
  Mat out = va;
  for (int k = 0; k < out.size(); ++k) out.a[k] += vb.a[k];
  const Id id = size();
  return push(std::move(out), [id, a, b](Tape& t) {
    const Mat& go = t.g(id);
    for (int k = 0; k < go.size(); ++k) {
      t.g(a).a[k] += go.a[k];
      t.g(b).a[k] += go.a[k];
    }
  });
}

Tape::Id Tape::sub(Id a, Id b) {
  const Mat &va = v(a), &vb = v(b);
  if (!va.same_shape(vb)) shape_error("sub", va, vb);
  Mat out = va;
  for (int k = 0; k < out.size(); ++k) out.a[k] -= vb.a[k];
  const Id id = size();
  return push(std::move(out), [id, a, b](Tape& t) {
    const Mat& go = t.g(id);
    for (int k = 0; k < go.size(); ++k) {
      t.g(a).a[k] += go.a[k];
      t.g(b).a[k] -= go.a[k];
    }
  });
}

Tape::Id Tape::mul(Id a, Id b) {
  const Mat &va = v(a), &vb = v(b);
  if (!va.same_shape(vb)) shape_error("mul", va, vb);
  Mat out = va;
  for (int k = 0; k < out.size(); ++k) out.a[k] *= vb.a[k];
  const Id id = size();
  return push(std::move(out), [id, a, b](Tape& t) {
    const Mat& go = t.g(id);
    const Mat &va = t.v(a), &vb = t.v(b);
    for (int k = 0; k < go.size(); ++k) {
      t.g(a).a[k] += go.a[k] * vb.a[k];
      t.g(b).a[k] += go.a[k] * va.a[k];
    }
  });
}

Tape::Id Tape::scale(Id a, double c) {
  Mat out = v(a);
  for (double& x : out.a) x *= c;
  const Id id = size();
  return push(std::move(out), [id, a, c](Tape& t) {
    const Mat& go = t.g(id);
    for (int k = 0; k < go.size(); ++k) t.g(a).a[k] += c * go.a[k];
  });
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Mat &va = v(a), &vb = v(b);
  if (va.cols != vb.rows) shape_error("matmul", va, vb);
  Mat out(va.rows, vb.cols);
  for (int i = 0; i < va.rows; ++i)
    for (int k = 0; k < va.cols; ++k) {
      const double x = va(i, k);
      if (x == 0.0) continue;
      const double* brow = vb.row(k);
      double* orow = out.row(i);
      for (int j = 0; j < vb.cols; ++j) orow[j] += x * brow[j];
    }
  const Id id = size();
  return push(std::move(out), [id, a, b](Tape& t) {
    const Mat& go = t.g(id);
    const Mat &va = t.v(a), &vb = t.v(b);
    Mat &ga = t.g(a), &gb = t.g(b);
    // dA += G B^T ; dB += A^T G
    for (int i = 0; i < va.rows; ++i)
      for (int k = 0; k < va.cols; ++k) {
        const double* grow = go.row(i);
        const double* brow = vb.row(k);
        double s = 0.0;
        for (int j = 0; j < vb.cols; ++j) s += grow[j] * brow[j];
        ga(i, k) += s;
      }
    for (int k = 0; k < va.cols; ++k)
      for (int j = 0; j < vb.cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < va.rows; ++i) s += va(i, k) * go(i, j);
        gb(k, j) += s;
      }
  });
}

Tape::Id Tape::transpose(Id a) {
  const Mat& va = v(a);
  Mat out(va.cols, va.rows);
  for (int i = 0; i < va.rows; ++i)
    for (int j = 0; j < va.cols; ++j) out(j, i) = va(i, j);
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const Mat& go = t.g(id);
    Mat& ga = t.g(a);
    for (int i = 0; i < ga.rows; ++i)
      for (int j = 0; j < ga.cols; ++j) ga(i, j) += go(j, i);
  });
}

Tape::Id Tape::concat_rows(Id a, Id b) {
  const Mat &va = v(a), &vb = v(b);
  if (va.rows != vb.rows) shape_error("concat_rows", va, vb);
  Mat out(va.rows, va.cols + vb.cols);
  for (int i = 0; i < va.rows; ++i) {
    double* orow = out.row(i);
    const double* arow = va.row(i);
    const double* brow = vb.row(i);
    for (int j = 0; j < va.cols; ++j) orow[j] = arow[j];
    for (int j = 0; j < vb.cols; ++j) orow[va.cols + j] = brow[j];
  }
  const Id id = size();
  const int ac = va.cols, bc = vb.cols;
  return push(std::move(out), [id, a, b, ac, bc](Tape& t) {
    const Mat& go = t.g(id);
    Mat &ga = t.g(a), &gb = t.g(b);
    for (int i = 0; i < go.rows; ++i) {
      const double* grow = go.row(i);
      for (int j = 0; j < ac; ++j) ga(i, j) += grow[j];
      for (int j = 0; j < bc; ++j) gb(i, j) += grow[ac + j];
    }
  });
}

Tape::Id Tape::gather_rows(Id a, std::vector<int> idx) {
  const Mat& va = v(a);
  for (int r : idx)
    if (r < 0 || r >= va.rows) throw std::out_of_range("gather_rows: row index out of range");
  Mat out(static_cast<int>(idx.size()), va.cols);
  for (size_t r = 0; r < idx.size(); ++r) {
    const double* src = va.row(idx[r]);
    double* dst = out.row(static_cast<int>(r));
    for (int j = 0; j < va.cols; ++j) dst[j] = src[j];
  }
  const Id id = size();
  return push(std::move(out), [id, a, idx = std::move(idx)](Tape& t) {
    const Mat& go = t.g(id);
    Mat& ga = t.g(a);
    for (size_t r = 0; r < idx.size(); ++r) {
      const double* grow = go.row(static_cast<int>(r));
      double* dst = ga.row(idx[r]);
      for (int j = 0; j < go.cols; ++j) dst[j] += grow[j];
    }
  });
}

Tape::Id Tape::row_mean(Id a) {
  const Mat& va = v(a);
  if (va.rows == 0) throw std::invalid_argument("row_mean: empty input");
  Mat out(1, va.cols);
  for (int i = 0; i < va.rows; ++i)
    for (int j = 0; j < va.cols; ++j) out(0, j) += va(i, j);
  for (int j = 0; j < va.cols; ++j) out(0, j) /= va.rows;
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const Mat& go = t.g(id);
    Mat& ga = t.g(a);
    for (int i = 0; i < ga.rows; ++i)
      for (int j = 0; j < ga.cols; ++j) ga(i, j) += go(0, j) / ga.rows;
  });
}

Tape::Id Tape::mean_of(const std::vector<Id>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty input");
  const Mat& first = v(xs[0]);
  for (Id x : xs)
    if (!v(x).same_shape(first)) shape_error("mean_of", v(x), first);
  Mat out(first.rows, first.cols);
  for (Id x : xs) {
    const Mat& vx = v(x);
    for (int k = 0; k < out.size(); ++k) out.a[k] += vx.a[k];
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (double& x : out.a) x *= inv;
  const Id id = size();
  return push(std::move(out), [id, xs, inv](Tape& t) {
    const Mat& go = t.g(id);
    for (Id x : xs) {
      Mat& gx = t.g(x);
      for (int k = 0; k < go.size(); ++k) gx.a[k] += inv * go.a[k];
    }
  });
}

Tape::Id Tape::rows_dot(Id a, Id b) {
  const Mat &va = v(a), &vb = v(b);
  if (!va.same_shape(vb)) shape_error("rows_dot", va, vb);
  Mat out(va.rows, 1);
  for (int i = 0; i < va.rows; ++i) {
    const double *ar = va.row(i), *br = vb.row(i);
    double s = 0.0;
    for (int j = 0; j < va.cols; ++j) s += ar[j] * br[j];
    out(i, 0) = s;
  }
  const Id id = size();
  return push(std::move(out), [id, a, b](Tape& t) {
    const Mat& go = t.g(id);
    const Mat &va = t.v(a), &vb = t.v(b);
    Mat &ga = t.g(a), &gb = t.g(b);
    for (int i = 0; i < va.rows; ++i) {
      const double gi = go(i, 0);
      for (int j = 0; j < va.cols; ++j) {
        ga(i, j) += gi * vb(i, j);
        gb(i, j) += gi * va(i, j);
      }
    }
  });
}

Tape::Id Tape::sigmoid(Id a) {
  Mat out = v(a);
  for (double& x : out.a) x = sigmoid_scalar(x);
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& vo = t.v(id);
    Mat& ga = t.g(a);
    for (int k = 0; k < go.size(); ++k) ga.a[k] += go.a[k] * vo.a[k] * (1.0 - vo.a[k]);
  });
}

Tape::Id Tape::exp(Id a) {
  Mat out = v(a);
  for (double& x : out.a) x = std::exp(x);
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& vo = t.v(id);
    Mat& ga = t.g(a);
    for (int k = 0; k < go.size(); ++k) ga.a[k] += go.a[k] * vo.a[k];
  });
}

Tape::Id Tape::log(Id a) {
  Mat out = v(a);
  for (double& x : out.a) {
    if (!(x > 0.0)) throw std::domain_error("log: non-positive input");
    x = std::log(x);
  }
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& va = t.v(a);
    Mat& ga = t.g(a);
    for (int k = 0; k < go.size(); ++k) ga.a[k] += go.a[k] / va.a[k];
  });
}

Tape::Id Tape::square(Id a) {
  Mat out = v(a);
  for (double& x : out.a) x *= x;
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& va = t.v(a);
    Mat& ga = t.g(a);
    for (int k = 0; k < go.size(); ++k) ga.a[k] += 2.0 * go.a[k] * va.a[k];
  });
}

Tape::Id Tape::sqrt(Id a) {
  Mat out = v(a);
  for (double& x : out.a) {
    if (x < 0.0) throw std::domain_error("sqrt: negative input");
    x = std::sqrt(x);
  }
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& vo = t.v(id);
    Mat& ga = t.g(a);
    for (int k = 0; k < go.size(); ++k) ga.a[k] += go.a[k] * 0.5 / vo.a[k];
  });
}

Tape::Id Tape::softplus(Id a) {
  Mat out = v(a);
  for (double& x : out.a) x = stable_softplus(x);
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& va = t.v(a);
    Mat& ga = t.g(a);
    for (int k = 0; k < go.size(); ++k) ga.a[k] += go.a[k] * sigmoid_scalar(va.a[k]);
  });
}

Tape::Id Tape::l2_norm_rows(Id a) {
  const Mat& va = v(a);
  Mat out(va.rows, va.cols);
  std::vector<double> norms(va.rows);
  for (int i = 0; i < va.rows; ++i) {
    const double* ar = va.row(i);
    double s = 0.0;
    for (int j = 0; j < va.cols; ++j) s += ar[j] * ar[j];
    const double n = std::sqrt(s);
    if (!(n > 0.0)) throw std::domain_error("l2_norm_rows: zero-norm row");
    norms[i] = n;
    double* orow = out.row(i);
    for (int j = 0; j < va.cols; ++j) orow[j] = ar[j] / n;
  }
  const Id id = size();
  return push(std::move(out), [id, a, norms = std::move(norms)](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& vo = t.v(id);  // unit rows
    Mat& ga = t.g(a);
    for (int i = 0; i < go.rows; ++i) {
      const double* grow = go.row(i);
      const double* yrow = vo.row(i);
      double dot = 0.0;
      for (int j = 0; j < go.cols; ++j) dot += grow[j] * yrow[j];
      for (int j = 0; j < go.cols; ++j) ga(i, j) += (grow[j] - dot * yrow[j]) / norms[i];
    }
  });
}

Tape::Id Tape::add_scalar(Id a, Id s) {
  const Mat& vs = v(s);
  if (vs.rows != 1 || vs.cols != 1) throw std::invalid_argument("add_scalar: s must be 1x1");
  Mat out = v(a);
  for (double& x : out.a) x += vs(0, 0);
  const Id id = size();
  return push(std::move(out), [id, a, s](Tape& t) {
    const Mat& go = t.g(id);
    Mat& ga = t.g(a);
    double sum = 0.0;
    for (int k = 0; k < go.size(); ++k) {
      ga.a[k] += go.a[k];
      sum += go.a[k];
    }
    t.g(s)(0, 0) += sum;
  });
}

Tape::Id Tape::logsumexp_rows(Id a) {
  const Mat& va = v(a);
  Mat out(va.rows, 1);
  for (int i = 0; i < va.rows; ++i) {
    const double* ar = va.row(i);
    double m = ar[0];
    for (int j = 1; j < va.cols; ++j) m = std::max(m, ar[j]);
    double s = 0.0;
    for (int j = 0; j < va.cols; ++j) s += std::exp(ar[j] - m);
    out(i, 0) = m + std::log(s);
  }
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& vo = t.v(id);
    const Mat& va = t.v(a);
    Mat& ga = t.g(a);
    for (int i = 0; i < va.rows; ++i) {
      const double gi = go(i, 0);
      for (int j = 0; j < va.cols; ++j) ga(i, j) += gi * std::exp(va(i, j) - vo(i, 0));
    }
  });
}

Tape::Id Tape::sum_all(Id a) {
  const Mat& va = v(a);
  double s = 0.0;
  for (double x : va.a) s += x;
  Mat out(1, 1);
  out(0, 0) = s;
  const Id id = size();
  return push(std::move(out), [id, a](Tape& t) {
    const double go = t.g(id)(0, 0);
    Mat& ga = t.g(a);
    for (int k = 0; k < ga.size(); ++k) ga.a[k] += go;
  });
}

Tape::Id Tape::mean_all(Id a) {
  const Mat& va = v(a);
  if (va.size() == 0) throw std::invalid_argument("mean_all: empty input");
  return scale(sum_all(a), 1.0 / va.size());
}

Tape::Id Tape::propagate(const BipartiteGraph& g, Id emb) {
  return propagate_gated(g, -1, emb);
}

Tape::Id Tape::propagate_gated(const BipartiteGraph& g, Id gates, Id emb) {
  const Mat& ve = v(emb);
  if (ve.rows != g.nodes())
    throw std::invalid_argument("propagate: embedding rows " + std::to_string(ve.rows) +
                                " != nodes " + std::to_string(g.nodes()));
  const double* gate_vals = nullptr;
  if (gates >= 0) {
    const Mat& vg = v(gates);
    if (vg.rows != g.edge_count() || vg.cols != 1)
      throw std::invalid_argument("propagate: gate vector must be |E| x 1");
    gate_vals = vg.a.data();
  }
  const int m = g.num_users, d = ve.cols;
  Mat out(g.nodes(), d);
  for (int e = 0; e < g.edge_count(); ++e) {
    const auto& [u, i] = g.edges[e];
    const double w = gate_vals ? g.norm_coeff[e] * gate_vals[e] : g.norm_coeff[e];
    const double* item_row = ve.row(m + i);
    const double* user_row = ve.row(u);
    double* out_user = out.row(u);
    double* out_item = out.row(m + i);
    for (int j = 0; j < d; ++j) {
      out_user[j] += w * item_row[j];
      out_item[j] += w * user_row[j];
    }
  }
  const Id id = size();
  const BipartiteGraph* gp = &g;
  return push(std::move(out), [id, emb, gates, gp](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& ve = t.v(emb);
    Mat& ge = t.g(emb);
    const int m = gp->num_users, d = ve.cols;
    const double* gate_vals = gates >= 0 ? t.v(gates).a.data() : nullptr;
    for (int e = 0; e < gp->edge_count(); ++e) {
      const auto& [u, i] = gp->edges[e];
      const double w = gate_vals ? gp->norm_coeff[e] * gate_vals[e] : gp->norm_coeff[e];
      const double* go_user = go.row(u);
      const double* go_item = go.row(m + i);
      double* ge_user = ge.row(u);
      double* ge_item = ge.row(m + i);
      for (int j = 0; j < d; ++j) {
        // adjoint of the symmetric bipartite operator
        ge_item[j] += w * go_user[j];
        ge_user[j] += w * go_item[j];
      }
      if (gates >= 0) {
        const double* user_row = ve.row(u);
        const double* item_row = ve.row(m + i);
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += go_user[j] * item_row[j] + go_item[j] * user_row[j];
        t.g(gates)(e, 0) += gp->norm_coeff[e] * s;
      }
    }
  });
}

Tape::Id Tape::rbf_gram(Id x, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("rbf_gram: sigma must be > 0");
  const Mat& vx = v(x);
  const int n = vx.rows, d = vx.cols;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  Mat out(n, n);
  for (int i = 0; i < n; ++i) {
    out(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double *xi = vx.row(i), *xj = vx.row(j);
      double d2 = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = xi[k] - xj[k];
        d2 += diff * diff;
      }
      const double kij = std::exp(-d2 * inv2s2);
      out(i, j) = kij;
      out(j, i) = kij;
    }
  }
  const Id id = size();
  const double inv_s2 = 1.0 / (sigma * sigma);
  return push(std::move(out), [id, x, inv_s2](Tape& t) {
    const Mat& go = t.g(id);
    const Mat& ko = t.v(id);
    const Mat& vx = t.v(x);
    Mat& gx = t.g(x);
    const int n = vx.rows, d = vx.cols;
    // dK_ij/dx_i = -K_ij (x_i - x_j)/sigma^2; gradients from G_ij and G_ji
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double s = -(go(i, j) + go(j, i)) * ko(i, j) * inv_s2;
        if (s == 0.0) continue;
        const double *xi = vx.row(i), *xj = vx.row(j);
        double *gi = gx.row(i), *gj = gx.row(j);
        for (int k = 0; k < d; ++k) {
          const double diff = xi[k] - xj[k];
          gi[k] += s * diff;
          gj[k] -= s * diff;
        }
      }
  });
}

Tape::Id Tape::hsic_from_grams(Id kx, Id ky) {
  const Mat &vx = v(kx), &vy = v(ky);
  if (vx.rows != vx.cols || vy.rows != vy.cols) throw std::invalid_argument("hsic: grams must be square");
  if (vx.rows != vy.rows) shape_error("hsic", vx, vy);
  const int n = vx.rows;
  if (n < 2) throw std::invalid_argument("hsic: need at least 2 samples");
  const double inv = 1.0 / (static_cast<double>(n - 1) * (n - 1));
  const Mat cy = double_center(vy);
  double s = 0.0;
  // Tr(Kx H Ky H) = sum_ij Kx_ij (H Ky H)_ji
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += vx(i, j) * cy(j, i);
  Mat out(1, 1);
  out(0, 0) = s * inv;
  const Id id = size();
  return push(std::move(out), [id, kx, ky, inv](Tape& t) {
    const double go = t.g(id)(0, 0);
    const Mat cy = double_center(t.v(ky));
    const Mat cx = double_center(t.v(kx));
    Mat &gx = t.g(kx), &gy = t.g(ky);
    const int n = cx.rows;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        gx(i, j) += go * inv * cy(j, i);
        gy(i, j) += go * inv * cx(j, i);
      }
  });
}

double grad_check(const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& f,
                  const std::vector<Mat*>& params, double h) {
  const auto eval = [&]() -> double {
    Tape t;
    std::vector<Tape::Id> leaves;
    leaves.reserve(params.size());
    for (const Mat* p : params) leaves.push_back(t.leaf(*p));
    const Tape::Id loss = f(t, leaves);
    const double value = t.val(loss)(0, 0);
    if (!std::isfinite(value)) throw std::runtime_error("grad_check: non-finite loss");
    return value;
  };

  // analytic gradients
  std::vector<Mat> analytic;
  {
    Tape t;
    std::vector<Tape::Id> leaves;
    for (const Mat* p : params) leaves.push_back(t.leaf(*p));
    const Tape::Id loss = f(t, leaves);
    if (!std::isfinite(t.val(loss)(0, 0))) throw std::runtime_error("grad_check: non-finite loss");
    t.backward(loss);
    for (Tape::Id l : leaves) analytic.push_back(t.grad(l));
  }

  double max_rel = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Mat& pm = *params[p];
    for (int k = 0; k < pm.size(); ++k) {
      const double orig = pm.a[k];
      pm.a[k] = orig + h;
      const double fp = eval();
      pm.a[k] = orig - h;
      const double fm = eval();
      pm.a[k] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[p].a[k];
      const double rel = std::abs(an - fd) / std::max(1.0, std::abs(an));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace gcib
