#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gcib/objectives.hpp"
#include "test_util.hpp"
#include "toy.hpp"

using namespace gcib;
using testutil::random_mat;

namespace {

double hsic_value(const Mat& x, const Mat& y, double sigma) {
  Tape t;
  return t.val(t.hsic_from_grams(t.rbf_gram(t.leaf(x), sigma), t.rbf_gram(t.leaf(y), sigma)))(0, 0);
}

}  // namespace

TEST_CASE("bpr loss equals ln 2 at a zero margin and vanishes when saturated") {
  Tape t;
  Mat pos(3, 1, 1.0), neg(3, 1, 1.0);
  const auto l = bpr_loss(t, t.leaf(pos), t.leaf(neg));
  CHECK(t.val(l)(0, 0) == doctest::Approx(0.693147).epsilon(1e-6));

  Tape t2;
  Mat wide_pos(2, 1, 21.0), wide_neg(2, 1, 1.0);
  const auto l2 = bpr_loss(t2, t2.leaf(wide_pos), t2.leaf(wide_neg));
  CHECK(t2.val(l2)(0, 0) < 1e-8);

  Tape t3;
  CHECK_THROWS(bpr_loss(t3, t3.leaf(Mat(0, 1)), t3.leaf(Mat(0, 1))));
}

TEST_CASE("bpr gradient raises positive scores and lowers negative scores") {
  Tape t;
  Mat pos(1, 1, 0.3), neg(1, 1, 0.4);
  const auto pl = t.leaf(pos), nl = t.leaf(neg);
  const auto l = bpr_loss(t, pl, nl);
  t.backward(l);
  CHECK(t.grad(pl)(0, 0) < 0.0);  // decreasing loss direction is +pos
  CHECK(t.grad(nl)(0, 0) > 0.0);
}

TEST_CASE("rbf gram has a unit diagonal and the e^-1 closed form") {
  const double sigma = 0.7;
  Mat x(2, 2);
  x(1, 0) = std::sqrt(2.0) * sigma;  // squared distance 2 sigma^2
  Tape t;
  const auto k = t.rbf_gram(t.leaf(x), sigma);
  CHECK(t.val(k)(0, 0) == doctest::Approx(1.0));
  CHECK(t.val(k)(1, 1) == doctest::Approx(1.0));
  CHECK(t.val(k)(0, 1) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(t.val(k)(1, 0) == t.val(k)(0, 1));
}

TEST_CASE("rbf gram matrices are positive semidefinite") {
  const Mat x = random_mat(12, 4, 33);
  Tape t;
  const auto k = t.rbf_gram(t.leaf(x), 1.1);
  std::vector<std::vector<double>> a(12, std::vector<double>(12));
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) a[i][j] = t.val(k)(i, j);
  const auto eig = testutil::jacobi_eigenvalues(a);
  for (double e : eig) CHECK(e >= -1e-10);
}

TEST_CASE("hsic vanishes when one side is constant") {
  const Mat x = random_mat(8, 3, 41);
  Mat y(8, 3);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 3; ++j) y(i, j) = 2.0;  // identical rows: K_Y is all ones
  CHECK(hsic_value(x, y, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("hsic closed form at n=2: (1-Kx)(1-Ky)") {
  const double sigma = 0.8;
  Mat x(2, 2), y(2, 2);
  x(0, 0) = 0.3;
  x(1, 1) = -0.9;
  y(0, 1) = 1.4;
  y(1, 0) = 0.2;
  Tape t;
  const auto kx = t.rbf_gram(t.leaf(x), sigma);
  const auto ky = t.rbf_gram(t.leaf(y), sigma);
  const double expected = (1.0 - t.val(kx)(0, 1)) * (1.0 - t.val(ky)(0, 1));
  const double got = t.val(t.hsic_from_grams(kx, ky))(0, 0);
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("hsic matches the naive centered-trace oracle") {
  for (unsigned trial = 0; trial < 8; ++trial) {
    const Mat x = random_mat(16, 5, 100 + trial);
    const Mat y = random_mat(16, 5, 200 + trial);
    const double sigma = 1.3;
    CHECK(hsic_value(x, y, sigma) ==
          doctest::Approx(testutil::naive_hsic(x, y, sigma)).epsilon(0).scale(1).epsilon(1e-10));
  }
}

TEST_CASE("hsic is symmetric, nonnegative and permutation-equivariant") {
  const Mat x = random_mat(10, 4, 55);
  const Mat y = random_mat(10, 4, 56);
  const double sigma = 1.0;
  CHECK(hsic_value(x, y, sigma) == doctest::Approx(hsic_value(y, x, sigma)).epsilon(1e-14));
  CHECK(hsic_value(x, y, sigma) >= -1e-10);

  // identical row permutation of both sides leaves the value unchanged
  std::vector<int> perm{3, 1, 4, 0, 2, 9, 6, 8, 5, 7};
  Mat xp(10, 4), yp(10, 4);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 4; ++j) {
      xp(i, j) = x(perm[i], j);
      yp(i, j) = y(perm[i], j);
    }
  CHECK(hsic_value(xp, yp, sigma) == doctest::Approx(hsic_value(x, y, sigma)).epsilon(1e-12));
}

TEST_CASE("hsic separates dependent data from shuffled data") {
  // hsic(X, X) against row-shuffled copies, n=64 d=8 Gaussian
  const int n = 64, d = 8;
  const double sigma = std::sqrt(static_cast<double>(d));
  const Mat x = random_mat(n, d, 77);
  const double dependent = hsic_value(x, x, sigma);
  std::mt19937 gen(78);
  int wins = 0;
  std::vector<int> perm(n);
  for (int trial = 0; trial < 100; ++trial) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    Mat shuffled(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) shuffled(i, j) = x(perm[i], j);
    if (dependent > hsic_value(x, shuffled, sigma)) ++wins;
  }
  CHECK(wins >= 95);
}

TEST_CASE("ib loss averages behaviors and validates the node sample") {
  Hyperparams hp;
  hp.dim = 4;
  hp.batch_size = 8;
  hp.hsic_batch = 6;
  const auto toy = testutil::make_toy(8, 10, 3, hp, 5);
  Tape t;
  const auto sl = make_leaves(t, toy.state);
  const auto fwd =
      build_forward(t, sl, toy.graphs, toy.ds.target, toy.aux, hp, Ablation::none, &toy.noise);

  CHECK_THROWS(ib_loss(t, fwd, {3}, hp.rbf_sigma));  // fewer than 2 nodes

  // single-behavior mean equals the lone term; with two behaviors it is the average
  const auto full = ib_loss(t, fwd, toy.batch.hsic_nodes, hp.rbf_sigma);
  double acc = 0.0;
  for (const AuxForward& af : fwd.aux) {
    const auto xg = t.gather_rows(af.repr_gated, toy.batch.hsic_nodes);
    const auto yr = t.gather_rows(af.repr_raw, toy.batch.hsic_nodes);
    acc += t.val(t.hsic_from_grams(t.rbf_gram(xg, hp.rbf_sigma), t.rbf_gram(yr, hp.rbf_sigma)))(0, 0);
  }
  CHECK(t.val(full)(0, 0) == doctest::Approx(acc / fwd.aux.size()).epsilon(1e-12));
}

TEST_CASE("ib loss with open gates reduces to self-dependence, which is positive") {
  Hyperparams hp;
  hp.dim = 4;
  hp.batch_size = 8;
  hp.hsic_batch = 8;
  const auto toy = testutil::make_toy(8, 10, 2, hp, 6);
  Tape t;
  const auto sl = make_leaves(t, toy.state);
  // gates forced open: the two stacks coincide, so the penalty is hsic(E, E)
  const auto fwd =
      build_forward(t, sl, toy.graphs, toy.ds.target, toy.aux, hp, Ablation::no_ib, nullptr);
  const auto l = ib_loss(t, fwd, toy.batch.hsic_nodes, hp.rbf_sigma);
  CHECK(t.val(l)(0, 0) > 0.0);
}

TEST_CASE("infonce with a single anchor is zero") {
  Tape t;
  const Mat za = random_mat(6, 4, 61);
  const Mat zb = random_mat(6, 4, 62);
  const auto l = infonce_in_batch(t, t.leaf(za), t.leaf(zb), {2}, 0.2);
  CHECK(t.val(l)(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("infonce with the positive and n negatives at equal similarity is ln(n+1)") {
  // identical rows everywhere: every cosine is 1, so the softmax is uniform
  // over the positive and its n in-batch negatives
  const int n = 5;
  Mat za(n + 1, 3), zb(n + 1, 3);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j < 3; ++j) {
      za(i, j) = 1.0 + j;
      zb(i, j) = 2.0 * (1.0 + j);
    }
  std::vector<int> anchors(n + 1);
  std::iota(anchors.begin(), anchors.end(), 0);
  Tape t;
  const auto l = infonce_in_batch(t, t.leaf(za), t.leaf(zb), anchors, 0.5);
  CHECK(t.val(l)(0, 0) == doctest::Approx(std::log(n + 1.0)).epsilon(1e-12));
}

TEST_CASE("infonce decreases when the positive similarity rises with negatives fixed") {
  // the loss core on a free similarity matrix: mean of lse(row) - diagonal;
  // only the diagonal entry moves, so the negatives stay untouched
  Mat s = random_mat(4, 4, 63);
  Mat eye(4, 4);
  for (int i = 0; i < 4; ++i) eye(i, i) = 1.0;
  const auto loss_value = [&](const Mat& sims) {
    Tape t;
    const auto leaf = t.leaf(sims);
    const auto l = t.mean_all(t.sub(t.logsumexp_rows(leaf), t.rows_dot(leaf, t.leaf(eye))));
    return t.val(l)(0, 0);
  };
  const double base = loss_value(s);
  for (int i = 0; i < 4; ++i) {
    Mat up = s;
    up(i, i) += 0.05;
    CHECK(loss_value(up) < base);
  }
}

TEST_CASE("infonce is invariant to positive rescaling of the embeddings") {
  Mat za = random_mat(5, 4, 65);
  Mat zb = random_mat(5, 4, 66);
  std::vector<int> anchors{0, 1, 2, 3, 4};
  Tape t;
  const auto l = infonce_in_batch(t, t.leaf(za), t.leaf(zb), anchors, 0.25);
  Mat za_scaled = za, zb_scaled = zb;
  for (double& x : za_scaled.a) x *= 7.5;
  for (double& x : zb_scaled.a) x *= 0.02;
  const auto l2 = infonce_in_batch(t, t.leaf(za_scaled), t.leaf(zb_scaled), anchors, 0.25);
  CHECK(t.val(l2)(0, 0) == doctest::Approx(t.val(l)(0, 0)).epsilon(1e-12));
}

TEST_CASE("infonce rejects zero-norm rows and bad temperatures") {
  Tape t;
  Mat za(2, 3);  // zero rows
  const Mat zb = random_mat(2, 3, 67);
  CHECK_THROWS(infonce_in_batch(t, t.leaf(za), t.leaf(zb), {0, 1}, 0.2));
  CHECK_THROWS(infonce_in_batch(t, t.leaf(zb), t.leaf(zb), {0, 1}, 0.0));
}

TEST_CASE("total loss reduces to bpr when every extra weight is zero") {
  Hyperparams hp;
  hp.dim = 4;
  hp.batch_size = 8;
  hp.hsic_batch = 6;
  hp.beta = 0.0;
  hp.lambda = 0.0;
  hp.gamma = 0.0;
  const auto toy = testutil::make_toy(8, 10, 2, hp, 7);
  Tape t;
  const auto sl = make_leaves(t, toy.state);
  const auto fwd =
      build_forward(t, sl, toy.graphs, toy.ds.target, toy.aux, hp, Ablation::none, &toy.noise);
  const auto loss = total_loss(t, fwd, sl, toy.batch, toy.ds.num_users, hp, Ablation::none);
  CHECK(loss.ib == -1);
  CHECK(loss.cl == -1);
  CHECK(loss.l2 == -1);
  CHECK(t.val(loss.total)(0, 0) == t.val(loss.bpr)(0, 0));
}

TEST_CASE("doubling lambda doubles the contrastive contribution exactly") {
  Hyperparams hp;
  hp.dim = 4;
  hp.batch_size = 8;
  hp.hsic_batch = 6;
  hp.beta = 0.0;
  hp.gamma = 0.0;
  hp.lambda = 0.1;
  const auto toy = testutil::make_toy(8, 10, 2, hp, 8);

  const auto eval_total = [&](double lambda) {
    Hyperparams h2 = hp;
    h2.lambda = lambda;
    testutil::ToyInstance t2 = toy;
    t2.hp = h2;
    Tape t;
    std::vector<Tape::Id> leaves;
    for (const Mat* p : t2.state.params()) leaves.push_back(t.leaf(*p));
    const auto id = testutil::toy_loss(t, leaves, t2, Ablation::none);
    return t.val(id)(0, 0);
  };
  const double base = eval_total(0.0);
  const double once = eval_total(0.1);
  const double twice = eval_total(0.2);
  CHECK(twice - base == doctest::Approx(2.0 * (once - base)).epsilon(1e-10));
}

TEST_CASE("full objective gradients pass finite differences on a toy instance") {
  Hyperparams hp;
  hp.dim = 3;
  hp.batch_size = 6;
  hp.hsic_batch = 6;
  hp.beta = 1.0;
  hp.lambda = 0.2;
  hp.gamma = 1e-4;
  testutil::ToyInstance toy = testutil::make_toy(6, 8, 3, hp, 9);
  const double err = grad_check(
      [&](Tape& t, const std::vector<Tape::Id>& leaves) {
        return testutil::toy_loss(t, leaves, toy, Ablation::none);
      },
      toy.state.params());
  CHECK(err < 1e-4);
}
