#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "gcib/tape.hpp"
#include "test_util.hpp"

using namespace gcib;
using testutil::graph_of;
using testutil::random_mat;

namespace {

Mat mat_of(int rows, int cols, std::initializer_list<double> vals) {
  Mat m(rows, cols);
  int k = 0;
  for (double v : vals) m.a[k++] = v;
  return m;
}

// finite-difference check for a unary construction
double fd_check(const std::function<Tape::Id(Tape&, Tape::Id)>& build, Mat x) {
  return grad_check(
      [&](Tape& t, const std::vector<Tape::Id>& leaves) {
        return t.mean_all(build(t, leaves[0]));
      },
      {&x});
}

}  // namespace

TEST_CASE("gather_rows picks basis rows and scatters gradients") {
  Tape t;
  Mat eye(3, 3);
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  const auto g = t.gather_rows(t.leaf(eye), {2});
  CHECK(t.val(g).rows == 1);
  CHECK(t.val(g)(0, 0) == 0.0);
  CHECK(t.val(g)(0, 2) == 1.0);

  // duplicate indices accumulate
  Mat x = random_mat(4, 2, 11);
  const double err = grad_check(
      [](Tape& tt, const std::vector<Tape::Id>& l) {
        return tt.mean_all(tt.gather_rows(l[0], {1, 1, 3}));
      },
      {&x});
  CHECK(err < 1e-6);
}

TEST_CASE("row_mean over identical rows returns the row") {
  Tape t;
  Mat m(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = 1.5 * (j + 1);
  const auto r = t.row_mean(t.leaf(m));
  CHECK(t.val(r).rows == 1);
  for (int j = 0; j < 3; ++j) CHECK(t.val(r)(0, j) == doctest::Approx(1.5 * (j + 1)));
}

TEST_CASE("matmul gradients agree with central differences on random 3x3") {
  Mat a = random_mat(3, 3, 1);
  Mat b = random_mat(3, 3, 2);
  const double err = grad_check(
      [](Tape& t, const std::vector<Tape::Id>& l) {
        return t.mean_all(t.matmul(l[0], l[1]));
      },
      {&a, &b});
  CHECK(err < 1e-6);
}

TEST_CASE("sigmoid value and derivative at zero") {
  Tape t;
  const auto s = t.sigmoid(t.leaf(Mat(1, 1, 0.0)));
  CHECK(t.val(s)(0, 0) == doctest::Approx(0.5));
  t.backward(s);
  // d sigmoid/dx at 0 = 0.25
  CHECK(t.grad(0)(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("elementwise op forward values") {
  Tape t;
  const auto x = t.leaf(mat_of(1, 4, {0.25, 1.0, 4.0, 9.0}));
  CHECK(t.val(t.sqrt(x))(0, 2) == doctest::Approx(2.0));
  CHECK(t.val(t.square(x))(0, 2) == doctest::Approx(16.0));
  CHECK(t.val(t.log(x))(0, 1) == doctest::Approx(0.0));
  CHECK(t.val(t.exp(t.leaf(Mat(1, 1, 0.0))))(0, 0) == doctest::Approx(1.0));
  CHECK(t.val(t.softplus(t.leaf(Mat(1, 1, 0.0))))(0, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("log and sqrt reject domain violations instead of producing NaN") {
  Tape t;
  CHECK_THROWS(t.log(t.leaf(Mat(1, 1, 0.0))));
  CHECK_THROWS(t.log(t.leaf(Mat(1, 1, -1.0))));
  CHECK_THROWS(t.sqrt(t.leaf(Mat(1, 1, -1e-9))));
}

TEST_CASE("l2_norm_rows leaves unit rows unchanged and rejects zero rows") {
  Tape t;
  Mat m = mat_of(2, 2, {1.0, 0.0, 0.0, -1.0});
  const auto out = t.l2_norm_rows(t.leaf(m));
  for (int k = 0; k < 4; ++k) CHECK(t.val(out).a[k] == doctest::Approx(m.a[k]));
  CHECK_THROWS(t.l2_norm_rows(t.leaf(Mat(1, 3, 0.0))));
}

TEST_CASE("elementwise and structural gradients pass finite differences") {
  Mat x = random_mat(3, 4, 7, 0.5);
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.sigmoid(a); }, x) < 1e-6);
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.exp(a); }, x) < 1e-6);
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.square(a); }, x) < 1e-6);
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.softplus(a); }, x) < 1e-6);
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.l2_norm_rows(a); }, x) < 1e-6);
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.logsumexp_rows(a); }, x) < 1e-6);
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.transpose(a); }, x) < 1e-6);
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.row_mean(a); }, x) < 1e-6);

  Mat pos = random_mat(3, 4, 8);
  for (double& v : pos.a) v = std::abs(v) + 0.5;
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.log(a); }, pos) < 1e-6);
  CHECK(fd_check([](Tape& t, Tape::Id a) { return t.sqrt(a); }, pos) < 1e-6);

  Mat y = random_mat(3, 4, 9, 0.5);
  const double err = grad_check(
      [](Tape& t, const std::vector<Tape::Id>& l) {
        const auto c = t.concat_rows(l[0], l[1]);
        const auto d = t.rows_dot(l[0], l[1]);
        const auto s = t.add_scalar(c, t.sum_all(d));
        return t.mean_all(t.mul(s, s));
      },
      {&x, &y});
  CHECK(err < 1e-6);
}

TEST_CASE("mean_of averages same-shape inputs") {
  Mat a = random_mat(2, 2, 20), b = random_mat(2, 2, 21), c = random_mat(2, 2, 22);
  Tape t;
  const auto m = t.mean_of({t.leaf(a), t.leaf(b), t.leaf(c)});
  for (int k = 0; k < 4; ++k)
    CHECK(t.val(m).a[k] == doctest::Approx((a.a[k] + b.a[k] + c.a[k]) / 3.0));
  const double err = grad_check(
      [](Tape& tt, const std::vector<Tape::Id>& l) {
        return tt.mean_all(tt.square(tt.mean_of({l[0], l[1], l[2]})));
      },
      {&a, &b, &c});
  CHECK(err < 1e-6);
}

TEST_CASE("propagate swaps rows across a single unit edge") {
  const auto g = graph_of(1, 1, {{0, 0}});
  Mat emb = mat_of(2, 2, {1.0, 2.0, 3.0, 4.0});
  Tape t;
  const auto out = t.propagate(g, t.leaf(emb));
  CHECK(t.val(out)(0, 0) == doctest::Approx(3.0));
  CHECK(t.val(out)(0, 1) == doctest::Approx(4.0));
  CHECK(t.val(out)(1, 0) == doctest::Approx(1.0));
  CHECK(t.val(out)(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("propagate leaves isolated nodes at zero") {
  const auto g = graph_of(2, 2, {{0, 0}});  // user 1 and item 1 isolated
  Mat emb = random_mat(4, 3, 5);
  Tape t;
  const auto out = t.propagate(g, t.leaf(emb));
  for (int j = 0; j < 3; ++j) {
    CHECK(t.val(out)(1, j) == 0.0);
    CHECK(t.val(out)(3, j) == 0.0);
  }
}

TEST_CASE("propagate matches hand computation on a 3-node star") {
  // user 0 - items {0, 1}; degrees: user 2, items 1 -> coeff 1/sqrt(2)
  const auto g = graph_of(1, 2, {{0, 0}, {0, 1}});
  Mat emb = mat_of(3, 2, {1.0, -1.0, 2.0, 0.5, -3.0, 4.0});
  Tape t;
  const auto out = t.propagate(g, t.leaf(emb));
  const double c = 1.0 / std::sqrt(2.0);
  CHECK(t.val(out)(0, 0) == doctest::Approx(c * (2.0 - 3.0)).epsilon(1e-12));
  CHECK(t.val(out)(0, 1) == doctest::Approx(c * (0.5 + 4.0)).epsilon(1e-12));
  CHECK(t.val(out)(1, 0) == doctest::Approx(c * 1.0).epsilon(1e-12));
  CHECK(t.val(out)(2, 1) == doctest::Approx(c * -1.0).epsilon(1e-12));
}

TEST_CASE("propagate is linear in the embeddings") {
  const auto g = graph_of(3, 4, {{0, 0}, {0, 2}, {1, 1}, {2, 0}, {2, 3}});
  Mat x = random_mat(7, 3, 31), y = random_mat(7, 3, 32);
  const double a = 1.7, b = -0.6;
  Tape t;
  Mat combo(7, 3);
  for (int k = 0; k < combo.size(); ++k) combo.a[k] = a * x.a[k] + b * y.a[k];
  const auto lhs = t.propagate(g, t.leaf(combo));
  const auto rhs_x = t.propagate(g, t.leaf(x));
  const auto rhs_y = t.propagate(g, t.leaf(y));
  for (int k = 0; k < t.val(lhs).size(); ++k)
    CHECK(t.val(lhs).a[k] ==
          doctest::Approx(a * t.val(rhs_x).a[k] + b * t.val(rhs_y).a[k]).epsilon(1e-12));
}

TEST_CASE("propagate backward is the adjoint of the forward operator") {
  const auto g = graph_of(3, 3, {{0, 0}, {0, 1}, {1, 1}, {2, 2}});
  Mat x = random_mat(6, 2, 41), y = random_mat(6, 2, 42);

  // <P x, y> == <x, P y> for the symmetric bipartite operator
  Tape t;
  const auto px = t.propagate(g, t.leaf(x));
  const auto py = t.propagate(g, t.leaf(y));
  double lhs = 0.0, rhs = 0.0;
  for (int k = 0; k < x.size(); ++k) {
    lhs += t.val(px).a[k] * y.a[k];
    rhs += x.a[k] * t.val(py).a[k];
  }
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  // backward(G) equals propagate(G)
  Tape t2;
  const auto leaf = t2.leaf(x);
  const auto out = t2.propagate(g, leaf);
  const auto weighted = t2.sum_all(t2.mul(out, t2.constant(y)));
  t2.backward(weighted);
  const Mat& analytic = t2.grad(leaf);
  for (int k = 0; k < x.size(); ++k) CHECK(analytic.a[k] == doctest::Approx(t.val(py).a[k]));
}

TEST_CASE("gated propagation gradients flow into gates and embeddings") {
  const auto g = graph_of(2, 3, {{0, 0}, {0, 1}, {1, 2}});
  Mat emb = random_mat(5, 3, 51);
  Mat gates = mat_of(3, 1, {0.3, 0.8, 0.5});
  const double err = grad_check(
      [&](Tape& t, const std::vector<Tape::Id>& l) {
        return t.mean_all(t.square(t.propagate_gated(g, l[1], l[0])));
      },
      {&emb, &gates});
  CHECK(err < 1e-6);
}

TEST_CASE("rbf gram and hsic gradients pass finite differences") {
  Mat x = random_mat(6, 3, 61, 0.8);
  Mat y = random_mat(6, 3, 62, 0.8);
  const double err = grad_check(
      [](Tape& t, const std::vector<Tape::Id>& l) {
        return t.hsic_from_grams(t.rbf_gram(l[0], 0.9), t.rbf_gram(l[1], 0.9));
      },
      {&x, &y});
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check on a quadratic and on a constant") {
  Mat x(1, 1, 3.0);
  const double err = grad_check(
      [](Tape& t, const std::vector<Tape::Id>& l) { return t.square(l[0]); }, {&x});
  CHECK(err < 1e-6);  // analytic 6 vs central difference

  Mat y(2, 2, 1.0);
  const double err_const = grad_check(
      [](Tape& t, const std::vector<Tape::Id>& l) {
        (void)l;
        return t.leaf(Mat(1, 1, 42.0));
      },
      {&y});
  CHECK(err_const < 1e-7);
}

TEST_CASE("shape mismatches are rejected") {
  Tape t;
  const auto a = t.leaf(Mat(2, 3, 1.0));
  const auto b = t.leaf(Mat(3, 2, 1.0));
  CHECK_THROWS(t.add(a, b));
  CHECK_THROWS(t.mul(a, b));
  CHECK_THROWS(t.rows_dot(a, b));
  CHECK_THROWS(t.matmul(a, a));
  CHECK_THROWS(t.gather_rows(a, {5}));
  const auto g = graph_of(2, 2, {{0, 0}});
  CHECK_THROWS(t.propagate(g, a));  // 2 embedding rows vs 4 graph nodes
  CHECK_THROWS(t.backward(a));
}
