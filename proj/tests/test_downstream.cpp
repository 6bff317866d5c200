#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "modsiren/downstream.hpp"
#include "modsiren/errors.hpp"

using namespace modsiren;

namespace {

MatrixXd column(std::initializer_list<double> v) {
  MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

struct Blobs {
  MatrixXd x;
  std::vector<int> y;
};

// Two classes separated along a random direction by a wide margin.
Blobs separable(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  VectorXd dir(dim);
  std::mt19937_64 fixed(99);
  for (auto& d : dir) d = g(fixed);
  dir.normalize();
  Blobs b{MatrixXd(n, dim), std::vector<int>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    for (int j = 0; j < dim; ++j) b.x(i, j) = 0.5 * g(rng);
    b.x.row(i) += (label ? 3.0 : -3.0) * dir.transpose();
    b.y[static_cast<std::size_t>(i)] = label;
  }
  return b;
}

}  // namespace

TEST_CASE("evaluate on hand-built cases") {
  auto all_right = evaluate({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  CHECK(all_right.accuracy == 1.0);
  CHECK(all_right.macro_f1 == 1.0);

  auto all_wrong = evaluate({1, 0, 1, 0}, {0, 1, 0, 1}, 2);
  CHECK(all_wrong.accuracy == 0.0);
  CHECK(all_wrong.macro_f1 == 0.0);

  // Confusion (rows true, cols predicted):
  //   [2 1 0]
  //   [0 3 1]
  //   [1 0 2]
  // F1: class 0 = 4/6, class 1 = 6/8, class 2 = 4/6.
  const std::vector<int> truth{0, 0, 0, 1, 1, 1, 1, 2, 2, 2};
  const std::vector<int> pred{0, 0, 1, 1, 1, 1, 2, 0, 2, 2};
  const auto r = evaluate(pred, truth, 3);
  CHECK(r.accuracy == doctest::Approx(0.7));
  CHECK(r.per_class_f1[0] == doctest::Approx(4.0 / 6.0));
  CHECK(r.per_class_f1[1] == doctest::Approx(0.75));
  CHECK(r.per_class_f1[2] == doctest::Approx(4.0 / 6.0));
  CHECK(r.macro_f1 == doctest::Approx((8.0 / 6.0 + 0.75) / 3.0));
  CHECK(r.confusion[2][0] == 1);

  // A class absent from both vectors scores 0 and still counts in the mean.
  const auto absent = evaluate({0, 1}, {0, 1}, 3);
  CHECK(absent.per_class_f1[2] == 0.0);
  CHECK(absent.macro_f1 == doctest::Approx(2.0 / 3.0));

  CHECK_THROWS_AS(evaluate({0}, {0, 1}, 2), UsageError);
  CHECK_THROWS_AS(evaluate({3}, {0}, 2), UsageError);
}

TEST_CASE("accuracy equals one minus the Hamming error rate") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> c(0, 3);
  std::vector<int> a(200), b(200);
  int mismatches = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    a[i] = c(rng);
    b[i] = c(rng);
    mismatches += a[i] != b[i];
  }
  CHECK(evaluate(a, b, 4).accuracy == doctest::Approx(1.0 - mismatches / 200.0).epsilon(1e-15));
}

TEST_CASE("k-NN votes and tie rules") {
  const MatrixXd train = column({0.0, 1.0, 10.0});
  CHECK(knn_predict(train, {0, 0, 1}, column({9.0}), 3) == std::vector<int>{0});
  CHECK(knn_predict(train, {0, 0, 1}, column({9.0}), 1) == std::vector<int>{1});
  CHECK(knn_predict(train, {4, 2, 7}, column({1.0}), 1) == std::vector<int>{2});

  // k = N on a balanced set: the nearest member decides.
  const MatrixXd pair = column({-1.0, 2.0});
  CHECK(knn_predict(pair, {0, 1}, column({1.5}), 2) == std::vector<int>{1});
  CHECK(knn_predict(pair, {0, 1}, column({-0.5}), 2) == std::vector<int>{0});
  // Equidistant nearest members fall back to the lowest class.
  CHECK(knn_predict(column({-1.0, 1.0}), {1, 0}, column({0.0}), 2) == std::vector<int>{0});
  // Neighbours at equal distance are taken in training order.
  CHECK(knn_predict(column({-1.0, 1.0}), {1, 0}, column({0.0}), 1) == std::vector<int>{1});

  CHECK_THROWS_AS(knn_predict(MatrixXd(0, 1), {}, column({0.0}), 1), UsageError);
  CHECK_THROWS_AS(knn_predict(train, {0, 0, 1}, column({0.0}), 4), UsageError);
  CHECK_THROWS_AS(knn_predict(train, {0, 0, 1}, MatrixXd::Zero(1, 2), 1), UsageError);
}

TEST_CASE("k-NN is invariant under isometries") {
  const auto tr = separable(40, 5, 1), te = separable(30, 5, 2);
  // A random rotation via QR plus a translation, applied to both sets.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd a(5, 5);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(a).householderQ();
  const Eigen::RowVectorXd shift = Eigen::RowVectorXd::LinSpaced(5, -3.0, 4.0);
  const MatrixXd tr2 = (tr.x * q).rowwise() + shift;
  const MatrixXd te2 = (te.x * q).rowwise() + shift;
  for (int k : {1, 3, 5}) CHECK(knn_predict(tr.x, tr.y, te.x, k) == knn_predict(tr2, tr.y, te2, k, 2));
}

TEST_CASE("MLP parameter count") {
  CHECK(MlpModel::param_count(2048, 512, 128, 7) == 1115655);
  const auto b = separable(20, 6, 1);
  MlpOptions o;
  o.hidden1 = 8;
  o.hidden2 = 4;
  o.epochs = 1;
  const auto r = train_mlp(b.x, b.y, b.x, b.y, 2, o);
  CHECK(r.model.params.size() == MlpModel::param_count(6, 8, 4, 2));
}

TEST_CASE("MLP separates linearly separable latents") {
  const auto tr = separable(200, 16, 1), val = separable(40, 16, 2), te = separable(100, 16, 3);
  MlpOptions o;
  o.hidden1 = 64;
  o.hidden2 = 32;
  o.epochs = 20;
  const auto r = train_mlp(tr.x, tr.y, val.x, val.y, 2, o);
  const auto report = evaluate(r.model.predict(te.x), te.y, 2);
  CHECK(report.accuracy >= 0.95);
  CHECK(r.best_epoch >= 1);
  CHECK(r.train_seconds >= 0.0);

  const auto again = train_mlp(tr.x, tr.y, val.x, val.y, 2, o);
  CHECK(bitwise_equal(again.model.params, r.model.params));
}

TEST_CASE("MLP with zero epochs is the untrained model") {
  const auto tr = separable(200, 16, 1), te = separable(400, 16, 4);
  MlpOptions o;
  o.hidden1 = 32;
  o.hidden2 = 16;
  o.epochs = 0;
  const auto r = train_mlp(tr.x, tr.y, te.x, te.y, 2, o);
  CHECK(r.best_epoch == 0);
  // Random weights on separable data: accuracy stays near chance, far from
  // what one epoch of training reaches.
  const double untrained = evaluate(r.model.predict(te.x), te.y, 2).accuracy;
  o.epochs = 5;
  const double trained = evaluate(train_mlp(tr.x, tr.y, te.x, te.y, 2, o).model.predict(te.x), te.y, 2).accuracy;
  CHECK(trained > untrained);
  CHECK(trained >= 0.95);
}

TEST_CASE("MLP input checks") {
  const auto b = separable(10, 3, 1);
  MlpOptions o;
  o.epochs = 1;
  CHECK_THROWS_AS(train_mlp(b.x, std::vector<int>(10, 1), b.x, b.y, 2, o), UsageError);
  CHECK_THROWS_AS(train_mlp(b.x, b.y, b.x, b.y, 1, o), UsageError);
  CHECK_THROWS_AS(train_mlp(b.x, std::vector<int>(9, 0), b.x, b.y, 2, o), UsageError);
}
