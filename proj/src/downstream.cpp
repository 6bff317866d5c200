#include "modsiren/downstream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "modsiren/errors.hpp"
#include "modsiren/optimizer.hpp"
#include "modsiren/parallel.hpp"

namespace modsiren {

namespace {

void check_labels(const std::vector<int>& labels, int n_classes, const char* what) {
  for (int l : labels)
    if (l < 0 || l >= n_classes)
      throw UsageError(std::string(what) + " label " + std::to_string(l) + " is outside [0, " +
                       std::to_string(n_classes) + ")");
}

// Views into the flat parameter (or gradient) vector of an MLP.
template <typename V>
struct MlpView {
  using M = std::conditional_t<std::is_const_v<V>, Eigen::Map<const MatrixXd>, Eigen::Map<MatrixXd>>;
  using B = std::conditional_t<std::is_const_v<V>, Eigen::Map<const VectorXd>, Eigen::Map<VectorXd>>;
  M w1, w2, w3;
  B b1, b2, b3;

  MlpView(V& flat, int in, int h1, int h2, int c)
      : w1(flat.data(), h1, in),
        w2(flat.data() + offset_w2(in, h1), h2, h1),
        w3(flat.data() + offset_w3(in, h1, h2), c, h2),
        b1(flat.data() + static_cast<Eigen::Index>(h1) * in, h1),
        b2(flat.data() + offset_w2(in, h1) + static_cast<Eigen::Index>(h2) * h1, h2),
        b3(flat.data() + offset_w3(in, h1, h2) + static_cast<Eigen::Index>(c) * h2, c) {}

  static Eigen::Index offset_w2(int in, int h1) { return static_cast<Eigen::Index>(h1) * (in + 1); }
  static Eigen::Index offset_w3(int in, int h1, int h2) {
    return offset_w2(in, h1) + static_cast<Eigen::Index>(h2) * (h1 + 1);
  }
};

double accuracy_of(const std::vector<int>& pred, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace

ClassifierReport evaluate(const std::vector<int>& predictions, const std::vector<int>& labels, int n_classes) {
  if (predictions.size() != labels.size()) throw UsageError("prediction and label counts differ");
  if (labels.empty()) throw UsageError("nothing to evaluate");
  if (n_classes < 1) throw UsageError("class count must be >= 1");
  check_labels(predictions, n_classes, "predicted");
  check_labels(labels, n_classes, "true");

  ClassifierReport r;
  const auto c = static_cast<std::size_t>(n_classes);
  r.confusion.assign(c, std::vector<std::int64_t>(c, 0));
  for (std::size_t i = 0; i < labels.size(); ++i)
    ++r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  r.accuracy = accuracy_of(predictions, labels);
  r.per_class_f1.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    std::int64_t tp = r.confusion[k][k], fp = 0, fn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += r.confusion[j][k];
      fn += r.confusion[k][j];
    }
    const std::int64_t denom = 2 * tp + fp + fn;
    r.per_class_f1[k] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  r.macro_f1 = std::accumulate(r.per_class_f1.begin(), r.per_class_f1.end(), 0.0) / static_cast<double>(c);
  return r;
}

std::vector<int> knn_predict(const MatrixXd& train, const std::vector<int>& train_labels, const MatrixXd& queries,
                             int k, int threads) {
  if (train.rows() == 0) throw UsageError("k-NN training set is empty");
  if (static_cast<std::size_t>(train.rows()) != train_labels.size())
    throw UsageError("k-NN label count differs from training rows");
  if (k < 1 || k > train.rows()) throw UsageError("k must lie in [1, training set size]");
  if (queries.cols() != train.cols()) throw UsageError("query and training dimensions differ");
  for (int l : train_labels)
    if (l < 0) throw UsageError("k-NN labels must be non-negative");
  const int n_classes = *std::max_element(train_labels.begin(), train_labels.end()) + 1;

  std::vector<int> out(static_cast<std::size_t>(queries.rows()));
  parallel_for(out.size(), threads, [&](std::size_t q) {
    const auto n = static_cast<std::size_t>(train.rows());
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i)
      dist[i] = (train.row(static_cast<Eigen::Index>(i)) - queries.row(static_cast<Eigen::Index>(q))).squaredNorm();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto closer = [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);

    std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
    for (int j = 0; j < k; ++j) ++votes[static_cast<std::size_t>(train_labels[order[static_cast<std::size_t>(j)]])];
    const int top = *std::max_element(votes.begin(), votes.end());
    int chosen = -1;
    double chosen_dist = 0.0;
    for (int j = 0; j < k; ++j) {
      const std::size_t idx = order[static_cast<std::size_t>(j)];
      const int label = train_labels[idx];
      if (votes[static_cast<std::size_t>(label)] != top) continue;
      if (chosen < 0) {
        chosen = label;
        chosen_dist = dist[idx];
      } else if (dist[idx] == chosen_dist) {
        chosen = std::min(chosen, label);
      } else {
        break;
      }
    }
    out[q] = chosen;
  });
  return out;
}

std::int64_t MlpModel::param_count(int in, int h1, int h2, int c) {
  return static_cast<std::int64_t>(h1) * (in + 1) + static_cast<std::int64_t>(h2) * (h1 + 1) +
         static_cast<std::int64_t>(c) * (h2 + 1);
}

MatrixXd MlpModel::logits(const MatrixXd& x) const {
  if (x.cols() != in_dim) throw UsageError("MLP input dimension differs from the model");
  const MlpView<const VectorXd> p(params, in_dim, hidden1, hidden2, classes);
  MatrixXd a1 = p.w1 * x.transpose();
  a1.colwise() += p.b1;
  a1 = a1.cwiseMax(0.0);
  MatrixXd a2 = p.w2 * a1;
  a2.colwise() += p.b2;
  a2 = a2.cwiseMax(0.0);
  MatrixXd z = p.w3 * a2;
  z.colwise() += p.b3;
  return z;
}

std::vector<int> MlpModel::predict(const MatrixXd& x) const {
  const MatrixXd z = logits(x);
  std::vector<int> out(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j).maxCoeff(&out[static_cast<std::size_t>(j)]);
  return out;
}

MlpTrainResult train_mlp(const MatrixXd& train, const std::vector<int>& train_labels, const MatrixXd& val,
                         const std::vector<int>& val_labels, int n_classes, const MlpOptions& o) {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  if (train.rows() == 0) throw UsageError("MLP training set is empty");
  if (static_cast<std::size_t>(train.rows()) != train_labels.size() ||
      static_cast<std::size_t>(val.rows()) != val_labels.size())
    throw UsageError("MLP label counts differ from row counts");
  if (val.rows() > 0 && val.cols() != train.cols()) throw UsageError("validation dimension differs");
  if (n_classes < 2) throw UsageError("classification needs at least two classes");
  check_labels(train_labels, n_classes, "training");
  check_labels(val_labels, n_classes, "validation");
  if (std::all_of(train_labels.begin(), train_labels.end(), [&](int l) { return l == train_labels.front(); }))
    throw UsageError("training labels contain a single class");
  if (o.hidden1 < 1 || o.hidden2 < 1 || o.epochs < 0 || o.batch_size < 1 || !(o.lr > 0.0) ||
      !(o.dropout >= 0.0 && o.dropout < 1.0))
    throw ConfigError("invalid MLP options");

  MlpTrainResult result;
  MlpModel& model = result.model;
  model.in_dim = static_cast<int>(train.cols());
  model.hidden1 = o.hidden1;
  model.hidden2 = o.hidden2;
  model.classes = n_classes;
  model.params.resize(MlpModel::param_count(model.in_dim, o.hidden1, o.hidden2, n_classes));

  std::mt19937_64 rng(o.seed);
  {
    MlpView<VectorXd> p(model.params, model.in_dim, o.hidden1, o.hidden2, n_classes);
    auto fill = [&](auto& t, int fan_in) {
      std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
    };
    fill(p.w1, model.in_dim);
    fill(p.b1, model.in_dim);
    fill(p.w2, o.hidden1);
    fill(p.b2, o.hidden1);
    fill(p.w3, o.hidden2);
    fill(p.b3, o.hidden2);
  }

  const AdamWConfig adam{0.9, 0.999, 1e-8, o.weight_decay};
  OptimizerState state = OptimizerState::zeros(model.params.size());
  VectorXd grad(model.params.size());
  std::bernoulli_distribution keep(1.0 - o.dropout);
  const double keep_scale = 1.0 / (1.0 - o.dropout);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.rows()));
  std::iota(order.begin(), order.end(), 0);

  const bool has_val = val.rows() > 0;
  MlpModel best = model;
  result.best_val_accuracy = has_val ? accuracy_of(model.predict(val), val_labels) : 0.0;
  for (int epoch = 1; epoch <= o.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(o.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(o.batch_size));
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
      const MatrixXd x = train(rows, Eigen::all).transpose();
      const auto m = static_cast<double>(rows.size());

      const MlpView<const VectorXd> p(model.params, model.in_dim, o.hidden1, o.hidden2, n_classes);
      MatrixXd z1 = p.w1 * x;
      z1.colwise() += p.b1;
      MatrixXd mask1 = MatrixXd::NullaryExpr(z1.rows(), z1.cols(), [&] { return keep(rng) ? keep_scale : 0.0; });
      MatrixXd a1 = (z1.array().max(0.0) * mask1.array()).matrix();
      MatrixXd z2 = p.w2 * a1;
      z2.colwise() += p.b2;
      MatrixXd mask2 = MatrixXd::NullaryExpr(z2.rows(), z2.cols(), [&] { return keep(rng) ? keep_scale : 0.0; });
      MatrixXd a2 = (z2.array().max(0.0) * mask2.array()).matrix();
      MatrixXd z3 = p.w3 * a2;
      z3.colwise() += p.b3;

      // Softmax cross-entropy, mean over the batch.
      MatrixXd dz3 = z3;
      for (Eigen::Index j = 0; j < dz3.cols(); ++j) {
        auto col = dz3.col(j);
        col.array() -= col.maxCoeff();
        col = col.array().exp().matrix();
        col /= col.sum();
        col(train_labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])]) -= 1.0;
      }
      dz3 /= m;

      MlpView<VectorXd> g(grad, model.in_dim, o.hidden1, o.hidden2, n_classes);
      g.w3.noalias() = dz3 * a2.transpose();
      g.b3 = dz3.rowwise().sum();
      MatrixXd dz2 = p.w3.transpose() * dz3;
      dz2 = (dz2.array() * mask2.array() * (z2.array() > 0.0).cast<double>()).matrix();
      g.w2.noalias() = dz2 * a1.transpose();
      g.b2 = dz2.rowwise().sum();
      MatrixXd dz1 = p.w2.transpose() * dz2;
      dz1 = (dz1.array() * mask1.array() * (z1.array() > 0.0).cast<double>()).matrix();
      g.w1.noalias() = dz1 * x.transpose();
      g.b1 = dz1.rowwise().sum();

      AdamWStep step = adamw_update(model.params, grad, state, o.lr, adam);
      model.params = std::move(step.theta);
      state = std::move(step.state);
    }
    if (has_val) {
      const double acc = accuracy_of(model.predict(val), val_labels);
      if (result.best_epoch == 0 || acc > result.best_val_accuracy) {
        result.best_val_accuracy = acc;
        result.best_epoch = epoch;
        best = model;
      }
    } else {
      result.best_epoch = epoch;
      best = model;
    }
  }
  model = std::move(best);
  result.train_seconds = std::chrono::duration<double>(clock::now() - started).count();
  return result;
}

}  // namespace modsiren
