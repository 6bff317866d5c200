#pragma once

#include <cstdint>
#include <vector>

#include "modsiren/linalg.hpp"

namespace modsiren {

struct ClassifierReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::int64_t n_params = 0;
  double train_seconds = 0.0;
};

/// Accuracy, per-class F1 = 2TP / (2TP + FP + FN) (0 when the class never
/// occurs in either vector) and their unweighted mean. Labels must lie in
/// [0, n_classes).
ClassifierReport evaluate(const std::vector<int>& predictions, const std::vector<int>& labels, int n_classes);

/// Euclidean k-NN over rows. The k neighbours are the closest training rows,
/// equal distances taken in row order. The majority class wins; among tied
/// classes the one owning the nearest neighbour wins, and equidistant
/// nearest members fall back to the lowest class index. Throws UsageError for an empty training
/// set, k outside [1, N] or mismatched dimensions.
std::vector<int> knn_predict(const MatrixXd& train, const std::vector<int>& train_labels,
                             const MatrixXd& queries, int k, int threads = 1);

struct MlpOptions {
  int hidden1 = 512;
  int hidden2 = 128;
  double dropout = 0.2;
  int epochs = 50;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

/// in -> hidden1 -> hidden2 -> classes, ReLU and dropout after each hidden
/// layer. Parameters are stored flat: W1, b1, W2, b2, W3, b3, column-major.
struct MlpModel {
  int in_dim = 0;
  int hidden1 = 0;
  int hidden2 = 0;
  int classes = 0;
  VectorXd params;

  static std::int64_t param_count(int in_dim, int hidden1, int hidden2, int classes);
  /// Class scores for the rows of `x`, classes x N.
  MatrixXd logits(const MatrixXd& x) const;
  std::vector<int> predict(const MatrixXd& x) const;
};

struct MlpTrainResult {
  MlpModel model;  // weights from the epoch with the best validation accuracy
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  double train_seconds = 0.0;
};

/// Mini-batch cross-entropy training with AdamW. Rows are samples. With
/// epochs == 0 the returned model is the initialization.
MlpTrainResult train_mlp(const MatrixXd& train, const std::vector<int>& train_labels, const MatrixXd& val,
                         const std::vector<int>& val_labels, int n_classes, const MlpOptions& options);

}  // namespace modsiren
