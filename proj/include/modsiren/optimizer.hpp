#pragma once

#include <cstdint>

#include "modsiren/linalg.hpp"

namespace modsiren {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  bool operator==(const AdamWConfig&) const = default;
};

struct OptimizerState {
  VectorXd m;
  VectorXd v;
  std::int64_t step = 0;

  static OptimizerState zeros(Eigen::Index n) { return {VectorXd::Zero(n), VectorXd::Zero(n), 0}; }
};

struct AdamWStep {
  VectorXd theta;
  OptimizerState state;
};

/// Cosine annealing from `beta` at step 0 down to 0 at `total`, no restarts.
/// Steps past `total` return 0 and print a warning once per process.
double cosine_lr(std::int64_t step, std::int64_t total, double beta);

/// One AdamW step with bias correction and decoupled weight decay:
///   theta' = theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
/// Throws NumericalError if the gradient has non-finite entries.
AdamWStep adamw_update(const VectorXd& theta, const VectorXd& grad, const OptimizerState& state,
                       double lr, const AdamWConfig& config);

}  // namespace modsiren
