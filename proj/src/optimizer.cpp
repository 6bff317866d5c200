#include "modsiren/optimizer.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>

#include "modsiren/errors.hpp"

namespace modsiren {

double cosine_lr(std::int64_t step, std::int64_t total, double beta) {
  if (total <= 0) return beta;
  if (step > total) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::cerr << "warning: learning-rate step " << step << " is past the schedule end " << total
                << "; using 0\n";
    return 0.0;
  }
  const double t = static_cast<double>(std::max<std::int64_t>(step, 0)) / static_cast<double>(total);
  return std::max(0.0, beta * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

AdamWStep adamw_update(const VectorXd& theta, const VectorXd& grad, const OptimizerState& state,
                       double lr, const AdamWConfig& c) {
  if (grad.size() != theta.size() || state.m.size() != theta.size() || state.v.size() != theta.size())
    throw UsageError("AdamW: parameter, gradient and moment lengths differ");
  if (!grad.allFinite()) throw NumericalError("AdamW: gradient has non-finite entries");

  AdamWStep out;
  out.state.step = state.step + 1;
  out.state.m = c.beta1 * state.m + (1.0 - c.beta1) * grad;
  out.state.v = c.beta2 * state.v + (1.0 - c.beta2) * grad.cwiseAbs2();
  const double t = static_cast<double>(out.state.step);
  const double m_corr = 1.0 - std::pow(c.beta1, t);
  const double v_corr = 1.0 - std::pow(c.beta2, t);
  const auto m_hat = out.state.m.array() / m_corr;
  const auto v_hat = out.state.v.array() / v_corr;
  out.theta = (theta.array() - lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * theta.array())).matrix();
  return out;
}

}  // namespace modsiren
