#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "modsiren/context.hpp"
#include "modsiren/field_model.hpp"

namespace modsiren {

struct GradReport {
  double loss = 0.0;
  std::optional<VectorXd> grad_phi;
  std::optional<VectorXd> grad_theta;  // flat, SharedParams::flatten() order
};

/// Mean over pairs of the squared Euclidean error across output channels.
double mse_loss(const SharedParams& shared, const Latent& latent, const ContextSet& context);

/// Exact gradient of mse_loss with respect to the latent.
VectorXd grad_latent(const SharedParams& shared, const Latent& latent, const ContextSet& context);

GradReport loss_and_gradients(const SharedParams& shared, const Latent& latent,
                              const ContextSet& context, bool want_phi, bool want_theta);

struct InnerLoopResult {
  Latent latent;                           // phi_G
  std::vector<Latent> trajectory;          // phi_1 .. phi_G
  std::vector<std::size_t> supervised;     // pairs used at each step
};

/// Inner-loop SGD on the latent from zero, resampling a reduced context at
/// every step. Throws ConfigError for steps < 1 or gamma outside (0, 1].
InnerLoopResult inner_adapt(const SharedParams& shared, const ContextSet& context, int steps,
                            double alpha, double gamma, std::mt19937_64& rng);

struct MetaGradientOptions {
  int inner_steps = 10;  // G; 0 is allowed and means phi stays at zero
  double alpha = 1e-2;
  double gamma = 1.0;
  bool first_order = false;
  Precision precision = Precision::Double;
  int threads = 1;
};

/// Which pairs fed each loss evaluation for one signal.
struct SignalTrace {
  std::size_t outer_pairs = 0;
  std::vector<std::size_t> inner_pairs;
  double outer_loss = 0.0;
};

struct MetaGradient {
  VectorXd grad;           // d meta_loss / d theta, flat
  double meta_loss = 0.0;  // mean outer loss over the batch
  std::vector<SignalTrace> traces;
};

/// Gradient of the batch-mean outer loss with respect to the shared
/// parameters, differentiating through the unrolled inner loop. Signal i's
/// reduced contexts are drawn from an engine seeded with stream_seeds[i].
/// The outer loss always uses the full context.
MetaGradient meta_gradient(const SharedParams& shared, std::span<const ContextSet> contexts,
                           std::span<const std::uint64_t> stream_seeds,
                           const MetaGradientOptions& options);

struct EquivalenceSetup {
  double omega_m = 30.0;
  double omega_n = 60.0;
  double tau_m = 1e-2;
  int steps = 100;
  int out_dim = 8;     // p
  int in_dim = 4;      // d
  int samples = 16;
  std::uint64_t seed = 0;
  bool scale_lr = true;  // false keeps tau_n = tau_m
};

struct EquivalenceReport {
  double tau_n = 0.0;
  double max_rel_deviation = 0.0;         // over steps 0..T, weights and biases
  double max_rel_deviation_weights = 0.0;
  double max_rel_deviation_biases = 0.0;
};

/// Trains two single sine layers that share their base draws, scaled by
/// 1/omega, with learning rates related by tau_n = tau_m (omega_m/omega_n)^2,
/// and reports how far omega*W and omega*b drift apart.
EquivalenceReport omega_lr_equivalence(const EquivalenceSetup& setup);

/// Learning rate that makes a layer with frequency omega_n mimic one with
/// omega_m trained at tau_m.
inline double equivalent_learning_rate(double omega_m, double omega_n, double tau_m) {
  const double r = omega_m / omega_n;
  return tau_m * r * r;
}

}  // namespace modsiren
