#include "modsiren/gradient_engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "field_kernels.hpp"
#include "modsiren/errors.hpp"
#include "modsiren/parallel.hpp"

namespace modsiren {

namespace {

void check_shapes(const SharedParams& shared, const Latent& latent, const ContextSet& context) {
  if (context.coords.cols() == 0) throw UsageError("context set is empty");
  if (context.coords.cols() != context.values.cols())
    throw UsageError("context coordinate and value counts differ");
  if (context.coords.rows() != shared.config.in_dim)
    throw UsageError("context coordinates have dimension " + std::to_string(context.coords.rows()) +
                     ", model expects " + std::to_string(shared.config.in_dim));
  if (context.values.rows() != shared.config.out_dim)
    throw UsageError("context values have " + std::to_string(context.values.rows()) +
                     " channels, model expects " + std::to_string(shared.config.out_dim));
  if (latent.phi.size() != shared.config.latent_dim)
    throw UsageError("latent has " + std::to_string(latent.phi.size()) + " entries, expected " +
                     std::to_string(shared.config.latent_dim));
}

void check_inner_config(int steps, double alpha, double gamma, int min_steps) {
  if (steps < min_steps)
    throw ConfigError("inner-loop step count must be >= " + std::to_string(min_steps));
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("inner learning rate must be finite and >= 0");
  if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("selection ratio must lie in (0, 1]");
}

// One inner-loop step's data, kept for the reverse sweep.
template <typename S>
struct InnerStep {
  Vec<S> phi;  // phi_g, the point the step's gradient was taken at
  std::size_t pairs = 0;
  Mat<S> coords;
  Mat<S> targets;
  detail::ForwardCache<S> cache;
  Mat<S> residual;
};

template <typename S>
struct Unrolled {
  std::vector<InnerStep<S>> steps;
  Vec<S> phi;  // phi_G
};

// Runs the inner loop, drawing one subset per step. Caches are retained only
// when `keep` is set.
template <typename S>
Unrolled<S> unroll_inner_loop(const SharedParamsT<S>& p, const Mat<S>& coords, const Mat<S>& targets,
                              int steps, S alpha, double gamma, std::mt19937_64& rng, bool keep) {
  Unrolled<S> u;
  u.phi = Vec<S>::Zero(p.config.latent_dim);
  u.steps.reserve(static_cast<std::size_t>(steps));
  Vec<S> grad;
  for (int g = 0; g < steps; ++g) {
    const auto idx = sample_subset(static_cast<std::size_t>(coords.cols()), gamma, rng);
    InnerStep<S> step;
    step.phi = u.phi;
    step.pairs = idx.size();
    if (static_cast<Eigen::Index>(idx.size()) == coords.cols()) {
      step.coords = coords;
      step.targets = targets;
    } else {
      step.coords = coords(Eigen::all, idx);
      step.targets = targets(Eigen::all, idx);
    }
    detail::forward_pass(p, u.phi, step.coords, step.cache, true);
    step.residual = step.cache.out - step.targets;
    detail::backward_pass(p, u.phi, step.coords, step.cache, step.residual, grad,
                          static_cast<SharedParamsT<S>*>(nullptr));
    u.phi -= alpha * grad;
    if (!keep) {
      step.cache = {};
      step.residual.resize(0, 0);
      step.coords.resize(0, 0);
      step.targets.resize(0, 0);
    }
    u.steps.push_back(std::move(step));
  }
  return u;
}

template <typename S>
Vec<double> signal_meta_gradient(const SharedParamsT<S>& p, const ContextSet& context,
                                 std::uint64_t seed, const MetaGradientOptions& opt,
                                 SignalTrace& trace) {
  const Mat<S> coords = context.coords.template cast<S>();
  const Mat<S> targets = context.values.template cast<S>();
  const S alpha = static_cast<S>(opt.alpha);
  std::mt19937_64 rng(seed);

  Unrolled<S> u = unroll_inner_loop(p, coords, targets, opt.inner_steps, alpha, opt.gamma, rng,
                                    !opt.first_order);
  trace.inner_pairs.clear();
  for (const auto& s : u.steps) trace.inner_pairs.push_back(s.pairs);

  // Outer loss on the full context.
  detail::ForwardCache<S> cache;
  detail::forward_pass(p, u.phi, coords, cache, true);
  const Mat<S> residual = cache.out - targets;
  trace.outer_pairs = static_cast<std::size_t>(coords.cols());
  trace.outer_loss = static_cast<double>(residual.squaredNorm() / static_cast<S>(coords.cols()));

  SharedParamsT<S> grad_theta = detail::zeros_like(p);
  Vec<S> grad_phi;
  detail::backward_pass(p, u.phi, coords, cache, residual, grad_phi, &grad_theta);
  Vec<S> total = grad_theta.flatten();
  if (opt.first_order) return total.template cast<double>();

  // Reverse sweep: adjoint of phi_{g+1} = phi_g - alpha * grad_phi L_g(phi_g).
  Vec<S> adjoint = grad_phi;
  Vec<S> hvp_phi;
  SharedParamsT<S> hvp_theta = detail::zeros_like(p);
  for (std::size_t g = u.steps.size(); g-- > 0;) {
    const InnerStep<S>& s = u.steps[g];
    detail::latent_hvp(p, s.phi, s.coords, s.cache, s.residual, adjoint, hvp_phi, hvp_theta);
    total.noalias() -= alpha * hvp_theta.flatten();
    adjoint.noalias() -= alpha * hvp_phi;
  }
  return total.template cast<double>();
}

template <typename S>
MetaGradient batch_meta_gradient(const SharedParamsT<S>& p, std::span<const ContextSet> contexts,
                                 std::span<const std::uint64_t> seeds, const MetaGradientOptions& opt) {
  const std::size_t B = contexts.size();
  std::vector<VectorXd> per_signal(B);
  MetaGradient out;
  out.traces.resize(B);
  parallel_for(B, opt.threads, [&](std::size_t i) {
    per_signal[i] = signal_meta_gradient(p, contexts[i], seeds[i], opt, out.traces[i]);
  });
  // Fixed signal order keeps the reduction independent of thread count.
  out.grad = VectorXd::Zero(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < B; ++i) {
    out.grad += per_signal[i];
    out.meta_loss += out.traces[i].outer_loss;
  }
  out.grad /= static_cast<double>(B);
  out.meta_loss /= static_cast<double>(B);
  return out;
}

}  // namespace

double mse_loss(const SharedParams& shared, const Latent& latent, const ContextSet& context) {
  check_shapes(shared, latent, context);
  detail::ForwardCache<double> cache;
  detail::forward_pass(shared, latent.phi, context.coords, cache, false);
  return (cache.out - context.values).squaredNorm() / static_cast<double>(context.coords.cols());
}

GradReport loss_and_gradients(const SharedParams& shared, const Latent& latent,
                              const ContextSet& context, bool want_phi, bool want_theta) {
  check_shapes(shared, latent, context);
  detail::ForwardCache<double> cache;
  detail::forward_pass(shared, latent.phi, context.coords, cache, want_phi || want_theta);
  const MatrixXd residual = cache.out - context.values;
  GradReport report;
  report.loss = residual.squaredNorm() / static_cast<double>(context.coords.cols());
  if (!want_phi && !want_theta) return report;

  VectorXd grad_phi;
  if (want_theta) {
    SharedParams grad_theta = detail::zeros_like(shared);
    detail::backward_pass(shared, latent.phi, context.coords, cache, residual, grad_phi, &grad_theta);
    report.grad_theta = grad_theta.flatten();
  } else {
    detail::backward_pass(shared, latent.phi, context.coords, cache, residual, grad_phi,
                          static_cast<SharedParams*>(nullptr));
  }
  if (want_phi) report.grad_phi = std::move(grad_phi);
  return report;
}

VectorXd grad_latent(const SharedParams& shared, const Latent& latent, const ContextSet& context) {
  return *loss_and_gradients(shared, latent, context, true, false).grad_phi;
}

InnerLoopResult inner_adapt(const SharedParams& shared, const ContextSet& context, int steps,
                            double alpha, double gamma, std::mt19937_64& rng) {
  check_inner_config(steps, alpha, gamma, 1);
  check_shapes(shared, Latent::zeros(shared.config.latent_dim), context);
  Unrolled<double> u =
      unroll_inner_loop(shared, context.coords, context.values, steps, alpha, gamma, rng, false);
  InnerLoopResult result;
  for (std::size_t g = 1; g < u.steps.size(); ++g) result.trajectory.push_back(Latent{u.steps[g].phi});
  result.trajectory.push_back(Latent{u.phi});
  for (const auto& s : u.steps) result.supervised.push_back(s.pairs);
  result.latent = Latent{std::move(u.phi)};
  return result;
}

MetaGradient meta_gradient(const SharedParams& shared, std::span<const ContextSet> contexts,
                           std::span<const std::uint64_t> stream_seeds,
                           const MetaGradientOptions& options) {
  if (contexts.empty()) throw UsageError("meta-gradient needs at least one signal");
  if (stream_seeds.size() != contexts.size())
    throw UsageError("one rng stream seed is required per signal");
  check_inner_config(options.inner_steps, options.alpha, options.gamma, 0);
  for (const auto& c : contexts) check_shapes(shared, Latent::zeros(shared.config.latent_dim), c);

  if (options.precision == Precision::Single)
    return batch_meta_gradient(shared.cast<float>(), contexts, stream_seeds, options);
  return batch_meta_gradient(shared, contexts, stream_seeds, options);
}

EquivalenceReport omega_lr_equivalence(const EquivalenceSetup& s) {
  if (!(s.omega_m > 0.0) || !(s.omega_n > 0.0) || !(s.tau_m > 0.0))
    throw ConfigError("frequencies and learning rate must be positive");
  if (s.steps < 1) throw ConfigError("step count must be >= 1");
  if (s.out_dim < 1 || s.in_dim < 1 || s.samples < 1) throw ConfigError("dimensions must be >= 1");

  std::mt19937_64 rng(s.seed);
  auto uniform = [&](Eigen::Index rows, Eigen::Index cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
  };
  const double base_bound = std::sqrt(6.0 / s.in_dim);
  const MatrixXd base_w = uniform(s.out_dim, s.in_dim, base_bound);
  const VectorXd base_b = uniform(s.out_dim, 1, base_bound);
  // Small inputs keep the shared trajectory out of the chaotic regime, where
  // rounding differences would be amplified rather than the rates compared.
  const MatrixXd x = uniform(s.in_dim, s.samples, 0.1);
  const MatrixXd y = uniform(s.out_dim, s.samples, 0.5);

  struct Layer {
    double omega, tau;
    MatrixXd w;
    VectorXd b;
    void step(const MatrixXd& x, const MatrixXd& y) {
      MatrixXd pre = w * x;
      pre.colwise() += b;
      pre *= omega;
      const MatrixXd residual = pre.array().sin().matrix() - y;
      // Loss is the mean over every output value. Averaging over outputs as
      // well as samples keeps omega^2 tau times the bias curvature below 2,
      // so the shared trajectory contracts and rounding is not amplified.
      const MatrixXd zbar = (omega * 2.0 / static_cast<double>(residual.size())) *
                            (residual.array() * pre.array().cos()).matrix();
      w -= tau * (zbar * x.transpose());
      b -= tau * zbar.rowwise().sum();
    }
  };

  EquivalenceReport report;
  report.tau_n = s.scale_lr ? equivalent_learning_rate(s.omega_m, s.omega_n, s.tau_m) : s.tau_m;
  Layer m{s.omega_m, s.tau_m, base_w / s.omega_m, base_b / s.omega_m};
  Layer n{s.omega_n, report.tau_n, base_w / s.omega_n, base_b / s.omega_n};

  auto rel = [](const MatrixXd& a, const MatrixXd& b) {
    const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    return scale == 0.0 ? 0.0 : (a - b).cwiseAbs().maxCoeff() / scale;
  };
  auto record = [&] {
    const double dw = rel(m.omega * m.w, n.omega * n.w);
    const double db = rel(m.omega * m.b, n.omega * n.b);
    report.max_rel_deviation_weights = std::max(report.max_rel_deviation_weights, dw);
    report.max_rel_deviation_biases = std::max(report.max_rel_deviation_biases, db);
    report.max_rel_deviation = std::max({report.max_rel_deviation, dw, db});
  };
  record();
  for (int t = 0; t < s.steps; ++t) {
    m.step(x, y);
    n.step(x, y);
    if (!m.w.allFinite() || !n.w.allFinite()) throw NumericalError("equivalence run diverged");
    record();
  }
  return report;
}

}  // namespace modsiren
