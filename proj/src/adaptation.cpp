#include "modsiren/adaptation.hpp"

#include <cmath>
#include <limits>

#include "field_kernels.hpp"
#include "modsiren/errors.hpp"
#include "modsiren/hashing.hpp"
#include "modsiren/parallel.hpp"

namespace modsiren {

FitResult fit_latent(const SharedParams& shared, const ContextSet& context, int steps, double alpha) {
  if (steps < 1) throw ConfigError("test-time step count must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("test-time learning rate must be finite and >= 0");
  if (context.size() == 0) throw UsageError("context set is empty");
  if (context.coords.rows() != shared.config.in_dim || context.values.rows() != shared.config.out_dim ||
      context.coords.cols() != context.values.cols())
    throw UsageError("context shape does not match the model");

  const double m = static_cast<double>(context.size());
  FitResult result;
  result.latent = Latent::zeros(shared.config.latent_dim);
  result.losses.reserve(static_cast<std::size_t>(steps) + 1);
  detail::ForwardCache<double> cache;
  VectorXd grad;
  for (int g = 0; g <= steps; ++g) {
    const bool last = g == steps;
    detail::forward_pass(shared, result.latent.phi, context.coords, cache, !last);
    const MatrixXd residual = cache.out - context.values;
    result.losses.push_back(residual.squaredNorm() / m);
    if (last) break;
    detail::backward_pass(shared, result.latent.phi, context.coords, cache, residual, grad,
                          static_cast<SharedParams*>(nullptr));
    result.latent.phi -= alpha * grad;
  }
  return result;
}

LatentDataset encode_dataset(const SharedParams& shared, std::span<const ContextSet> signals,
                             int steps, double alpha, std::optional<std::vector<int>> labels,
                             int threads) {
  if (signals.empty()) throw UsageError("nothing to encode");
  if (steps < 1) throw ConfigError("test-time step count must be >= 1");
  if (labels && labels->size() != signals.size())
    throw UsageError("label count differs from signal count");

  const auto n = static_cast<Eigen::Index>(signals.size());
  const Eigen::Index p = shared.config.latent_dim;
  LatentDataset out;
  out.latents.resize(n, p);
  std::vector<char> ok(signals.size(), 0);
  parallel_for(signals.size(), threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    try {
      const FitResult fit = fit_latent(shared, signals[i], steps, alpha);
      if (fit.latent.phi.allFinite()) {
        out.latents.row(row) = fit.latent.phi.transpose();
        ok[i] = 1;
        return;
      }
    } catch (const std::exception&) {
    }
    out.latents.row(row).setConstant(std::numeric_limits<double>::quiet_NaN());
  });
  for (std::size_t i = 0; i < ok.size(); ++i)
    if (!ok[i]) out.failed.push_back(i);
  out.labels = std::move(labels);
  out.checkpoint_id = checkpoint_id(shared);
  out.steps = steps;
  out.alpha = alpha;
  return out;
}

GridSignal reconstruct(const SharedParams& shared, const Latent& latent,
                       std::span<const int> grid_shape) {
  if (static_cast<int>(grid_shape.size()) != shared.config.in_dim)
    throw UsageError("grid has " + std::to_string(grid_shape.size()) + " axes, model expects " +
                     std::to_string(shared.config.in_dim));
  const MatrixXd y = forward(shared, latent, lattice_coords(grid_shape));
  GridSignal g;
  g.shape.assign(grid_shape.begin(), grid_shape.end());
  g.channels = shared.config.out_dim;
  g.values.assign(y.data(), y.data() + y.size());
  return g;
}

}  // namespace modsiren
