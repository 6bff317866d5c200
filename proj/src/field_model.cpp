#include "modsiren/field_model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "field_kernels.hpp"
#include "modsiren/errors.hpp"

namespace modsiren {

void ModelConfig::validate() const {
  if (layers < 3) throw ConfigError("layer count must be >= 3, got " + std::to_string(layers));
  if (hidden < 1 || latent_dim < 1 || in_dim < 1 || out_dim < 1)
    throw ConfigError("hidden, latent, input and output dimensions must all be >= 1");
  if (!(omega_first > 0.0) || !(omega_last > 0.0))
    throw ConfigError("omega endpoints must be positive");
}

OmegaSchedule OmegaSchedule::linear(double first, double last, int layers) {
  if (!(first > 0.0) || !(last > 0.0)) throw ConfigError("omega endpoints must be positive");
  if (layers < 3) throw ConfigError("layer count must be >= 3, got " + std::to_string(layers));
  const int n = layers - 1;
  const double step = (last - first) / static_cast<double>(n - 1);
  std::vector<double> values(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = first + i * step;
  values.back() = last;
  return OmegaSchedule(std::move(values));
}

bool bitwise_equal(const SharedParams& a, const SharedParams& b) {
  if (!(a.config == b.config) || !(a.schedule == b.schedule)) return false;
  // Shapes must agree too, not only the flattened bytes.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> sa, sb;
  a.for_each_tensor([&](const auto& t) { sa.emplace_back(t.rows(), t.cols()); });
  b.for_each_tensor([&](const auto& t) { sb.emplace_back(t.rows(), t.cols()); });
  return sa == sb && bitwise_equal(a.flatten(), b.flatten());
}

namespace {

template <typename Rng>
void fill_uniform(Eigen::Ref<MatrixXd> t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < t.cols(); ++j)
    for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = dist(rng);
}

template <typename Rng>
LayerParams<double> sample_layer(int out, int in, double bound, Rng& rng) {
  LayerParams<double> l{MatrixXd(out, in), VectorXd(out)};
  fill_uniform(l.weight, bound, rng);
  fill_uniform(l.bias, bound, rng);
  return l;
}

}  // namespace

SharedParams init_shared(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  SharedParams p;
  p.config = config;
  p.schedule = OmegaSchedule::linear(config.omega_first, config.omega_last, config.layers);

  std::mt19937_64 rng(seed);
  const int L = config.hidden;
  const double sine_bound = std::sqrt(6.0 / L);

  p.first = sample_layer(L, config.in_dim, 1.0 / config.in_dim, rng);
  for (int h = 0; h < config.layers - 2; ++h)
    p.hidden.push_back(sample_layer(L, L, sine_bound / p.schedule[static_cast<std::size_t>(h + 1)], rng));
  p.output = sample_layer(config.out_dim, L, sine_bound / p.schedule[p.schedule.size() - 1], rng);

  const double mod_bound = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));
  for (int h = 0; h < config.layers - 2; ++h) {
    MatrixXd m(L, config.latent_dim);
    fill_uniform(m, mod_bound, rng);
    p.modulations.push_back(std::move(m));
  }
  return p;
}

VectorXd modulate(const SharedParams& shared, const Latent& latent, int layer_index) {
  const int K = shared.config.layers;
  if (layer_index < 2 || layer_index > K - 1)
    throw UsageError("modulated layers are 2.." + std::to_string(K - 1) + ", got " +
                     std::to_string(layer_index));
  if (latent.phi.size() != shared.config.latent_dim)
    throw UsageError("latent has " + std::to_string(latent.phi.size()) + " entries, expected " +
                     std::to_string(shared.config.latent_dim));
  return shared.modulations[static_cast<std::size_t>(layer_index - 2)] * latent.phi;
}

MatrixXd forward(const SharedParams& shared, const Latent& latent, const MatrixXd& coords) {
  if (coords.rows() != shared.config.in_dim)
    throw UsageError("coordinates have dimension " + std::to_string(coords.rows()) +
                     ", model expects " + std::to_string(shared.config.in_dim));
  if (latent.phi.size() != shared.config.latent_dim)
    throw UsageError("latent has " + std::to_string(latent.phi.size()) + " entries, expected " +
                     std::to_string(shared.config.latent_dim));
  detail::ForwardCache<double> cache;
  detail::forward_pass(shared, latent.phi, coords, cache, false);
  return std::move(cache.out);
}

}  // namespace modsiren
