#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "modsiren/linalg.hpp"

namespace modsiren {

/// Architecture of the modulated sine network.
///
/// `layers` counts every layer including the linear output layer, so a
/// network has `layers - 1` sinusoidal layers and `layers - 2` modulated
/// hidden layers.
struct ModelConfig {
  int layers = 8;
  int hidden = 64;
  int latent_dim = 64;
  int in_dim = 1;
  int out_dim = 1;
  double omega_first = 20.0;
  double omega_last = 200.0;

  /// Throws ConfigError when any invariant is violated.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Per-layer frequencies of the sinusoidal layers, increasing linearly with
/// depth. values()[k - 1] is the frequency of layer k (1-based), so the last
/// entry belongs to layer K-1; the linear output layer has none.
class OmegaSchedule {
 public:
  OmegaSchedule() = default;

  /// Linear spacing from `first` to `last` over `layers - 1` entries.
  static OmegaSchedule linear(double first, double last, int layers);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const OmegaSchedule&) const = default;

 private:
  explicit OmegaSchedule(std::vector<double> values) : values_(std::move(values)) {}
  std::vector<double> values_;
};

inline OmegaSchedule build_omega_schedule(double omega_first, double omega_last, int layers) {
  return OmegaSchedule::linear(omega_first, omega_last, layers);
}

template <typename Scalar>
struct LayerParams {
  Mat<Scalar> weight;  // out_dim x in_dim
  Vec<Scalar> bias;    // out_dim
};

/// Everything that is meta-learned and shared across signals. The omega
/// schedule is stored alongside but is not a trainable entry.
template <typename Scalar>
struct SharedParamsT {
  ModelConfig config;
  OmegaSchedule schedule;
  LayerParams<Scalar> first;               // L x C
  std::vector<LayerParams<Scalar>> hidden;  // K-2 layers, L x L
  LayerParams<Scalar> output;              // D x L
  std::vector<Mat<Scalar>> modulations;     // K-2 maps, L x P, no bias

  /// Visits every trainable tensor in flat-vector order: first weight, first
  /// bias, each hidden (weight, bias), output weight, output bias, then each
  /// modulation map. Tensors are column-major.
  template <typename F>
  void for_each_tensor(F&& f) {
    f(first.weight);
    f(first.bias);
    for (auto& layer : hidden) {
      f(layer.weight);
      f(layer.bias);
    }
    f(output.weight);
    f(output.bias);
    for (auto& m : modulations) f(m);
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<SharedParamsT*>(this)->for_each_tensor(
        [&](const auto& t) { f(t); });
  }

  /// Number of trainable scalars.
  std::size_t size() const {
    std::size_t n = 0;
    for_each_tensor([&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  Vec<Scalar> flatten() const {
    Vec<Scalar> out(static_cast<Eigen::Index>(size()));
    Eigen::Index pos = 0;
    for_each_tensor([&](const auto& t) {
      out.segment(pos, t.size()) = Eigen::Map<const Vec<Scalar>>(t.data(), t.size());
      pos += t.size();
    });
    return out;
  }

  /// Overwrites every trainable entry from a flat vector of length size().
  void assign(const Vec<Scalar>& flat) {
    Eigen::Index pos = 0;
    for_each_tensor([&](auto& t) {
      Eigen::Map<Vec<Scalar>>(t.data(), t.size()) = flat.segment(pos, t.size());
      pos += t.size();
    });
  }

  template <typename Other>
  SharedParamsT<Other> cast() const {
    SharedParamsT<Other> out;
    out.config = config;
    out.schedule = schedule;
    auto cast_layer = [](const LayerParams<Scalar>& l) {
      return LayerParams<Other>{l.weight.template cast<Other>(), l.bias.template cast<Other>()};
    };
    out.first = cast_layer(first);
    for (const auto& l : hidden) out.hidden.push_back(cast_layer(l));
    out.output = cast_layer(output);
    for (const auto& m : modulations) out.modulations.push_back(m.template cast<Other>());
    return out;
  }
};

using SharedParams = SharedParamsT<double>;

/// Signal-specific conditioning vector.
struct Latent {
  VectorXd phi;

  static Latent zeros(int latent_dim) { return Latent{VectorXd::Zero(latent_dim)}; }
};

/// True when config, schedule and every trainable entry match bit for bit.
bool bitwise_equal(const SharedParams& a, const SharedParams& b);

/// Samples fresh shared parameters. Deterministic in (config, seed).
SharedParams init_shared(const ModelConfig& config, std::uint64_t seed);

/// Shift vector added inside hidden layer `layer_index` (1-based, 2..K-1).
VectorXd modulate(const SharedParams& shared, const Latent& latent, int layer_index);

/// Evaluates the field at every column of `coords` (C x M); returns D x M.
MatrixXd forward(const SharedParams& shared, const Latent& latent, const MatrixXd& coords);

}  // namespace modsiren
