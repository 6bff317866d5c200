#pragma once

// Scalar-loop re-implementation of the modulated sine network used as an
// oracle in tests. It shares no code with the batched kernels and gets
// latent gradients through forward-mode dual numbers instead of a reverse
// pass.

#include <cmath>
#include <random>
#include <vector>

#include "modsiren/context.hpp"
#include "modsiren/field_model.hpp"

namespace reference {

struct Dual {
  double v = 0.0;
  double d = 0.0;
  Dual() = default;
  Dual(double value, double deriv = 0.0) : v(value), d(deriv) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual sin(Dual a) { return {std::sin(a.v), std::cos(a.v) * a.d}; }
inline double sin(double a) { return std::sin(a); }
inline double value(Dual a) { return a.v; }
inline double value(double a) { return a; }

/// Network output for one coordinate; T is double or Dual.
template <typename T>
std::vector<T> output(const modsiren::SharedParams& p, const std::vector<T>& phi,
                      const modsiren::VectorXd& x) {
  const auto& w = p.schedule.values();
  const int L = p.config.hidden;
  std::vector<T> h(L);
  for (int i = 0; i < L; ++i) {
    T z = T(p.first.bias(i));
    for (int c = 0; c < p.config.in_dim; ++c) z = z + T(p.first.weight(i, c) * x(c));
    h[i] = sin(T(w[0]) * z);
  }
  for (std::size_t layer = 0; layer < p.hidden.size(); ++layer) {
    std::vector<T> next(L);
    for (int i = 0; i < L; ++i) {
      T z = T(p.hidden[layer].bias(i));
      for (int j = 0; j < L; ++j) z = z + T(p.hidden[layer].weight(i, j)) * h[j];
      for (int q = 0; q < p.config.latent_dim; ++q) z = z + T(p.modulations[layer](i, q)) * phi[q];
      next[i] = sin(T(w[layer + 1]) * z);
    }
    h = std::move(next);
  }
  std::vector<T> out(p.config.out_dim);
  for (int d = 0; d < p.config.out_dim; ++d) {
    T y = T(p.output.bias(d));
    for (int j = 0; j < L; ++j) y = y + T(p.output.weight(d, j)) * h[j];
    out[d] = y;
  }
  return out;
}

template <typename T>
T loss(const modsiren::SharedParams& p, const std::vector<T>& phi, const modsiren::ContextSet& c) {
  T total = T(0.0);
  for (Eigen::Index j = 0; j < c.coords.cols(); ++j) {
    const auto y = output(p, phi, modsiren::VectorXd(c.coords.col(j)));
    for (int d = 0; d < p.config.out_dim; ++d) {
      const T r = y[d] - T(c.values(d, j));
      total = total + r * r;
    }
  }
  return total * T(1.0 / static_cast<double>(c.coords.cols()));
}

inline double loss(const modsiren::SharedParams& p, const modsiren::VectorXd& phi,
                   const modsiren::ContextSet& c) {
  return loss(p, std::vector<double>(phi.data(), phi.data() + phi.size()), c);
}

/// Latent gradient by one forward-mode sweep per latent coordinate.
inline modsiren::VectorXd latent_gradient(const modsiren::SharedParams& p, const modsiren::VectorXd& phi,
                                          const modsiren::ContextSet& c) {
  modsiren::VectorXd g(phi.size());
  for (Eigen::Index q = 0; q < phi.size(); ++q) {
    std::vector<Dual> dphi(static_cast<std::size_t>(phi.size()));
    for (Eigen::Index i = 0; i < phi.size(); ++i) dphi[i] = Dual(phi(i), i == q ? 1.0 : 0.0);
    g(q) = loss(p, dphi, c).d;
  }
  return g;
}

/// Outer loss after `steps` full-context SGD steps from zero.
inline double unrolled_objective(const modsiren::SharedParams& p, const modsiren::ContextSet& c,
                                 int steps, double alpha) {
  modsiren::VectorXd phi = modsiren::VectorXd::Zero(p.config.latent_dim);
  for (int g = 0; g < steps; ++g) phi -= alpha * latent_gradient(p, phi, c);
  return loss(p, phi, c);
}

/// Central differences of f over every flat parameter entry.
template <typename F>
modsiren::VectorXd central_differences(const modsiren::SharedParams& p, F&& f, double step = 1e-6) {
  const modsiren::VectorXd base = p.flatten();
  modsiren::VectorXd g(base.size());
  modsiren::SharedParams probe = p;
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    modsiren::VectorXd shifted = base;
    shifted(i) = base(i) + step;
    probe.assign(shifted);
    const double up = f(probe);
    shifted(i) = base(i) - step;
    probe.assign(shifted);
    const double down = f(probe);
    g(i) = (up - down) / (2.0 * step);
  }
  return g;
}

/// Largest per-coordinate relative error. Pairs where both magnitudes are
/// below `floor` count as agreeing to within |a - b| / floor.
inline double max_relative_error(const modsiren::VectorXd& a, const modsiren::VectorXd& b,
                                 double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a(i)), std::abs(b(i)), floor});
    worst = std::max(worst, std::abs(a(i) - b(i)) / denom);
  }
  return worst;
}

/// Random context with coordinates in [-1, 1]^C and values in [0, 1]^D.
inline modsiren::ContextSet random_context(int in_dim, int out_dim, int pairs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coord(-1.0, 1.0), val(0.0, 1.0);
  modsiren::ContextSet c{modsiren::MatrixXd(in_dim, pairs), modsiren::MatrixXd(out_dim, pairs)};
  for (int j = 0; j < pairs; ++j) {
    for (int i = 0; i < in_dim; ++i) c.coords(i, j) = coord(rng);
    for (int d = 0; d < out_dim; ++d) c.values(d, j) = val(rng);
  }
  return c;
}

}  // namespace reference
