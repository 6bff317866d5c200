#pragma once

// Batched kernels for the modulated sine network. Points are columns.
//
// Notation used below, per sinusoidal layer k (1-based, k = 1..K-1):
//   A_k = omega_k * (W_k H_{k-1} + b_k + M_k phi)   (no modulation for k = 1)
//   H_k = sin(A_k),  C_k = cos(A_k)
// and Y = W_K H_{K-1} + b_K. Loss = |Y - T|_F^2 / m over the m columns.

#include <vector>

#include "modsiren/field_model.hpp"
#include "modsiren/vector_math.hpp"

namespace modsiren::detail {

template <typename S>
struct ForwardCache {
  std::vector<Mat<S>> act;  // H_k, index k-1
  std::vector<Mat<S>> cos;  // C_k, index k-1; empty when not requested
  Mat<S> out;               // D x m
};

template <typename S>
SharedParamsT<S> zeros_like(const SharedParamsT<S>& p) {
  SharedParamsT<S> z = p;
  z.for_each_tensor([](auto& t) { t.setZero(); });
  return z;
}

template <typename S>
void forward_pass(const SharedParamsT<S>& p, const Vec<S>& phi, const Mat<S>& x,
                  ForwardCache<S>& cache, bool keep_cos) {
  const std::size_t sinusoidal = p.schedule.size();
  cache.act.resize(sinusoidal);
  cache.cos.resize(keep_cos ? sinusoidal : 0);

  Mat<S> pre = p.first.weight * x;
  pre.colwise() += p.first.bias;
  pre *= static_cast<S>(p.schedule[0]);
  cache.act[0] = sin_of(pre);
  if (keep_cos) cache.cos[0] = cos_of(pre);

  for (std::size_t h = 0; h < p.hidden.size(); ++h) {
    const std::size_t k = h + 1;  // 0-based sinusoidal index
    const Vec<S> shift = p.hidden[h].bias + p.modulations[h] * phi;
    pre.noalias() = p.hidden[h].weight * cache.act[k - 1];
    pre.colwise() += shift;
    pre *= static_cast<S>(p.schedule[k]);
    cache.act[k] = sin_of(pre);
    if (keep_cos) cache.cos[k] = cos_of(pre);
  }

  cache.out.noalias() = p.output.weight * cache.act.back();
  cache.out.colwise() += p.output.bias;
}

/// Reverse pass for loss = |Y - T|^2 / m given residual = Y - T.
/// Accumulates d loss / d phi into `grad_phi` (overwritten) and, when
/// `grad_theta` is non-null, writes every parameter gradient into it.
template <typename S>
void backward_pass(const SharedParamsT<S>& p, const Vec<S>& phi, const Mat<S>& x,
                   const ForwardCache<S>& cache, const Mat<S>& residual, Vec<S>& grad_phi,
                   SharedParamsT<S>* grad_theta) {
  const S scale = S(2) / static_cast<S>(x.cols());
  const Mat<S> ybar = scale * residual;
  const std::size_t last = cache.act.size() - 1;

  grad_phi.setZero(phi.size());
  if (grad_theta) {
    grad_theta->output.weight.noalias() = ybar * cache.act[last].transpose();
    grad_theta->output.bias = ybar.rowwise().sum();
  }

  Mat<S> g = p.output.weight.transpose() * ybar;
  Mat<S> zbar;
  for (std::size_t h = p.hidden.size(); h-- > 0;) {
    const std::size_t k = h + 1;
    zbar = static_cast<S>(p.schedule[k]) * (g.array() * cache.cos[k].array()).matrix();
    const Vec<S> bbar = zbar.rowwise().sum();
    grad_phi.noalias() += p.modulations[h].transpose() * bbar;
    if (grad_theta) {
      grad_theta->hidden[h].weight.noalias() = zbar * cache.act[k - 1].transpose();
      grad_theta->hidden[h].bias = bbar;
      grad_theta->modulations[h].noalias() = bbar * phi.transpose();
    }
    if (h > 0 || grad_theta) g.noalias() = p.hidden[h].weight.transpose() * zbar;
  }

  if (grad_theta) {
    zbar = static_cast<S>(p.schedule[0]) * (g.array() * cache.cos[0].array()).matrix();
    grad_theta->first.weight.noalias() = zbar * x.transpose();
    grad_theta->first.bias = zbar.rowwise().sum();
  }
}

/// Directional derivative of the full gradient (phi and theta) along a
/// latent direction `v`, with theta held fixed. Yields H_phiphi v in
/// `hvp_phi` and the mixed block H_thetaphi v in `hvp_theta`.
template <typename S>
void latent_hvp(const SharedParamsT<S>& p, const Vec<S>& phi, const Mat<S>& x,
                const ForwardCache<S>& cache, const Mat<S>& residual, const Vec<S>& v,
                Vec<S>& hvp_phi, SharedParamsT<S>& hvp_theta) {
  const std::size_t n_hidden = p.hidden.size();
  const S scale = S(2) / static_cast<S>(x.cols());

  // Tangent forward. Layer 1 has no latent dependence, so its tangent is 0.
  std::vector<Mat<S>> act_dot(n_hidden + 1);
  std::vector<Mat<S>> pre_dot(n_hidden + 1);
  for (std::size_t h = 0; h < n_hidden; ++h) {
    const std::size_t k = h + 1;
    const S omega = static_cast<S>(p.schedule[k]);
    const Vec<S> shift_dot = omega * (p.modulations[h] * v);
    if (h == 0) {
      pre_dot[k] = shift_dot.replicate(1, x.cols());
    } else {
      pre_dot[k].noalias() = p.hidden[h].weight * act_dot[k - 1];
      pre_dot[k] *= omega;
      pre_dot[k].colwise() += shift_dot;
    }
    act_dot[k] = (cache.cos[k].array() * pre_dot[k].array()).matrix();
  }
  const Mat<S>& act_last = cache.act[n_hidden];
  const Mat<S>& act_dot_last = act_dot[n_hidden];

  const Mat<S> ybar = scale * residual;
  const Mat<S> ybar_dot = scale * (p.output.weight * act_dot_last);

  hvp_phi.setZero(phi.size());
  hvp_theta.output.weight.noalias() = ybar_dot * act_last.transpose();
  hvp_theta.output.weight.noalias() += ybar * act_dot_last.transpose();
  hvp_theta.output.bias = ybar_dot.rowwise().sum();

  Mat<S> g = p.output.weight.transpose() * ybar;
  Mat<S> g_dot = p.output.weight.transpose() * ybar_dot;
  Mat<S> zbar, zbar_dot;
  for (std::size_t h = n_hidden; h-- > 0;) {
    const std::size_t k = h + 1;
    const S omega = static_cast<S>(p.schedule[k]);
    const auto c = cache.cos[k].array();
    zbar = omega * (g.array() * c).matrix();
    zbar_dot = omega * (g_dot.array() * c -
                        g.array() * cache.act[k].array() * pre_dot[k].array()).matrix();
    const Vec<S> bbar = zbar.rowwise().sum();
    const Vec<S> bbar_dot = zbar_dot.rowwise().sum();

    hvp_phi.noalias() += p.modulations[h].transpose() * bbar_dot;
    hvp_theta.modulations[h].noalias() = bbar_dot * phi.transpose();
    hvp_theta.modulations[h].noalias() += bbar * v.transpose();
    hvp_theta.hidden[h].weight.noalias() = zbar_dot * cache.act[k - 1].transpose();
    if (h > 0) hvp_theta.hidden[h].weight.noalias() += zbar * act_dot[k - 1].transpose();
    hvp_theta.hidden[h].bias = bbar_dot;

    g_dot.noalias() = p.hidden[h].weight.transpose() * zbar_dot;
    if (h > 0) g.noalias() = p.hidden[h].weight.transpose() * zbar;
  }

  zbar_dot = static_cast<S>(p.schedule[0]) * (g_dot.array() * cache.cos[0].array()).matrix();
  hvp_theta.first.weight.noalias() = zbar_dot * x.transpose();
  hvp_theta.first.bias = zbar_dot.rowwise().sum();
}

}  // namespace modsiren::detail
