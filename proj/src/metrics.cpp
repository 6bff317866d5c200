#include "modsiren/metrics.hpp"

#include <cmath>
#include <limits>

#include "modsiren/errors.hpp"

namespace modsiren {

namespace {

void check_same_layout(const GridSignal& a, const GridSignal& b) {
  a.validate();
  b.validate();
  if (a.shape != b.shape || a.channels != b.channels)
    throw UsageError("signals differ in shape or channel count");
}

std::vector<double> gaussian_taps(int length) {
  constexpr int full = 11;
  constexpr double sigma = 1.5;
  const int start = (full - length) / 2;
  std::vector<double> taps(static_cast<std::size_t>(length));
  double sum = 0.0;
  for (int t = 0; t < length; ++t) {
    const double d = static_cast<double>(start + t - full / 2);
    taps[static_cast<std::size_t>(t)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += taps[static_cast<std::size_t>(t)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// "Valid" correlation of a row-major array along one axis; shrinks that axis.
std::vector<double> filter_axis(const std::vector<double>& data, std::vector<int>& shape,
                                std::size_t axis, const std::vector<double>& taps) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(shape[a]);
  for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= static_cast<std::size_t>(shape[a]);
  const std::size_t n = static_cast<std::size_t>(shape[axis]);
  const std::size_t m = n - taps.size() + 1;
  std::vector<double> out(outer * m * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < taps.size(); ++t) {
        const double w = taps[t];
        const double* src = &data[(o * n + i + t) * inner];
        double* dst = &out[(o * m + i) * inner];
        for (std::size_t s = 0; s < inner; ++s) dst[s] += w * src[s];
      }
  shape[axis] = static_cast<int>(m);
  return out;
}

std::vector<double> window_mean(std::vector<double> data, const std::vector<int>& shape) {
  std::vector<int> s = shape;
  for (std::size_t a = 0; a < shape.size(); ++a)
    data = filter_axis(data, s, a, gaussian_taps(std::min(shape[a], 11)));
  return data;
}

double ssim_channel(const std::vector<double>& a, const std::vector<double>& b,
                    const std::vector<int>& shape) {
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = window_mean(a, shape), mu_b = window_mean(b, shape);
  const auto e_aa = window_mean(std::move(aa), shape), e_bb = window_mean(std::move(bb), shape),
             e_ab = window_mean(std::move(ab), shape);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
    const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace

double mse(const GridSignal& a, const GridSignal& b) {
  check_same_layout(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.values.size());
}

double psnr(double mse, double peak) {
  if (!(mse >= 0.0)) throw UsageError("mse must be non-negative");
  if (!(peak > 0.0)) throw UsageError("peak must be positive");
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const GridSignal& a, const GridSignal& b) {
  check_same_layout(a, b);
  const std::size_t points = a.points();
  const auto channels = static_cast<std::size_t>(a.channels);
  double total = 0.0;
  std::vector<double> ca(points), cb(points);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < points; ++i) {
      ca[i] = a.values[i * channels + c];
      cb[i] = b.values[i * channels + c];
    }
    total += ssim_channel(ca, cb, a.shape);
  }
  return total / static_cast<double>(channels);
}

}  // namespace modsiren
