#include "modsiren/signal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "modsiren/errors.hpp"

namespace modsiren {

std::size_t GridSignal::points() const {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(std::max(s, 0));
  return n;
}

void GridSignal::validate() const {
  if (shape.empty()) throw UsageError("signal has no axes");
  for (int s : shape)
    if (s < 1) throw UsageError("signal axis sizes must be >= 1");
  if (channels < 1) throw UsageError("signal needs at least one channel");
  if (values.size() != points() * static_cast<std::size_t>(channels))
    throw UsageError("signal holds " + std::to_string(values.size()) + " values, shape implies " +
                     std::to_string(points() * static_cast<std::size_t>(channels)));
  for (double v : values)
    if (!std::isfinite(v)) throw UsageError("signal has non-finite values");
}

MatrixXd lattice_coords(std::span<const int> shape) {
  if (shape.empty()) throw UsageError("lattice needs at least one axis");
  Eigen::Index total = 1;
  for (int s : shape) {
    if (s < 1) throw UsageError("lattice axis sizes must be >= 1");
    total *= s;
  }
  const auto dims = static_cast<Eigen::Index>(shape.size());
  MatrixXd coords(dims, total);
  std::vector<int> index(shape.size(), 0);
  for (Eigen::Index j = 0; j < total; ++j) {
    for (Eigen::Index a = 0; a < dims; ++a) {
      const int s = shape[static_cast<std::size_t>(a)];
      coords(a, j) = s == 1 ? 0.0 : -1.0 + 2.0 * index[static_cast<std::size_t>(a)] / (s - 1);
    }
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++index[a] < shape[a]) break;
      index[a] = 0;
    }
  }
  return coords;
}

ContextSet to_context(const GridSignal& grid) {
  grid.validate();
  ContextSet ctx;
  ctx.coords = lattice_coords(grid.shape);
  ctx.values = Eigen::Map<const MatrixXd>(grid.values.data(), grid.channels,
                                          static_cast<Eigen::Index>(grid.points()));
  return ctx;
}

namespace {

void rescale_unit(std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, span = *hi - *lo;
  for (double& x : v) {
    const double u = span > 0.0 ? (x - a) / span : 0.0;
    x = static_cast<double>(static_cast<float>(std::clamp(u, 0.0, 1.0)));
  }
}

}  // namespace

std::vector<GridSignal> synth_1d(int n_signals, int length, std::uint64_t seed) {
  if (n_signals < 1) throw ConfigError("signal count must be >= 1");
  if (length < 8) throw ConfigError("1D signal length must be >= 8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(0.1, 0.3);
  std::uniform_int_distribution<int> freq(1, 8);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  std::vector<GridSignal> out;
  out.reserve(static_cast<std::size_t>(n_signals));
  for (int n = 0; n < n_signals; ++n) {
    double a[3], f[3], rho[3];
    for (int r = 0; r < 3; ++r) {
      a[r] = amp(rng);
      f[r] = freq(rng);
      rho[r] = phase(rng);
    }
    GridSignal s{{length}, 1, std::vector<double>(static_cast<std::size_t>(length))};
    for (int i = 0; i < length; ++i) {
      const double t = static_cast<double>(i) / length;
      double v = 0.0;
      for (int r = 0; r < 3; ++r) v += a[r] * std::sin(2.0 * std::numbers::pi * f[r] * t + rho[r]);
      s.values[static_cast<std::size_t>(i)] = v;
    }
    rescale_unit(s.values);
    out.push_back(std::move(s));
  }
  return out;
}

SignalSet synth_2d(int n_signals, int side, int n_classes, std::uint64_t seed) {
  if (n_signals < 1) throw ConfigError("signal count must be >= 1");
  if (side < 16) throw ConfigError("2D side length must be >= 16");
  if (n_classes < 2) throw ConfigError("class count must be >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre(-0.6, 0.6);
  std::uniform_real_distribution<double> height(0.5, 1.0);
  std::uniform_real_distribution<double> unit(0.8, 1.2);

  const std::vector<int> shape{side, side};
  const MatrixXd coords = lattice_coords(shape);
  SignalSet set;
  set.labels.emplace();
  for (int n = 0; n < n_signals; ++n) {
    const int label = n % n_classes;
    // Class c draws c + 1 bumps of width around 0.5 / (c + 1).
    const double base_width = 0.5 / (label + 1);
    GridSignal s{shape, 1, std::vector<double>(static_cast<std::size_t>(coords.cols()), 0.0)};
    for (int b = 0; b <= label; ++b) {
      const double cx = centre(rng), cy = centre(rng), h = height(rng);
      const double w = base_width * unit(rng);
      const double inv = 1.0 / (2.0 * w * w);
      for (Eigen::Index j = 0; j < coords.cols(); ++j) {
        const double dx = coords(0, j) - cx, dy = coords(1, j) - cy;
        s.values[static_cast<std::size_t>(j)] += h * std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
    rescale_unit(s.values);
    set.signals.push_back(std::move(s));
    set.labels->push_back(label);
  }
  return set;
}

void write_pgm(const GridSignal& grid, const std::filesystem::path& path) {
  grid.validate();
  if (grid.shape.size() != 2 || grid.channels != 1)
    throw UsageError("PGM export needs a single-channel 2D signal");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << grid.shape[1] << ' ' << grid.shape[0] << "\n255\n";
  std::string bytes(grid.values.size(), '\0');
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    bytes[i] = static_cast<char>(
        static_cast<unsigned char>(std::lround(std::clamp(grid.values[i], 0.0, 1.0) * 255.0)));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

}  // namespace modsiren
