#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "modsiren/context.hpp"

namespace modsiren {

/// Values on a regular lattice. `values` is row-major over the axes (last
/// axis fastest) with the channel index fastest of all.
struct GridSignal {
  std::vector<int> shape;
  int channels = 1;
  std::vector<double> values;

  std::size_t points() const;
  /// Throws UsageError on empty or non-positive shape, a value count that
  /// differs from points() * channels, or non-finite values.
  void validate() const;
};

/// A collection of signals on one lattice, with optional class labels.
struct SignalSet {
  std::vector<GridSignal> signals;
  std::optional<std::vector<int>> labels;
};

/// Lattice coordinates, C x prod(shape). Axis index i of size S maps to
/// -1 + 2i/(S-1), or 0 when S == 1.
MatrixXd lattice_coords(std::span<const int> shape);

ContextSet to_context(const GridSignal& grid);

/// Sums of three sinusoids with amplitudes in [0.1, 0.3], integer
/// frequencies in 1..8 cycles per signal and uniform phases, sampled at
/// t = i / length and rescaled to [0, 1]. Values are rounded to float.
std::vector<GridSignal> synth_1d(int n_signals, int length, std::uint64_t seed);

/// side x side images. Class c holds c + 1 Gaussian bumps whose widths are
/// drawn from a class-specific range; images are rescaled to [0, 1].
/// Classes cycle 0, 1, ..., n_classes - 1 over the collection.
SignalSet synth_2d(int n_signals, int side, int n_classes, std::uint64_t seed);

/// Binary PGM (P5, maxval 255) of a single-channel 2D signal, values clamped
/// to [0, 1].
void write_pgm(const GridSignal& grid, const std::filesystem::path& path);

}  // namespace modsiren
