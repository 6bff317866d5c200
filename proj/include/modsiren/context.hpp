#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "modsiren/linalg.hpp"

namespace modsiren {

/// Coordinate-value pairs supervising one signal. Pairs are stored column
/// per pair: coords is C x M and values is D x M.
struct ContextSet {
  MatrixXd coords;
  MatrixXd values;

  std::size_t size() const { return static_cast<std::size_t>(coords.cols()); }

  /// Throws UsageError on mismatched pair counts, an empty set,
  /// coordinates outside [-1, 1] or non-finite values.
  void validate() const;

  /// Subset with the given pair indices, in the given order.
  ContextSet select(const std::vector<Eigen::Index>& indices) const;
};

/// Number of pairs kept by a selection ratio: ceil(gamma * M), clamped to
/// [1, M]. Products within 1e-9 of an integer are treated as that integer.
std::size_t reduced_size(std::size_t total, double gamma);

/// Draws reduced_size(total, gamma) distinct indices uniformly without
/// replacement (partial Fisher-Yates), returned in ascending order. With
/// gamma == 1 returns 0..total-1 and consumes no randomness.
std::vector<Eigen::Index> sample_subset(std::size_t total, double gamma, std::mt19937_64& rng);

}  // namespace modsiren
