#include "modsiren/context.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "modsiren/errors.hpp"

namespace modsiren {

void ContextSet::validate() const {
  if (coords.cols() != values.cols())
    throw UsageError("context has " + std::to_string(coords.cols()) + " coordinates but " +
                     std::to_string(values.cols()) + " values");
  if (coords.cols() == 0) throw UsageError("context set is empty");
  if (!coords.allFinite() || coords.cwiseAbs().maxCoeff() > 1.0)
    throw UsageError("context coordinates must lie in [-1, 1]");
  if (!values.allFinite()) throw UsageError("context values must be finite");
}

ContextSet ContextSet::select(const std::vector<Eigen::Index>& indices) const {
  return ContextSet{coords(Eigen::all, indices), values(Eigen::all, indices)};
}

std::size_t reduced_size(std::size_t total, double gamma) {
  if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("selection ratio must lie in (0, 1]");
  const double exact = gamma * static_cast<double>(total);
  const double nearest = std::round(exact);
  const double n = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
  return std::clamp<std::size_t>(static_cast<std::size_t>(n), 1, total);
}

std::vector<Eigen::Index> sample_subset(std::size_t total, double gamma, std::mt19937_64& rng) {
  const std::size_t keep = reduced_size(total, gamma);
  std::vector<Eigen::Index> idx(total);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (keep == total) return idx;
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace modsiren
