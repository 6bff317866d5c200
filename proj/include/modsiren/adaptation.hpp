#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modsiren/context.hpp"
#include "modsiren/field_model.hpp"
#include "modsiren/signal.hpp"

namespace modsiren {

struct FitResult {
  Latent latent;              // phi_H
  std::vector<double> losses;  // full-context loss at phi_0 .. phi_H
};

/// H full-context SGD steps on the latent from zero with fixed rate alpha.
/// Throws ConfigError for steps < 1 or a negative or non-finite alpha.
FitResult fit_latent(const SharedParams& shared, const ContextSet& context, int steps, double alpha);

struct LatentDataset {
  MatrixXd latents;  // N x P, row i encodes signal i
  std::optional<std::vector<int>> labels;
  std::string checkpoint_id;
  int steps = 0;
  double alpha = 0.0;
  std::vector<std::size_t> failed;  // rows filled with NaN

  std::size_t size() const { return static_cast<std::size_t>(latents.rows()); }
};

/// Fits every signal independently; rows follow input order. A signal whose
/// fit throws or yields non-finite values gets a NaN row and is listed in
/// `failed` instead of aborting the batch.
LatentDataset encode_dataset(const SharedParams& shared, std::span<const ContextSet> signals,
                             int steps, double alpha,
                             std::optional<std::vector<int>> labels = std::nullopt, int threads = 1);

/// Evaluates the field on the lattice of `grid_shape` (one entry per input
/// dimension). Values are returned unclamped.
GridSignal reconstruct(const SharedParams& shared, const Latent& latent,
                       std::span<const int> grid_shape);

}  // namespace modsiren
