#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "modsiren/context.hpp"
#include "modsiren/field_model.hpp"
#include "modsiren/optimizer.hpp"

namespace modsiren {

struct TrainConfig {
  int batch_size = 64;           // B
  std::int64_t total_iters = 0;  // outer iterations
  int inner_steps = 10;          // G
  double alpha = 1e-2;           // inner learning rate
  double beta = 3e-6;            // outer learning rate
  double gamma = 1.0;            // inner-loop selection ratio
  AdamWConfig adam;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 0;  // 0 disables validation
  int eval_steps = 20;          // H used for validation fits
  double val_fraction = 0.05;
  bool cosine_schedule = true;  // false keeps the outer rate at beta
  bool first_order = false;
  Precision precision = Precision::Double;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Everything needed to continue a run exactly where it stopped.
struct Checkpoint {
  SharedParams shared;
  OptimizerState optimizer;
  TrainConfig train;
  std::int64_t iteration = 0;
  std::string rng_state;  // batch sampler, std::mt19937_64 text form
  std::optional<SharedParams> best;  // highest validation PSNR so far
  double best_val_psnr = 0.0;
  std::int64_t best_iteration = 0;

  /// Parameters to use downstream: the best-validation ones when
  /// validation ran, otherwise the latest.
  const SharedParams& selected() const { return best ? *best : shared; }
};

struct LogRecord {
  std::int64_t iter = 0;  // 1-based count of completed outer steps
  double meta_loss = 0.0;
  double lr = 0.0;
  std::optional<double> val_psnr;
  double secs = 0.0;  // wall time since train() was entered

  /// One JSON object on a single line, without a trailing newline.
  std::string to_json() const;
};

struct TrainOptions {
  const Checkpoint* resume = nullptr;
  /// Stop after this many completed iterations (<= total_iters) while
  /// keeping the schedule of the full run.
  std::optional<std::int64_t> stop_at;
  int threads = 1;
  std::function<void(const LogRecord&)> on_log;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogRecord> log;
  std::vector<std::size_t> val_indices;  // held-out dataset positions
  bool halted = false;                   // stopped on a non-finite step
  std::string halt_reason;
};

/// Exactly reduced_size(M, gamma) distinct pairs drawn uniformly without
/// replacement, in ascending original order; gamma == 1 is the identity.
ContextSet reduce_context(const ContextSet& context, double gamma, std::mt19937_64& rng);

/// Dataset positions held out for validation. Empty when validation is off
/// or the dataset has a single signal.
std::vector<std::size_t> validation_split(std::size_t n_signals, const TrainConfig& config);

/// Seed of the inner-loop sampling stream for one batch slot.
std::uint64_t stream_seed(std::uint64_t seed, std::int64_t iteration, std::size_t slot);

/// Mean PSNR (peak 1) after fitting each context for `steps` steps.
double mean_fit_psnr(const SharedParams& shared, std::span<const ContextSet> contexts, int steps,
                     double alpha, int threads = 1);

/// Meta-trains the shared parameters. Halts with the last good state when
/// a step produces a non-finite loss or gradient.
TrainResult train(std::span<const ContextSet> dataset, const ModelConfig& model,
                  const TrainConfig& config, const TrainOptions& options = {});

}  // namespace modsiren
