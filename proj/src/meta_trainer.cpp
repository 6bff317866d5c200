#include "modsiren/meta_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "modsiren/adaptation.hpp"
#include "modsiren/errors.hpp"
#include "modsiren/gradient_engine.hpp"
#include "modsiren/metrics.hpp"
#include "modsiren/parallel.hpp"

namespace modsiren {

namespace {

// Stream tags keep the derived generators of one run independent.
enum : std::uint32_t { kSamplerTag = 1, kSplitTag = 2, kInnerTag = 3 };

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t tag, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string save_engine(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 load_engine(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw FormatError("checkpoint sampler state is unreadable", 0);
  return rng;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (total_iters < 0) throw ConfigError("iteration count must be >= 0");
  if (inner_steps < 1) throw ConfigError("inner-loop step count must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("inner learning rate must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("outer learning rate must be positive");
  if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("selection ratio must lie in (0, 1]");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("AdamW moment decay rates must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("AdamW epsilon must be positive");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (eval_every < 0) throw ConfigError("evaluation interval must be >= 0");
  if (eval_steps < 1) throw ConfigError("evaluation step count must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction <= 0.5)) throw ConfigError("validation fraction must lie in [0, 0.5]");
}

std::string LogRecord::to_json() const {
  nlohmann::ordered_json j;
  j["iter"] = iter;
  j["meta_loss"] = meta_loss;
  j["lr"] = lr;
  if (val_psnr) j["val_psnr"] = std::isfinite(*val_psnr) ? nlohmann::ordered_json(*val_psnr) : nlohmann::ordered_json("inf");
  j["secs"] = secs;
  return j.dump();
}

ContextSet reduce_context(const ContextSet& context, double gamma, std::mt19937_64& rng) {
  if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("selection ratio must lie in (0, 1]");
  const auto idx = sample_subset(context.size(), gamma, rng);
  if (idx.size() == context.size()) return context;
  return context.select(idx);
}

std::vector<std::size_t> validation_split(std::size_t n_signals, const TrainConfig& config) {
  if (config.eval_every <= 0 || n_signals < 2 || config.val_fraction <= 0.0) return {};
  const auto wanted = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n_signals)));
  const std::size_t n_val = std::clamp<std::size_t>(wanted, 1, n_signals - 1);
  std::vector<std::size_t> order(n_signals);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, kSplitTag));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n_val);
  std::sort(order.begin(), order.end());
  return order;
}

std::uint64_t stream_seed(std::uint64_t seed, std::int64_t iteration, std::size_t slot) {
  return derive_seed(seed, kInnerTag, static_cast<std::uint64_t>(iteration), slot);
}

double mean_fit_psnr(const SharedParams& shared, std::span<const ContextSet> contexts, int steps,
                     double alpha, int threads) {
  if (contexts.empty()) throw UsageError("no signals to evaluate");
  std::vector<double> scores(contexts.size());
  parallel_for(contexts.size(), threads, [&](std::size_t i) {
    const FitResult fit = fit_latent(shared, contexts[i], steps, alpha);
    scores[i] = psnr(fit.losses.back() / static_cast<double>(shared.config.out_dim));
  });
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

TrainResult train(std::span<const ContextSet> dataset, const ModelConfig& model,
                  const TrainConfig& config, const TrainOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  config.validate();
  model.validate();
  if (dataset.empty()) throw UsageError("training needs at least one signal");

  TrainResult result;
  result.val_indices = validation_split(dataset.size(), config);
  std::vector<ContextSet> val;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0, v = 0; i < dataset.size(); ++i) {
    if (v < result.val_indices.size() && result.val_indices[v] == i) {
      val.push_back(dataset[i]);
      ++v;
    } else {
      pool.push_back(i);
    }
  }

  Checkpoint& ck = result.checkpoint;
  std::mt19937_64 sampler;
  if (options.resume) {
    ck = *options.resume;
    if (!(ck.shared.config == model)) throw ConfigError("checkpoint model configuration differs");
    if (!(ck.train == config)) throw ConfigError("checkpoint training configuration differs");
    if (ck.iteration > config.total_iters) throw ConfigError("checkpoint is past the end of the run");
    sampler = load_engine(ck.rng_state);
  } else {
    ck.shared = init_shared(model, config.seed);
    ck.optimizer = OptimizerState::zeros(static_cast<Eigen::Index>(ck.shared.size()));
    ck.train = config;
    sampler.seed(derive_seed(config.seed, kSamplerTag));
  }

  std::int64_t end = config.total_iters;
  if (options.stop_at) end = std::clamp<std::int64_t>(*options.stop_at, ck.iteration, end);

  MetaGradientOptions mg_opts;
  mg_opts.inner_steps = config.inner_steps;
  mg_opts.alpha = config.alpha;
  mg_opts.gamma = config.gamma;
  mg_opts.first_order = config.first_order;
  mg_opts.precision = config.precision;
  mg_opts.threads = options.threads;

  VectorXd theta = ck.shared.flatten();
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<ContextSet> batch(static_cast<std::size_t>(config.batch_size));
  std::vector<std::uint64_t> seeds(batch.size());

  for (std::int64_t t = ck.iteration; t < end; ++t) {
    const std::mt19937_64 sampler_before = sampler;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      batch[b] = dataset[pool[pick(sampler)]];
      seeds[b] = stream_seed(config.seed, t, b);
    }

    std::string failure;
    MetaGradient mg;
    AdamWStep step;
    const double lr = config.cosine_schedule ? cosine_lr(t, config.total_iters, config.beta) : config.beta;
    try {
      mg = meta_gradient(ck.shared, batch, seeds, mg_opts);
      if (!std::isfinite(mg.meta_loss)) throw NumericalError("meta-loss is not finite");
      step = adamw_update(theta, mg.grad, ck.optimizer, lr, config.adam);
      if (!step.theta.allFinite()) throw NumericalError("updated parameters are not finite");
    } catch (const NumericalError& e) {
      failure = e.what();
    }
    if (!failure.empty()) {
      sampler = sampler_before;
      result.halted = true;
      result.halt_reason = "iteration " + std::to_string(t + 1) + ": " + failure;
      break;
    }

    theta = std::move(step.theta);
    ck.optimizer = std::move(step.state);
    ck.shared.assign(theta);
    ck.iteration = t + 1;

    LogRecord rec;
    rec.iter = ck.iteration;
    rec.meta_loss = mg.meta_loss;
    rec.lr = lr;
    if (!val.empty() && (ck.iteration % config.eval_every == 0 || ck.iteration == config.total_iters)) {
      const double score = mean_fit_psnr(ck.shared, val, config.eval_steps, config.alpha, options.threads);
      rec.val_psnr = score;
      if (!std::isnan(score) && (!ck.best || score > ck.best_val_psnr)) {
        ck.best = ck.shared;
        ck.best_val_psnr = score;
        ck.best_iteration = ck.iteration;
      }
    }
    rec.secs = std::chrono::duration<double>(clock::now() - started).count();
    if (options.on_log) options.on_log(rec);
    result.log.push_back(rec);
  }

  ck.rng_state = save_engine(sampler);
  return result;
}

}  // namespace modsiren
