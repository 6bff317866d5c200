#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "modsiren/adaptation.hpp"
#include "modsiren/container.hpp"
#include "modsiren/downstream.hpp"
#include "modsiren/errors.hpp"
#include "modsiren/gradient_engine.hpp"
#include "modsiren/hashing.hpp"
#include "modsiren/meta_trainer.hpp"
#include "modsiren/metrics.hpp"
#include "modsiren/signal.hpp"

namespace modsiren::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Input data that is well-formed but unusable for the command.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-dimensionality network and batching defaults.
struct Published {
  int layers, hidden, batch, latent;
  double gamma, omega_first, omega_last;
};

constexpr Published kPublished[3] = {
    {8, 64, 64, 64, 1.0, 20.0, 200.0},
    {15, 256, 24, 2048, 0.25, 20.0, 400.0},
    {15, 256, 4, 8192, 0.25, 20.0, 300.0},
};

constexpr int kPublishedInnerSteps = 10;
constexpr int kPublishedTestSteps = 20;
constexpr double kPublishedAlpha = 1e-2;
constexpr double kPublishedBeta = 3e-6;
constexpr std::int64_t kPublishedIters = 250000;

std::string published(const std::string& what) { return what + " (published default: "; }

template <typename T>
T pick(const std::optional<T>& given, std::size_t dims, T Published::*field, const char* flag) {
  if (given) return *given;
  if (dims < 1 || dims > 3)
    throw UsageError(std::string("no default for ") + flag + " with " + std::to_string(dims) +
                     "-dimensional signals; pass it explicitly");
  return kPublished[dims - 1].*field;
}

json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args) {
    j_["command"] = std::move(command);
    j_["argv"] = args;
    j_["tool_version"] = kToolVersion;
    j_["flags"] = json::object();
    j_["resolved"] = json::object();
    j_["seeds"] = json::object();
    j_["inputs"] = json::object();
    j_["outputs"] = json::object();
    j_["timed_outputs"] = json::object();
  }

  void flags(const CLI::App& sub) {
    for (const CLI::Option* opt : sub.get_options()) {
      const std::string name = opt->get_single_name();
      if (name == "help" || name == "h") continue;
      if (opt->get_type_size() == 0) {
        j_["flags"][name] = opt->count() > 0;
      } else if (opt->count() > 0) {
        const auto& r = opt->results();
        j_["flags"][name] = r.size() == 1 ? json(r.front()) : json(r);
      } else {
        j_["flags"][name] = opt->get_default_str();
      }
    }
  }

  json& resolved() { return j_["resolved"]; }
  void seed(const std::string& name, std::uint64_t value) { j_["seeds"][name] = value; }
  void input(const fs::path& p) { j_["inputs"][p.string()] = sha256_file(p); }
  // Outputs must be reproduced bitwise by a replay; timed outputs embed
  // wall-clock measurements and are only recorded.
  void output(const fs::path& p) { j_["outputs"][p.string()] = sha256_file(p); }
  void timed_output(const fs::path& p) { j_["timed_outputs"][p.string()] = sha256_file(p); }

  void write(const fs::path& p) const {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    out << j_.dump(2) << '\n';
    if (!out) throw IoError("write to " + p.string() + " failed");
  }

 private:
  json j_;
};

fs::path manifest_path(const std::optional<std::string>& flag, const fs::path& primary) {
  if (flag) return *flag;
  return fs::path(primary.string() + ".manifest.json");
}

std::vector<int> parse_grid(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("grid must look like 64 or 64x64, got '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError("grid must look like 64 or 64x64, got '" + text + "'");
  return out;
}

std::vector<ContextSet> contexts_of(const SignalSet& set) {
  std::vector<ContextSet> out;
  out.reserve(set.signals.size());
  for (const auto& s : set.signals) out.push_back(to_context(s));
  return out;
}

void check_data_matches(const SignalSet& set, const ModelConfig& model) {
  const auto& s = set.signals.front();
  if (static_cast<int>(s.shape.size()) != model.in_dim || s.channels != model.out_dim)
    throw DataError("signals are " + std::to_string(s.shape.size()) + "-dimensional with " +
                    std::to_string(s.channels) + " channel(s); the model expects " + std::to_string(model.in_dim) +
                    " and " + std::to_string(model.out_dim));
}

// Held-out positions drawn from `seed`, sorted.
std::vector<std::size_t> holdout(std::size_t n, double fraction, std::uint64_t seed) {
  if (n < 2) throw DataError("need at least two signals to hold some out");
  const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x7e57u};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

struct Quality {
  double psnr = 0.0;
  double ssim = 0.0;
};

// Fits every context and scores the reconstruction on its own lattice.
std::vector<Quality> score_fits(const SharedParams& shared, const SignalSet& set, const std::vector<std::size_t>& which,
                                int steps, double alpha) {
  std::vector<Quality> out;
  for (std::size_t i : which) {
    const GridSignal& g = set.signals[i];
    const FitResult fit = fit_latent(shared, to_context(g), steps, alpha);
    const GridSignal rec = reconstruct(shared, fit.latent, g.shape);
    out.push_back({psnr(mse(rec, g)), ssim(rec, g)});
  }
  return out;
}

// ---------------------------------------------------------------- options

struct ModelFlags {
  std::optional<int> layers, hidden, latent;
  std::optional<double> omega_first, omega_last;

  void add(CLI::App* sub, bool with_omega) {
    sub->add_option("--layers", layers, published("number of layers K") + "8 for 1D, 15 for 2D and 3D)");
    sub->add_option("--hidden", hidden, published("hidden width L") + "64 for 1D, 256 for 2D and 3D)");
    sub->add_option("--latent-dim", latent, published("latent size P") + "64 for 1D, 2048 for 2D, 8192 for 3D)");
    if (with_omega) {
      sub->add_option("--omega-first", omega_first, published("first-layer frequency") + "20)");
      sub->add_option("--omega-last", omega_last,
                      published("frequency of the last sine layer") + "200 for 1D, 400 for 2D, 300 for 3D)");
    }
  }

  bool any() const { return layers || hidden || latent || omega_first || omega_last; }

  ModelConfig resolve(const SignalSet& set) const {
    const auto& s = set.signals.front();
    const std::size_t dims = s.shape.size();
    ModelConfig c;
    c.in_dim = static_cast<int>(dims);
    c.out_dim = s.channels;
    c.layers = pick(layers, dims, &Published::layers, "--layers");
    c.hidden = pick(hidden, dims, &Published::hidden, "--hidden");
    c.latent_dim = pick(latent, dims, &Published::latent, "--latent-dim");
    c.omega_first = pick(omega_first, dims, &Published::omega_first, "--omega-first");
    c.omega_last = pick(omega_last, dims, &Published::omega_last, "--omega-last");
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::optional<int> batch;
  std::optional<double> gamma;
  int inner_steps = kPublishedInnerSteps;
  double alpha = kPublishedAlpha;
  double beta = kPublishedBeta;
  std::int64_t iters = kPublishedIters;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 1000;
  int eval_steps = kPublishedTestSteps;
  double val_fraction = 0.05;
  bool constant_lr = false;
  bool first_order = false;
  std::string precision = "double";
  AdamWConfig adam;
  std::vector<CLI::Option*> options;

  void add(CLI::App* sub, std::int64_t default_iters) {
    iters = default_iters;
    const bool published_iters = default_iters == kPublishedIters;
    options = {
        sub->add_option("--batch", batch, published("meta-batch size B") + "64 for 1D, 24 for 2D, 4 for 3D)"),
        sub->add_option("--gamma", gamma,
                        published("inner-loop context selection ratio in (0, 1]") + "1.0 for 1D, 0.25 for 2D and 3D)"),
        sub->add_option("--inner-steps", inner_steps, published("inner-loop steps G") + "10)"),
        sub->add_option("--alpha", alpha, published("inner-loop learning rate") + "1e-2)"),
        sub->add_option("--beta", beta, published("outer learning rate") + "3e-6)"),
        sub->add_option("--iters", iters,
                        published_iters ? published("outer iterations") + "250000)"
                                        : "outer iterations")
            ->capture_default_str(),
        sub->add_option("--seed", seed, "seed for initialization, batching and context sampling")->capture_default_str(),
        sub->add_option("--eval-every", eval_every, "validation interval in iterations, 0 to disable")
            ->capture_default_str(),
        sub->add_option("--eval-steps", eval_steps, published("test-time steps H for validation") + "20)"),
        sub->add_option("--val-fraction", val_fraction, "fraction of signals held out for validation")
            ->capture_default_str(),
        sub->add_flag("--constant-lr", constant_lr, "keep the outer rate at beta instead of cosine annealing"),
        sub->add_flag("--first-order", first_order, "drop the second-order term of the meta-gradient"),
        sub->add_option("--precision", precision, "arithmetic for the meta-gradient")
            ->check(CLI::IsMember({"double", "single"}))
            ->capture_default_str(),
        sub->add_option("--adam-beta1", adam.beta1, "AdamW first-moment decay")->capture_default_str(),
        sub->add_option("--adam-beta2", adam.beta2, "AdamW second-moment decay")->capture_default_str(),
        sub->add_option("--adam-eps", adam.eps, "AdamW epsilon")->capture_default_str(),
        sub->add_option("--weight-decay", adam.weight_decay, "AdamW decoupled weight decay")->capture_default_str(),
    };
  }

  const CLI::Option* first_given() const {
    for (const CLI::Option* o : options)
      if (o->count() > 0) return o;
    return nullptr;
  }

  TrainConfig resolve(std::size_t dims) const {
    TrainConfig c;
    c.batch_size = pick(batch, dims, &Published::batch, "--batch");
    c.gamma = pick(gamma, dims, &Published::gamma, "--gamma");
    c.inner_steps = inner_steps;
    c.alpha = alpha;
    c.beta = beta;
    c.total_iters = iters;
    c.seed = seed;
    c.eval_every = eval_every;
    c.eval_steps = eval_steps;
    c.val_fraction = val_fraction;
    c.cosine_schedule = !constant_lr;
    c.first_order = first_order;
    c.precision = precision == "single" ? Precision::Single : Precision::Double;
    c.adam = adam;
    c.validate();
    return c;
  }
};

json model_json(const ModelConfig& c) {
  return {{"layers", c.layers},   {"hidden", c.hidden},       {"latent_dim", c.latent_dim},
          {"in_dim", c.in_dim},   {"out_dim", c.out_dim},     {"omega_first", c.omega_first},
          {"omega_last", c.omega_last}};
}

json train_json(const TrainConfig& c) {
  return {{"batch", c.batch_size},
          {"iters", c.total_iters},
          {"inner_steps", c.inner_steps},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"eval_steps", c.eval_steps},
          {"val_fraction", c.val_fraction},
          {"cosine_schedule", c.cosine_schedule},
          {"first_order", c.first_order},
          {"precision", c.precision == Precision::Single ? "single" : "double"},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"weight_decay", c.adam.weight_decay}};
}

// --------------------------------------------------------------- commands

struct SynthArgs {
  std::string kind;
  int count = 0;
  std::optional<int> size;
  int classes = 2;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<std::string> manifest;
};

int cmd_synth(const SynthArgs& a, Manifest& m, std::ostream& out) {
  if (a.count < 1) throw ConfigError("--count must be >= 1");
  SignalSet set;
  int size = 0;
  if (a.kind == "1d") {
    size = a.size.value_or(64);
    set.signals = synth_1d(a.count, size, a.seed);
  } else {
    size = a.size.value_or(32);
    set = synth_2d(a.count, size, a.classes, a.seed);
  }
  save_signals(set, a.out);
  m.seed("synth", a.seed);
  m.resolved() = {{"kind", a.kind}, {"count", a.count}, {"size", size}};
  if (a.kind == "2d") m.resolved()["classes"] = a.classes;
  m.output(a.out);
  out << "wrote " << a.count << " signals to " << a.out << '\n';
  return kOk;
}

struct TrainArgs {
  std::string data, out;
  std::optional<std::string> log, resume, manifest;
  std::optional<std::int64_t> stop_at;
  int threads = 1;
  ModelFlags model;
  TrainFlags train;
};

int cmd_train(const TrainArgs& a, Manifest& m, std::ostream& out, std::ostream& err) {
  const SignalSet set = load_signals(a.data);
  m.input(a.data);
  const auto contexts = contexts_of(set);

  ModelConfig model;
  TrainConfig config;
  std::optional<Checkpoint> resume;
  if (a.resume) {
    if (a.model.any()) throw UsageError("--resume takes the model configuration from the checkpoint");
    if (const CLI::Option* o = a.train.first_given())
      throw UsageError("--resume takes the training configuration from the checkpoint; drop " + o->get_name());
    resume = load_checkpoint(*a.resume);
    m.input(*a.resume);
    model = resume->shared.config;
    config = resume->train;
  } else {
    model = a.model.resolve(set);
    config = a.train.resolve(set.signals.front().shape.size());
  }
  check_data_matches(set, model);
  m.resolved() = {{"model", model_json(model)}, {"train", train_json(config)}, {"threads", a.threads}};
  m.seed("train", config.seed);

  const fs::path log_path = a.log ? fs::path(*a.log) : fs::path(a.out + ".log.jsonl");
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open " + log_path.string() + " for writing");

  TrainOptions options;
  options.threads = a.threads;
  options.stop_at = a.stop_at;
  if (resume) options.resume = &*resume;
  options.on_log = [&](const LogRecord& r) { log << r.to_json() << '\n' << std::flush; };
  const TrainResult result = train(contexts, model, config, options);
  log.close();

  save_checkpoint(result.checkpoint, a.out);
  m.output(a.out);
  m.timed_output(log_path);

  const Checkpoint& ck = result.checkpoint;
  out << "iterations " << ck.iteration << '/' << config.total_iters;
  if (!result.log.empty()) out << ", last meta-loss " << result.log.back().meta_loss;
  if (ck.best) out << ", best validation PSNR " << ck.best_val_psnr << " dB at iteration " << ck.best_iteration;
  out << '\n';
  if (result.halted) {
    err << "error: training stopped at a non-finite step (" << result.halt_reason
        << "); the checkpoint holds the last good state\n";
    return kNumerical;
  }
  return kOk;
}

struct FitArgs {
  std::string checkpoint, data, out;
  std::optional<std::string> manifest;
  int steps = kPublishedTestSteps;
  double alpha = kPublishedAlpha;
  int threads = 1;
};

int cmd_fit(const FitArgs& a, Manifest& m, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  m.input(a.checkpoint);
  const SignalSet set = load_signals(a.data);
  m.input(a.data);
  const SharedParams& shared = ck.selected();
  check_data_matches(set, shared.config);
  const auto contexts = contexts_of(set);
  const LatentDataset d = encode_dataset(shared, contexts, a.steps, a.alpha, set.labels, a.threads);
  save_latents(d, a.out);
  m.resolved() = {{"steps", a.steps}, {"alpha", a.alpha}, {"checkpoint_id", d.checkpoint_id}};
  m.output(a.out);
  out << "encoded " << d.size() << " signals into " << a.out << '\n';
  if (!d.failed.empty()) err << "warning: " << d.failed.size() << " fit(s) failed and hold NaN rows\n";
  return kOk;
}

struct ReconstructArgs {
  std::string checkpoint, latents, data, out_dir;
  std::optional<std::string> grid, manifest;
  bool no_images = false;
};

int cmd_reconstruct(const ReconstructArgs& a, Manifest& m, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  m.input(a.checkpoint);
  const LatentDataset d = load_latents(a.latents);
  m.input(a.latents);
  const SignalSet set = load_signals(a.data);
  m.input(a.data);
  const SharedParams& shared = ck.selected();
  if (d.checkpoint_id != checkpoint_id(shared))
    throw DataError("latents were produced by a different checkpoint");
  if (d.size() != set.signals.size()) throw DataError("latent and signal counts differ");
  if (d.latents.cols() != shared.config.latent_dim) throw DataError("latent size differs from the model");
  check_data_matches(set, shared.config);

  const std::vector<int> data_shape = set.signals.front().shape;
  const std::vector<int> grid = a.grid ? parse_grid(*a.grid) : data_shape;
  if (grid.size() != data_shape.size()) throw UsageError("--grid needs one size per signal axis");
  fs::create_directories(a.out_dir);

  json per_mse = json::array(), per_psnr = json::array(), per_ssim = json::array();
  double sum_mse = 0.0, sum_psnr = 0.0, sum_ssim = 0.0;
  std::size_t scored = 0;
  SignalSet recon;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Latent z{d.latents.row(static_cast<Eigen::Index>(i)).transpose()};
    if (!z.phi.allFinite()) {
      per_mse.push_back(nullptr);
      per_psnr.push_back(nullptr);
      per_ssim.push_back(nullptr);
      recon.signals.push_back(GridSignal{grid, shared.config.out_dim,
                                         std::vector<double>(static_cast<std::size_t>(shared.config.out_dim) *
                                                                 GridSignal{grid, 1, {}}.points(),
                                                             0.0)});
      continue;
    }
    // Metrics use raw outputs on the data lattice.
    const GridSignal at_data = reconstruct(shared, z, data_shape);
    const double e = mse(at_data, set.signals[i]);
    const double p = psnr(e);
    const double s = ssim(at_data, set.signals[i]);
    per_mse.push_back(e);
    per_psnr.push_back(number_or_string(p));
    per_ssim.push_back(s);
    sum_mse += e;
    sum_psnr += p;
    sum_ssim += s;
    ++scored;
    recon.signals.push_back(grid == data_shape ? at_data : reconstruct(shared, z, grid));
  }

  const fs::path recon_path = fs::path(a.out_dir) / "reconstructions.mfsg";
  recon.labels = set.labels;
  save_signals(recon, recon_path);
  m.output(recon_path);
  if (!a.no_images && grid.size() == 2 && shared.config.out_dim == 1) {
    for (std::size_t i = 0; i < recon.signals.size(); ++i) {
      std::ostringstream name;
      name << "recon_" << std::setw(5) << std::setfill('0') << i << ".pgm";
      const fs::path p = fs::path(a.out_dir) / name.str();
      write_pgm(recon.signals[i], p);
      m.output(p);
    }
  }

  const double n = static_cast<double>(std::max<std::size_t>(scored, 1));
  json metrics = {{"count", d.size()},
                  {"scored", scored},
                  {"grid", grid},
                  {"mse", per_mse},
                  {"psnr", per_psnr},
                  {"ssim", per_ssim},
                  {"mean_mse", sum_mse / n},
                  {"mean_psnr", number_or_string(sum_psnr / n)},
                  {"mean_ssim", sum_ssim / n}};
  const fs::path metrics_path = fs::path(a.out_dir) / "metrics.json";
  std::ofstream mf(metrics_path, std::ios::trunc);
  if (!mf) throw IoError("cannot open " + metrics_path.string() + " for writing");
  mf << metrics.dump(2) << '\n';
  mf.close();
  m.output(metrics_path);
  out << "mean PSNR " << sum_psnr / n << " dB, mean SSIM " << sum_ssim / n << " over " << scored << " signals\n";
  return kOk;
}

struct GridsearchArgs {
  std::string data, out;
  std::optional<std::string> manifest;
  std::vector<double> omega1{10, 20, 30, 40, 50};
  std::vector<double> delta{1, 2, 5, 10, 20};
  double test_fraction = 0.1;
  int test_steps = kPublishedTestSteps;
  int threads = 1;
  ModelFlags model;
  TrainFlags train;
};

int cmd_gridsearch(const GridsearchArgs& a, Manifest& m, std::ostream& out, std::ostream& err) {
  const SignalSet set = load_signals(a.data);
  m.input(a.data);
  const auto contexts = contexts_of(set);
  const std::size_t dims = set.signals.front().shape.size();
  TrainConfig config = a.train.resolve(dims);
  config.eval_every = 0;
  const auto test_idx = holdout(contexts.size(), a.test_fraction, config.seed);
  std::vector<ContextSet> train_set;
  for (std::size_t i = 0, t = 0; i < contexts.size(); ++i) {
    if (t < test_idx.size() && test_idx[t] == i) {
      ++t;
      continue;
    }
    train_set.push_back(contexts[i]);
  }

  std::ofstream csv(a.out, std::ios::trunc);
  if (!csv) throw IoError("cannot open " + a.out + " for writing");
  csv << "omega1,omegaK,psnr,ssim\n";
  json cells = json::array();
  for (double w1 : a.omega1) {
    for (double delta : a.delta) {
      ModelFlags flags = a.model;
      flags.omega_first = w1;
      flags.omega_last = delta * w1;
      const ModelConfig model = flags.resolve(set);
      TrainOptions options;
      options.threads = a.threads;
      const TrainResult r = train(train_set, model, config, options);
      if (r.halted) throw NumericalError("omega1 " + std::to_string(w1) + ", omegaK " +
                                         std::to_string(delta * w1) + ": " + r.halt_reason);
      const auto q = score_fits(r.checkpoint.selected(), set, test_idx, a.test_steps, config.alpha);
      double p = 0.0, s = 0.0;
      for (const auto& x : q) {
        p += x.psnr;
        s += x.ssim;
      }
      p /= static_cast<double>(q.size());
      s /= static_cast<double>(q.size());
      csv << w1 << ',' << delta * w1 << ',' << std::setprecision(10) << p << ',' << s << '\n'
          << std::setprecision(6);
      err << "omega1 " << w1 << ", omegaK " << delta * w1 << ": PSNR " << p << " dB, SSIM " << s << '\n';
      cells.push_back({{"omega1", w1}, {"omegaK", delta * w1}});
    }
  }
  csv.close();
  m.resolved() = {{"train", train_json(config)}, {"test_fraction", a.test_fraction}, {"test_steps", a.test_steps},
                  {"cells", cells}};
  m.seed("train", config.seed);
  m.output(a.out);
  out << "wrote " << a.omega1.size() * a.delta.size() << " rows to " << a.out << '\n';
  return kOk;
}

struct DynamicsArgs {
  EquivalenceSetup setup;
  bool unscaled = false;
  std::optional<std::string> out, manifest;
};

int cmd_dynamics(const DynamicsArgs& a, Manifest& m, std::ostream& out) {
  EquivalenceSetup s = a.setup;
  s.scale_lr = !a.unscaled;
  const EquivalenceReport r = omega_lr_equivalence(s);
  const json report = {{"omega_m", s.omega_m},
                       {"omega_n", s.omega_n},
                       {"tau_m", s.tau_m},
                       {"tau_n", r.tau_n},
                       {"steps", s.steps},
                       {"scaled", s.scale_lr},
                       {"max_rel_deviation", r.max_rel_deviation},
                       {"max_rel_deviation_weights", r.max_rel_deviation_weights},
                       {"max_rel_deviation_biases", r.max_rel_deviation_biases}};
  m.seed("init", s.seed);
  if (a.out) {
    std::ofstream f(*a.out, std::ios::trunc);
    if (!f) throw IoError("cannot open " + *a.out + " for writing");
    f << report.dump(2) << '\n';
    f.close();
    m.output(*a.out);
  } else {
    out << report.dump(2) << '\n';
  }
  return kOk;
}

struct ClassifyArgs {
  std::string train, test, mode = "knn";
  std::optional<std::string> out, manifest;
  int k = 1;
  MlpOptions mlp;
  double val_fraction = 0.1;
  int threads = 1;
};

struct Labelled {
  MatrixXd x;
  std::vector<int> y;
};

Labelled usable_rows(const LatentDataset& d, const std::string& name, std::ostream& err) {
  if (!d.labels) throw DataError(name + " latents carry no labels");
  Labelled out;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d.latents.rows(); ++i)
    if (d.latents.row(i).allFinite()) keep.push_back(i);
  if (keep.size() != d.size())
    err << "warning: skipping " << d.size() - keep.size() << " failed row(s) in " << name << '\n';
  if (keep.empty()) throw DataError(name + " latents have no usable rows");
  out.x = d.latents(keep, Eigen::all);
  for (auto i : keep) out.y.push_back((*d.labels)[static_cast<std::size_t>(i)]);
  return out;
}

int cmd_classify(const ClassifyArgs& a, Manifest& m, std::ostream& out, std::ostream& err) {
  const LatentDataset tr = load_latents(a.train);
  m.input(a.train);
  const LatentDataset te = load_latents(a.test);
  m.input(a.test);
  if (tr.latents.cols() != te.latents.cols()) throw DataError("training and test latents differ in size");
  const Labelled train_rows = usable_rows(tr, "training", err);
  const Labelled test_rows = usable_rows(te, "test", err);
  const int n_classes = 1 + std::max(*std::max_element(train_rows.y.begin(), train_rows.y.end()),
                                     *std::max_element(test_rows.y.begin(), test_rows.y.end()));

  json report = {{"mode", a.mode}};
  ClassifierReport r;
  if (a.mode == "knn") {
    const auto pred = knn_predict(train_rows.x, train_rows.y, test_rows.x, a.k, a.threads);
    r = evaluate(pred, test_rows.y, n_classes);
    report["k"] = a.k;
  } else {
    const auto val_idx = holdout(train_rows.y.size(), a.val_fraction, a.mlp.seed);
    std::vector<Eigen::Index> fit_rows, val_rows;
    for (std::size_t i = 0, v = 0; i < train_rows.y.size(); ++i) {
      if (v < val_idx.size() && val_idx[v] == i) {
        val_rows.push_back(static_cast<Eigen::Index>(i));
        ++v;
      } else {
        fit_rows.push_back(static_cast<Eigen::Index>(i));
      }
    }
    auto labels_at = [&](const std::vector<Eigen::Index>& rows) {
      std::vector<int> y;
      for (auto i : rows) y.push_back(train_rows.y[static_cast<std::size_t>(i)]);
      return y;
    };
    const MlpTrainResult fit = train_mlp(train_rows.x(fit_rows, Eigen::all), labels_at(fit_rows),
                                         train_rows.x(val_rows, Eigen::all), labels_at(val_rows), n_classes, a.mlp);
    r = evaluate(fit.model.predict(test_rows.x), test_rows.y, n_classes);
    r.n_params = MlpModel::param_count(fit.model.in_dim, fit.model.hidden1, fit.model.hidden2, fit.model.classes);
    r.train_seconds = fit.train_seconds;
    report["best_epoch"] = fit.best_epoch;
    report["best_val_accuracy"] = fit.best_val_accuracy;
    m.seed("mlp", a.mlp.seed);
  }
  report["accuracy"] = r.accuracy;
  report["macro_f1"] = r.macro_f1;
  report["per_class_f1"] = r.per_class_f1;
  report["confusion"] = r.confusion;
  report["n_params"] = r.n_params;
  report["train_seconds"] = r.train_seconds;
  report["n_train"] = train_rows.y.size();
  report["n_test"] = test_rows.y.size();

  if (a.out) {
    std::ofstream f(*a.out, std::ios::trunc);
    if (!f) throw IoError("cannot open " + *a.out + " for writing");
    f << report.dump(2) << '\n';
    f.close();
    m.timed_output(*a.out);
  } else {
    out << report.dump(2) << '\n';
  }
  return kOk;
}

struct ReplayArgs {
  std::string manifest;
};

int cmd_replay(const ReplayArgs& a, std::ostream& out, std::ostream& err) {
  std::ifstream in(a.manifest);
  if (!in) throw IoError("cannot open " + a.manifest);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.contains("argv") || !j.contains("outputs")) throw DataError("manifest lacks argv or outputs");
  const auto args = j["argv"].get<std::vector<std::string>>();
  if (!args.empty() && args.front() == "replay") throw DataError("refusing to replay a replay");
  for (const auto& [path, hash] : j["inputs"].items())
    if (sha256_file(path) != hash.get<std::string>()) throw DataError("input " + path + " changed since the run");

  const int code = run(args, out, err);
  if (code != kOk) return code;
  std::size_t mismatches = 0;
  for (const auto& [path, hash] : j["outputs"].items()) {
    const std::string now = sha256_file(path);
    if (now != hash.get<std::string>()) {
      err << "mismatch: " << path << '\n';
      ++mismatches;
    }
  }
  if (mismatches > 0) throw DataError(std::to_string(mismatches) + " output(s) differ from the manifest");
  out << "replay reproduced " << j["outputs"].size() << " output(s)\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Meta-learned modulated sine-network fields: synthesize data, meta-train, fit, evaluate."};
  app.name("modsiren");
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic signal set");
  s->add_option("--kind", synth.kind, "signal family")->required()->check(CLI::IsMember({"1d", "2d"}));
  s->add_option("--count", synth.count, "number of signals")->required();
  s->add_option("--size", synth.size, "length (1d, default 64) or side (2d, default 32)");
  s->add_option("--classes", synth.classes, "number of classes for 2d")->capture_default_str();
  s->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
  s->add_option("--out", synth.out, "output signal file")->required();
  s->add_option("--manifest", synth.manifest, "run manifest path (default: <out>.manifest.json)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "meta-train shared parameters");
  t->add_option("--data", tr.data, "training signal file")->required()->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "output checkpoint")->required();
  t->add_option("--log", tr.log, "JSON Lines log (default: <out>.log.jsonl)");
  t->add_option("--resume", tr.resume, "continue from this checkpoint with its stored configuration");
  t->add_option("--stop-at", tr.stop_at, "stop after this many iterations, keeping the full-run schedule");
  t->add_option("--threads", tr.threads, "worker threads")->capture_default_str();
  t->add_option("--manifest", tr.manifest, "run manifest path (default: <out>.manifest.json)");
  tr.model.add(t, true);
  tr.train.add(t, kPublishedIters);

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "fit latents for every signal with a trained checkpoint");
  f->add_option("--checkpoint", fit.checkpoint, "trained checkpoint")->required();
  f->add_option("--data", fit.data, "signal file")->required();
  f->add_option("--out", fit.out, "output latent file")->required();
  f->add_option("--steps", fit.steps, published("test-time steps H") + "20)");
  f->add_option("--alpha", fit.alpha, published("test-time learning rate") + "1e-2)");
  f->add_option("--threads", fit.threads, "worker threads")->capture_default_str();
  f->add_option("--manifest", fit.manifest, "run manifest path (default: <out>.manifest.json)");

  ReconstructArgs rec;
  auto* r = app.add_subcommand("reconstruct", "evaluate fitted fields, write images and metrics");
  r->add_option("--checkpoint", rec.checkpoint, "trained checkpoint")->required();
  r->add_option("--latents", rec.latents, "latent file from fit")->required();
  r->add_option("--data", rec.data, "original signals, for metrics")->required();
  r->add_option("--grid", rec.grid, "output lattice such as 128x128 (default: the data lattice)");
  r->add_option("--out-dir", rec.out_dir, "output directory")->required();
  r->add_flag("--no-images", rec.no_images, "skip PGM export");
  r->add_option("--manifest", rec.manifest, "run manifest path (default: <out-dir>/manifest.json)");

  GridsearchArgs gs;
  auto* g = app.add_subcommand("gridsearch", "sweep first and last sine-layer frequencies");
  g->add_option("--data", gs.data, "signal file")->required()->check(CLI::ExistingFile);
  g->add_option("--out", gs.out, "output CSV")->required();
  g->add_option("--omega1", gs.omega1, "first-layer frequencies")->delimiter(',')->capture_default_str();
  g->add_option("--delta", gs.delta, "ratios omegaK / omega1")->delimiter(',')->capture_default_str();
  g->add_option("--test-fraction", gs.test_fraction, "held-out fraction scored per cell")->capture_default_str();
  g->add_option("--test-steps", gs.test_steps, published("test-time steps H") + "20)");
  g->add_option("--threads", gs.threads, "worker threads")->capture_default_str();
  g->add_option("--manifest", gs.manifest, "run manifest path (default: <out>.manifest.json)");
  gs.model.add(g, false);
  gs.train.add(g, 5000);

  DynamicsArgs dyn;
  auto* d = app.add_subcommand("dynamics", "check the frequency / learning-rate equivalence of a sine layer");
  d->add_option("--omega-m", dyn.setup.omega_m, "reference frequency")->capture_default_str();
  d->add_option("--omega-n", dyn.setup.omega_n, "compared frequency")->capture_default_str();
  d->add_option("--tau-m", dyn.setup.tau_m, "reference learning rate")->capture_default_str();
  d->add_option("--steps", dyn.setup.steps, "SGD steps")->capture_default_str();
  d->add_option("--out-dim", dyn.setup.out_dim, "layer outputs")->capture_default_str();
  d->add_option("--in-dim", dyn.setup.in_dim, "layer inputs")->capture_default_str();
  d->add_option("--samples", dyn.setup.samples, "training samples")->capture_default_str();
  d->add_option("--seed", dyn.setup.seed, "seed for weights and data")->capture_default_str();
  d->add_flag("--unscaled", dyn.unscaled, "use the reference learning rate for both layers");
  d->add_option("--out", dyn.out, "report JSON (default: stdout)");
  d->add_option("--manifest", dyn.manifest, "run manifest path (default: <out>.manifest.json or dynamics.manifest.json)");

  ClassifyArgs cls;
  auto* c = app.add_subcommand("classify", "classify labelled latents");
  c->add_option("--train", cls.train, "training latents")->required();
  c->add_option("--test", cls.test, "test latents")->required();
  c->add_option("--mode", cls.mode, "classifier")->check(CLI::IsMember({"knn", "mlp"}))->capture_default_str();
  c->add_option("--k", cls.k, "neighbours for knn")->capture_default_str();
  c->add_option("--hidden1", cls.mlp.hidden1, "first MLP hidden width")->capture_default_str();
  c->add_option("--hidden2", cls.mlp.hidden2, "second MLP hidden width")->capture_default_str();
  c->add_option("--dropout", cls.mlp.dropout, "MLP dropout rate")->capture_default_str();
  c->add_option("--epochs", cls.mlp.epochs, published("MLP epochs") + "50)");
  c->add_option("--lr", cls.mlp.lr, published("MLP AdamW learning rate") + "1e-3)");
  c->add_option("--weight-decay", cls.mlp.weight_decay, "MLP AdamW weight decay")->capture_default_str();
  c->add_option("--batch-size", cls.mlp.batch_size, "MLP mini-batch size")->capture_default_str();
  c->add_option("--val-fraction", cls.val_fraction, "training fraction held out for epoch selection")
      ->capture_default_str();
  c->add_option("--seed", cls.mlp.seed, "MLP seed")->capture_default_str();
  c->add_option("--threads", cls.threads, "worker threads for knn")->capture_default_str();
  c->add_option("--out", cls.out, "report JSON (default: stdout)");
  c->add_option("--manifest", cls.manifest, "run manifest path (default: <out>.manifest.json or classify.manifest.json)");

  ReplayArgs rep;
  auto* p = app.add_subcommand("replay", "rerun a recorded command and compare output hashes");
  p->add_option("--manifest", rep.manifest, "manifest written by an earlier run")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help or --version
      if (dynamic_cast<const CLI::CallForVersion*>(&e)) {
        out << e.what() << '\n';
      } else {
        const CLI::App* target = &app;
        for (auto* sub : app.get_subcommands()) target = sub;
        out << target->help();
      }
      return kOk;
    }
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  Manifest m(name, args);
  m.flags(*sub);
  try {
    int code = kOk;
    fs::path manifest;
    if (name == "synth") {
      code = cmd_synth(synth, m, out);
      manifest = manifest_path(synth.manifest, synth.out);
    } else if (name == "train") {
      code = cmd_train(tr, m, out, err);
      manifest = manifest_path(tr.manifest, tr.out);
    } else if (name == "fit") {
      code = cmd_fit(fit, m, out, err);
      manifest = manifest_path(fit.manifest, fit.out);
    } else if (name == "reconstruct") {
      code = cmd_reconstruct(rec, m, out);
      manifest = rec.manifest ? fs::path(*rec.manifest) : fs::path(rec.out_dir) / "manifest.json";
    } else if (name == "gridsearch") {
      code = cmd_gridsearch(gs, m, out, err);
      manifest = manifest_path(gs.manifest, gs.out);
    } else if (name == "dynamics") {
      code = cmd_dynamics(dyn, m, out);
      manifest = dyn.manifest ? fs::path(*dyn.manifest)
                              : (dyn.out ? fs::path(*dyn.out + ".manifest.json") : fs::path("dynamics.manifest.json"));
    } else if (name == "classify") {
      code = cmd_classify(cls, m, out, err);
      manifest = cls.manifest ? fs::path(*cls.manifest)
                              : (cls.out ? fs::path(*cls.out + ".manifest.json") : fs::path("classify.manifest.json"));
    } else {
      return cmd_replay(rep, out, err);
    }
    m.write(manifest);
    return code;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  }
}

}  // namespace modsiren::cli
