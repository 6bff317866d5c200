#include "modsiren/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string_view>

#include "json.hpp"
#include "modsiren/errors.hpp"

namespace modsiren {

static_assert(std::endian::native == std::endian::little,
              "container payloads are written in native byte order");

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kPreamble = 16;

enum class Dtype { F32, F64 };

std::size_t dtype_size(Dtype d) { return d == Dtype::F32 ? 4 : 8; }

struct Parsed {
  json header;
  Dtype dtype = Dtype::F64;
  std::vector<double> values;
};

std::string printable(std::string_view bytes) {
  std::string out;
  for (unsigned char c : bytes) {
    if (c >= 0x20 && c < 0x7f) {
      out += static_cast<char>(c);
    } else {
      char buf[5];
      std::snprintf(buf, sizeof buf, "\\x%02x", c);
      out += buf;
    }
  }
  return out;
}

void write_container(const std::filesystem::path& path, std::string_view magic, json header,
                     const std::vector<double>& values, Dtype dtype) {
  header["dtype"] = dtype == Dtype::F32 ? "f32" : "f64";
  header["payload_values"] = values.size();
  const std::string text = header.dump();

  std::string bytes;
  bytes.reserve(kPreamble + text.size() + values.size() * dtype_size(dtype));
  bytes.append(magic);
  const std::uint32_t version = kContainerVersion;
  const std::uint64_t header_len = text.size();
  bytes.append(reinterpret_cast<const char*>(&version), sizeof version);
  bytes.append(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  bytes.append(text);
  if (dtype == Dtype::F32) {
    for (double v : values) {
      const float f = static_cast<float>(v);
      bytes.append(reinterpret_cast<const char*>(&f), sizeof f);
    }
  } else {
    bytes.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

Parsed read_container(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read from " + path.string() + " failed");

  if (bytes.size() < kPreamble)
    throw FormatError("file is " + std::to_string(bytes.size()) + " bytes, shorter than the 16-byte preamble",
                      bytes.size());
  if (std::string_view(bytes.data(), 4) != magic)
    throw FormatError("bad magic: expected '" + std::string(magic) + "', found '" +
                          printable(std::string_view(bytes.data(), 4)) + "'",
                      0);
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, bytes.data() + 4, sizeof version);
  std::memcpy(&header_len, bytes.data() + 8, sizeof header_len);
  if (version != kContainerVersion)
    throw FormatError("unsupported container version " + std::to_string(version), 4);
  const std::uint64_t remaining = bytes.size() - kPreamble;
  if (header_len > remaining)
    throw FormatError("header length " + std::to_string(header_len) + " exceeds the " +
                          std::to_string(remaining) + " bytes after the preamble",
                      8);

  Parsed p;
  try {
    p.header = json::parse(bytes.begin() + kPreamble, bytes.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what(),
                      kPreamble + (e.byte > 0 ? e.byte - 1 : 0));
  }
  if (!p.header.is_object()) throw FormatError("header is not a JSON object", kPreamble);

  std::uint64_t declared = 0;
  try {
    const std::string dtype = p.header.at("dtype").get<std::string>();
    if (dtype == "f32") {
      p.dtype = Dtype::F32;
    } else if (dtype == "f64") {
      p.dtype = Dtype::F64;
    } else {
      throw FormatError("unknown payload dtype '" + dtype + "'", kPreamble);
    }
    declared = p.header.at("payload_values").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("header is missing payload fields: ") + e.what(), kPreamble);
  }

  const std::uint64_t payload_at = kPreamble + header_len;
  const std::uint64_t have = bytes.size() - payload_at;
  const std::uint64_t width = dtype_size(p.dtype);
  if (declared > std::numeric_limits<std::uint64_t>::max() / width)
    throw FormatError("declared payload size overflows", kPreamble);
  const std::uint64_t need = declared * width;
  if (have < need)
    throw FormatError("payload truncated: header declares " + std::to_string(declared) + " values (" +
                          std::to_string(need) + " bytes) but " + std::to_string(have) + " bytes follow",
                      payload_at + have);
  if (have > need)
    throw FormatError(std::to_string(have - need) + " unexpected bytes after the payload", payload_at + need);

  p.values.resize(declared);
  const char* src = bytes.data() + payload_at;
  if (p.dtype == Dtype::F32) {
    for (std::uint64_t i = 0; i < declared; ++i) {
      float f;
      std::memcpy(&f, src + i * 4, 4);
      p.values[i] = f;
    }
  } else {
    std::memcpy(p.values.data(), src, need);
  }
  return p;
}

// Header accessor that reports schema problems as FormatError.
template <typename T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("header field '") + key + "': " + e.what(), kPreamble);
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw FormatError(what, kPreamble);
}

json model_to_json(const ModelConfig& c) {
  return {{"layers", c.layers},       {"hidden", c.hidden},   {"latent_dim", c.latent_dim},
          {"in_dim", c.in_dim},       {"out_dim", c.out_dim}, {"omega_first", c.omega_first},
          {"omega_last", c.omega_last}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.layers = field<int>(j, "layers");
  c.hidden = field<int>(j, "hidden");
  c.latent_dim = field<int>(j, "latent_dim");
  c.in_dim = field<int>(j, "in_dim");
  c.out_dim = field<int>(j, "out_dim");
  c.omega_first = field<double>(j, "omega_first");
  c.omega_last = field<double>(j, "omega_last");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("stored model configuration is invalid: ") + e.what(), kPreamble);
  }
  return c;
}

json train_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"total_iters", c.total_iters},
          {"inner_steps", c.inner_steps},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"weight_decay", c.adam.weight_decay},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"eval_steps", c.eval_steps},
          {"val_fraction", c.val_fraction},
          {"cosine_schedule", c.cosine_schedule},
          {"first_order", c.first_order},
          {"precision", c.precision == Precision::Single ? "single" : "double"}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.batch_size = field<int>(j, "batch_size");
  c.total_iters = field<std::int64_t>(j, "total_iters");
  c.inner_steps = field<int>(j, "inner_steps");
  c.alpha = field<double>(j, "alpha");
  c.beta = field<double>(j, "beta");
  c.gamma = field<double>(j, "gamma");
  c.adam.beta1 = field<double>(j, "adam_beta1");
  c.adam.beta2 = field<double>(j, "adam_beta2");
  c.adam.eps = field<double>(j, "adam_eps");
  c.adam.weight_decay = field<double>(j, "weight_decay");
  c.seed = field<std::uint64_t>(j, "seed");
  c.eval_every = field<std::int64_t>(j, "eval_every");
  c.eval_steps = field<int>(j, "eval_steps");
  c.val_fraction = field<double>(j, "val_fraction");
  c.cosine_schedule = field<bool>(j, "cosine_schedule");
  c.first_order = field<bool>(j, "first_order");
  const auto precision = field<std::string>(j, "precision");
  require(precision == "single" || precision == "double", "unknown precision '" + precision + "'");
  c.precision = precision == "single" ? Precision::Single : Precision::Double;
  return c;
}

void append(std::vector<double>& out, const VectorXd& v) { out.insert(out.end(), v.data(), v.data() + v.size()); }

}  // namespace

void save_signals(const SignalSet& set, const std::filesystem::path& path) {
  if (set.signals.empty()) throw UsageError("signal set is empty");
  const GridSignal& first = set.signals.front();
  std::vector<double> values;
  values.reserve(set.signals.size() * first.values.size());
  for (const auto& s : set.signals) {
    s.validate();
    if (s.shape != first.shape || s.channels != first.channels)
      throw UsageError("all signals in a set must share shape and channel count");
    values.insert(values.end(), s.values.begin(), s.values.end());
  }
  if (set.labels && set.labels->size() != set.signals.size())
    throw UsageError("label count differs from signal count");

  bool exact_in_float = true;
  for (double v : values)
    if (static_cast<double>(static_cast<float>(v)) != v) {
      exact_in_float = false;
      break;
    }

  json h = {{"kind", "signals"}, {"count", set.signals.size()}, {"shape", first.shape}, {"channels", first.channels}};
  if (set.labels) h["labels"] = *set.labels;
  write_container(path, "MFSG", std::move(h), values, exact_in_float ? Dtype::F32 : Dtype::F64);
}

SignalSet load_signals(const std::filesystem::path& path) {
  Parsed p = read_container(path, "MFSG");
  const auto count = field<std::uint64_t>(p.header, "count");
  const auto shape = field<std::vector<int>>(p.header, "shape");
  const auto channels = field<int>(p.header, "channels");
  require(count >= 1, "signal count must be >= 1");
  require(!shape.empty(), "signal shape has no axes");
  std::uint64_t per_signal = static_cast<std::uint64_t>(std::max(channels, 0));
  for (int s : shape) {
    require(s >= 1, "signal axis sizes must be >= 1");
    per_signal *= static_cast<std::uint64_t>(s);
  }
  require(channels >= 1, "channel count must be >= 1");
  require(per_signal * count == p.values.size(),
          "shape mismatch: " + std::to_string(count) + " signals of " + std::to_string(per_signal) +
              " values need " + std::to_string(per_signal * count) + " payload values, header declares " +
              std::to_string(p.values.size()));

  SignalSet set;
  if (p.header.contains("labels")) {
    set.labels = field<std::vector<int>>(p.header, "labels");
    require(set.labels->size() == count, "label count differs from signal count");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    GridSignal s{shape, channels, {}};
    const auto begin = p.values.begin() + static_cast<std::ptrdiff_t>(i * per_signal);
    s.values.assign(begin, begin + static_cast<std::ptrdiff_t>(per_signal));
    for (double v : s.values) require(std::isfinite(v), "signal payload has non-finite values");
    set.signals.push_back(std::move(s));
  }
  return set;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto n = ck.shared.size();
  if (ck.optimizer.m.size() != static_cast<Eigen::Index>(n) || ck.optimizer.v.size() != static_cast<Eigen::Index>(n))
    throw UsageError("optimizer state does not match the parameter count");
  json sections = json::array({{{"name", "shared"}, {"values", n}},
                               {{"name", "adam_m"}, {"values", n}},
                               {{"name", "adam_v"}, {"values", n}}});
  std::vector<double> values;
  values.reserve(4 * n);
  append(values, ck.shared.flatten());
  append(values, ck.optimizer.m);
  append(values, ck.optimizer.v);
  if (ck.best) {
    if (!(ck.best->config == ck.shared.config)) throw UsageError("best parameters use a different model");
    sections.push_back({{"name", "best"}, {"values", n}});
    append(values, ck.best->flatten());
  }
  json h = {{"kind", "checkpoint"},
            {"model", model_to_json(ck.shared.config)},
            {"train", train_to_json(ck.train)},
            {"iteration", ck.iteration},
            {"optimizer_step", ck.optimizer.step},
            {"rng_state", ck.rng_state},
            {"sections", sections}};
  if (ck.best) {
    h["best_iteration"] = ck.best_iteration;
    // JSON has no infinity; a perfect validation fit is stored as null.
    h["best_val_psnr"] = std::isfinite(ck.best_val_psnr) ? json(ck.best_val_psnr) : json(nullptr);
  }
  write_container(path, "MFCK", std::move(h), values, Dtype::F64);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Parsed p = read_container(path, "MFCK");
  Checkpoint ck;
  const ModelConfig model = model_from_json(p.header.contains("model") ? p.header["model"] : json());
  ck.train = train_from_json(p.header.contains("train") ? p.header["train"] : json());
  ck.iteration = field<std::int64_t>(p.header, "iteration");
  ck.optimizer.step = field<std::int64_t>(p.header, "optimizer_step");
  ck.rng_state = field<std::string>(p.header, "rng_state");

  ck.shared = init_shared(model, 0);
  const auto n = static_cast<Eigen::Index>(ck.shared.size());
  const auto sections = field<json>(p.header, "sections");
  require(sections.is_array(), "sections must be an array");
  std::vector<std::string> names;
  std::uint64_t total = 0;
  for (const auto& s : sections) {
    names.push_back(field<std::string>(s, "name"));
    require(field<std::int64_t>(s, "values") == n,
            "section '" + names.back() + "' does not match the model's parameter count " + std::to_string(n));
    total += static_cast<std::uint64_t>(n);
  }
  const bool has_best = names.size() == 4;
  require((names.size() == 3 || has_best) && names[0] == "shared" && names[1] == "adam_m" && names[2] == "adam_v" &&
              (!has_best || names[3] == "best"),
          "unexpected checkpoint sections");
  require(total == p.values.size(), "shape mismatch: sections cover " + std::to_string(total) +
                                        " values, payload declares " + std::to_string(p.values.size()));

  auto section = [&](std::size_t i) { return Eigen::Map<const VectorXd>(p.values.data() + i * static_cast<std::size_t>(n), n); };
  ck.shared.assign(section(0));
  ck.optimizer.m = section(1);
  ck.optimizer.v = section(2);
  if (has_best) {
    ck.best = ck.shared;
    ck.best->assign(section(3));
    ck.best_iteration = field<std::int64_t>(p.header, "best_iteration");
    const json& score = p.header.at("best_val_psnr");
    ck.best_val_psnr = score.is_null() ? std::numeric_limits<double>::infinity() : field<double>(p.header, "best_val_psnr");
  }
  return ck;
}

void save_latents(const LatentDataset& d, const std::filesystem::path& path) {
  if (d.latents.rows() < 1) throw UsageError("latent dataset is empty");
  if (d.checkpoint_id.empty()) throw UsageError("latent dataset has no checkpoint id");
  if (d.labels && d.labels->size() != d.size()) throw UsageError("label count differs from row count");
  std::vector<double> values(static_cast<std::size_t>(d.latents.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), d.latents.rows(), d.latents.cols()) = d.latents;
  json h = {{"kind", "latents"},         {"count", d.latents.rows()}, {"latent_dim", d.latents.cols()},
            {"checkpoint_id", d.checkpoint_id}, {"steps", d.steps},   {"alpha", d.alpha},
            {"failed", d.failed}};
  if (d.labels) h["labels"] = *d.labels;
  write_container(path, "MFLD", std::move(h), values, Dtype::F64);
}

LatentDataset load_latents(const std::filesystem::path& path) {
  Parsed p = read_container(path, "MFLD");
  LatentDataset d;
  const auto count = field<std::int64_t>(p.header, "count");
  const auto dim = field<std::int64_t>(p.header, "latent_dim");
  require(count >= 1 && dim >= 1, "latent dataset dimensions must be >= 1");
  require(static_cast<std::uint64_t>(count * dim) == p.values.size(),
          "shape mismatch: " + std::to_string(count) + " x " + std::to_string(dim) +
              " latents, payload declares " + std::to_string(p.values.size()));
  d.checkpoint_id = field<std::string>(p.header, "checkpoint_id");
  require(!d.checkpoint_id.empty(), "checkpoint id is empty");
  d.steps = field<int>(p.header, "steps");
  d.alpha = field<double>(p.header, "alpha");
  d.failed = field<std::vector<std::size_t>>(p.header, "failed");
  if (p.header.contains("labels")) {
    d.labels = field<std::vector<int>>(p.header, "labels");
    require(static_cast<std::int64_t>(d.labels->size()) == count, "label count differs from row count");
  }
  d.latents = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      p.values.data(), count, dim);
  return d;
}

}  // namespace modsiren
