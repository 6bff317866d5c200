#include <chrono>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "modsiren/adaptation.hpp"
#include "modsiren/errors.hpp"
#include "modsiren/gradient_engine.hpp"
#include "modsiren/hashing.hpp"
#include "modsiren/meta_trainer.hpp"
#include "modsiren/signal.hpp"

using namespace modsiren;

namespace {

ModelConfig model_1d(int layers = 4, int hidden = 16, int latent = 8) {
  ModelConfig c;
  c.layers = layers;
  c.hidden = hidden;
  c.latent_dim = latent;
  c.omega_first = 10.0;
  c.omega_last = 30.0;
  return c;
}

std::vector<ContextSet> contexts_1d(int n, int length, std::uint64_t seed) {
  std::vector<ContextSet> out;
  for (const auto& s : synth_1d(n, length, seed)) out.push_back(to_context(s));
  return out;
}

}  // namespace

TEST_CASE("fit_latent with zero rate stays at zero") {
  const auto p = init_shared(model_1d(), 1);
  const auto ctx = contexts_1d(1, 32, 1)[0];
  const auto fit = fit_latent(p, ctx, 5, 0.0);
  CHECK(fit.latent.phi.isZero(0.0));
  REQUIRE(fit.losses.size() == 6);
  for (double l : fit.losses) CHECK(l == fit.losses.front());
}

TEST_CASE("fit_latent steps and loss record") {
  const auto p = init_shared(model_1d(), 2);
  const auto ctx = contexts_1d(1, 32, 2)[0];
  const auto one = fit_latent(p, ctx, 1, 0.05);
  const VectorXd expect = -0.05 * grad_latent(p, Latent::zeros(8), ctx);
  CHECK((one.latent.phi - expect).cwiseAbs().maxCoeff() < 1e-15);

  const auto fit = fit_latent(p, ctx, 7, 0.05);
  CHECK(fit.losses.front() == doctest::Approx(mse_loss(p, Latent::zeros(8), ctx)).epsilon(1e-14));
  CHECK(fit.losses.back() == doctest::Approx(mse_loss(p, fit.latent, ctx)).epsilon(1e-14));
  const auto again = fit_latent(p, ctx, 7, 0.05);
  CHECK(bitwise_equal(fit.latent.phi, again.latent.phi));

  CHECK_THROWS_AS(fit_latent(p, ctx, 0, 0.05), ConfigError);
  CHECK_THROWS_AS(fit_latent(p, ctx, 3, -1.0), ConfigError);
  ContextSet wrong{MatrixXd::Zero(2, 4), MatrixXd::Zero(1, 4)};
  CHECK_THROWS_AS(fit_latent(p, wrong, 3, 0.05), UsageError);
}

TEST_CASE("fitting a meta-trained model improves held-out signals without touching it") {
  const auto data = contexts_1d(60, 32, 3);
  const std::vector<ContextSet> train_set(data.begin(), data.begin() + 40), held_out(data.begin() + 40, data.end());
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.total_iters = 200;
  cfg.inner_steps = 3;
  cfg.beta = 1e-3;
  const auto trained = train(train_set, model_1d(), cfg).checkpoint.shared;
  const auto id = checkpoint_id(trained);

  int improved = 0;
  for (const auto& c : held_out) {
    const auto fit = fit_latent(trained, c, 20, 1e-2);
    improved += fit.losses.back() <= fit.losses.front();
  }
  CHECK(improved >= static_cast<int>(0.95 * static_cast<double>(held_out.size())));
  CHECK(checkpoint_id(trained) == id);
}

TEST_CASE("encode_dataset preserves order and is deterministic") {
  const auto p = init_shared(model_1d(), 4);
  const auto data = contexts_1d(9, 32, 4);
  const auto single = encode_dataset(p, std::span(data).first(1), 6, 0.02);
  CHECK(single.size() == 1);
  CHECK(bitwise_equal(VectorXd(single.latents.row(0).transpose()), fit_latent(p, data[0], 6, 0.02).latent.phi));

  std::vector<int> labels(9);
  std::iota(labels.begin(), labels.end(), 0);
  const auto serial = encode_dataset(p, data, 6, 0.02, labels);
  const auto threaded = encode_dataset(p, data, 6, 0.02, labels, 4);
  CHECK(bitwise_equal(serial.latents, threaded.latents));
  CHECK(serial.labels == labels);
  CHECK(serial.checkpoint_id == checkpoint_id(p));
  CHECK(serial.steps == 6);
  CHECK(serial.alpha == 0.02);
  CHECK(serial.failed.empty());

  std::vector<ContextSet> reversed(data.rbegin(), data.rend());
  const auto rev = encode_dataset(p, reversed, 6, 0.02);
  for (Eigen::Index i = 0; i < 9; ++i) CHECK(bitwise_equal(MatrixXd(rev.latents.row(8 - i)), MatrixXd(serial.latents.row(i))));

  CHECK_THROWS_AS(encode_dataset(p, data, 6, 0.02, std::vector<int>{1, 2}), UsageError);
  CHECK_THROWS_AS(encode_dataset(p, std::span<const ContextSet>(), 6, 0.02), UsageError);
}

TEST_CASE("encode_dataset flags failed signals with NaN rows") {
  const auto p = init_shared(model_1d(), 5);
  auto data = contexts_1d(3, 16, 5);
  data[1] = ContextSet{MatrixXd::Zero(2, 16), MatrixXd::Zero(1, 16)};
  const auto d = encode_dataset(p, data, 3, 0.01);
  CHECK(d.failed == std::vector<std::size_t>{1});
  CHECK(d.latents.row(1).array().isNaN().all());
  CHECK(d.latents.row(0).allFinite());
  CHECK(d.latents.row(2).allFinite());
}

TEST_CASE("encoding 200 signals is fast") {
  const auto p = init_shared(model_1d(8, 64, 64), 6);
  const auto data = contexts_1d(200, 64, 6);
  const auto start = std::chrono::steady_clock::now();
  const auto d = encode_dataset(p, data, 20, 1e-2);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(d.size() == 200);
  CHECK(secs < 10.0);
}

TEST_CASE("reconstruct on the training lattice reproduces the fitting loss") {
  ModelConfig c = model_1d();
  c.in_dim = 2;
  const auto p = init_shared(c, 7);
  const auto grid = synth_2d(2, 16, 2, 7).signals[1];
  const auto ctx = to_context(grid);
  const auto fit = fit_latent(p, ctx, 4, 0.05);
  const auto rec = reconstruct(p, fit.latent, grid.shape);
  CHECK(rec.shape == grid.shape);
  CHECK(rec.values.size() == 256);
  const auto back = to_context(rec);
  CHECK((back.values - ctx.values).squaredNorm() / 256.0 == doctest::Approx(fit.losses.back()).epsilon(1e-12));

  CHECK(reconstruct(p, fit.latent, std::vector<int>{64, 64}).values.size() == 4096);
  const auto fine = reconstruct(p, fit.latent, std::vector<int>{128, 128});
  CHECK(std::all_of(fine.values.begin(), fine.values.end(), [](double v) { return std::isfinite(v); }));
  CHECK_THROWS_AS(reconstruct(p, fit.latent, std::vector<int>{16}), UsageError);
}
