#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "modsiren/errors.hpp"
#include "modsiren/field_model.hpp"
#include "modsiren/vector_math.hpp"

using namespace modsiren;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 4;
  c.hidden = 6;
  c.latent_dim = 3;
  c.in_dim = 2;
  c.out_dim = 2;
  c.omega_first = 5.0;
  c.omega_last = 15.0;
  return c;
}

// Same network with the modulation term left out entirely.
MatrixXd unmodulated_forward(const SharedParams& p, const MatrixXd& x) {
  MatrixXd pre = p.first.weight * x;
  pre.colwise() += p.first.bias;
  pre *= p.schedule[0];
  MatrixXd h = sin_of(pre);
  for (std::size_t i = 0; i < p.hidden.size(); ++i) {
    pre.noalias() = p.hidden[i].weight * h;
    pre.colwise() += p.hidden[i].bias;
    pre *= p.schedule[i + 1];
    h = sin_of(pre);
  }
  MatrixXd y = p.output.weight * h;
  y.colwise() += p.output.bias;
  return y;
}

MatrixXd random_coords(int dim, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixXd x(dim, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

}  // namespace

TEST_CASE("omega schedule endpoints and spacing") {
  const auto s = build_omega_schedule(20.0, 400.0, 15);
  REQUIRE(s.size() == 14);
  CHECK(s[0] == 20.0);
  CHECK(s[13] == 400.0);
  const double step = (400.0 - 20.0) / 13.0;
  const double ulp = std::nextafter(400.0, 1e9) - 400.0;
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(std::abs((s[i] - s[i - 1]) - step) <= ulp);
}

TEST_CASE("omega schedule constant and hand-spaced cases") {
  const auto flat = build_omega_schedule(30.0, 30.0, 5);
  CHECK(std::vector<double>(flat.values().begin(), flat.values().end()) ==
        std::vector<double>{30, 30, 30, 30});
  const auto s = build_omega_schedule(20.0, 200.0, 8);
  CHECK(std::vector<double>(s.values().begin(), s.values().end()) ==
        std::vector<double>{20, 50, 80, 110, 140, 170, 200});
}

TEST_CASE("omega schedule rejects bad input") {
  CHECK_THROWS_AS(build_omega_schedule(0.0, 10.0, 5), ConfigError);
  CHECK_THROWS_AS(build_omega_schedule(10.0, -1.0, 5), ConfigError);
  CHECK_THROWS_AS(build_omega_schedule(10.0, 20.0, 2), ConfigError);
}

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.layers = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.latent_dim = 0;
  CHECK_THROWS_AS(init_shared(c, 1), ConfigError);
}

TEST_CASE("initialization shapes and bounds") {
  ModelConfig c = tiny_config();
  const auto p = init_shared(c, 7);
  CHECK(p.hidden.size() == 2);
  CHECK(p.modulations.size() == 2);
  CHECK(p.first.weight.rows() == 6);
  CHECK(p.first.weight.cols() == 2);
  CHECK(p.output.weight.rows() == 2);
  CHECK(p.modulations[0].cols() == 3);
  CHECK(p.size() == 6 * 2 + 6 + 2 * (36 + 6) + 12 + 2 + 2 * 18);

  // C = 2 gives a first-layer bound of 1/2.
  CHECK(p.first.weight.cwiseAbs().maxCoeff() < 0.5);
  CHECK(p.first.bias.cwiseAbs().maxCoeff() < 0.5);
  CHECK(p.modulations[1].cwiseAbs().maxCoeff() < 1.0 / std::sqrt(3.0));
  const double out_bound = std::sqrt(6.0 / 6.0) / p.schedule[p.schedule.size() - 1];
  CHECK(p.output.weight.cwiseAbs().maxCoeff() < out_bound);
}

TEST_CASE("hidden-layer bound for n = 256, omega = 400") {
  ModelConfig c;
  c.layers = 3;
  c.hidden = 256;
  c.latent_dim = 4;
  c.in_dim = 2;
  c.out_dim = 1;
  c.omega_first = 20.0;
  c.omega_last = 400.0;
  const auto p = init_shared(c, 3);
  const double bound = std::sqrt(6.0 / 256.0) / 400.0;
  CHECK(bound == doctest::Approx(3.8273e-4).epsilon(1e-4));
  const auto& w = p.hidden[0].weight;
  CHECK(w.cwiseAbs().maxCoeff() < bound);
  CHECK(w.cwiseAbs().maxCoeff() > 0.99 * bound);
  // 65536 samples: mean within 3 standard errors of zero.
  const double sigma_mean = bound / std::sqrt(3.0) / std::sqrt(static_cast<double>(w.size()));
  CHECK(std::abs(w.mean()) < 3.0 * sigma_mean);
}

TEST_CASE("initialization is deterministic in the seed") {
  const auto a = init_shared(tiny_config(), 42);
  const auto b = init_shared(tiny_config(), 42);
  const auto c = init_shared(tiny_config(), 43);
  CHECK(bitwise_equal(a, b));
  CHECK_FALSE(bitwise_equal(a, c));
}

TEST_CASE("modulate is linear with no offset") {
  const auto p = init_shared(tiny_config(), 1);
  CHECK(modulate(p, Latent::zeros(3), 2).isZero(0.0));
  const Latent a{VectorXd::Random(3)}, b{VectorXd::Random(3)};
  const Latent combo{2.0 * a.phi - 0.5 * b.phi};
  const VectorXd expect = 2.0 * modulate(p, a, 3) - 0.5 * modulate(p, b, 3);
  CHECK((modulate(p, combo, 3) - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(modulate(p, a, 1), UsageError);
  CHECK_THROWS_AS(modulate(p, a, 4), UsageError);
}

TEST_CASE("modulate hand example") {
  ModelConfig c;
  c.layers = 3;
  c.hidden = 2;
  c.latent_dim = 1;
  c.in_dim = 1;
  c.out_dim = 1;
  auto p = init_shared(c, 0);
  p.modulations[0] << 0.5, -0.5;
  const VectorXd m = modulate(p, Latent{VectorXd::Constant(1, 2.0)}, 2);
  CHECK(m(0) == 1.0);
  CHECK(m(1) == -1.0);
}

TEST_CASE("forward matches a nested-sine hand computation") {
  ModelConfig c;
  c.layers = 3;
  c.hidden = c.latent_dim = c.in_dim = c.out_dim = 1;
  c.omega_first = 2.0;
  c.omega_last = 3.0;
  auto p = init_shared(c, 0);
  p.first.weight(0, 0) = 0.5;
  p.first.bias(0) = 0.1;
  p.hidden[0].weight(0, 0) = 0.3;
  p.hidden[0].bias(0) = -0.2;
  p.modulations[0](0, 0) = 0.7;
  p.output.weight(0, 0) = 1.5;
  p.output.bias(0) = 0.25;
  const double x = 0.6, phi = 0.4;
  const double h1 = std::sin(2.0 * (0.5 * x + 0.1));
  const double h2 = std::sin(3.0 * (0.3 * h1 - 0.2 + 0.7 * phi));
  const double expect = 1.5 * h2 + 0.25;
  const MatrixXd y = forward(p, Latent{VectorXd::Constant(1, phi)}, MatrixXd::Constant(1, 1, x));
  CHECK(y(0, 0) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("zero latent equals the unmodulated network exactly") {
  const auto p = init_shared(tiny_config(), 11);
  const MatrixXd x = random_coords(2, 1000, 5);
  const MatrixXd a = forward(p, Latent::zeros(3), x);
  const MatrixXd b = unmodulated_forward(p, x);
  CHECK(bitwise_equal(a, b));
}

TEST_CASE("forward is pointwise and pure") {
  const auto p = init_shared(tiny_config(), 2);
  const Latent z{VectorXd::Random(3)};
  const MatrixXd x = random_coords(2, 50, 9);
  const MatrixXd y = forward(p, z, x);
  CHECK(bitwise_equal(y, forward(p, z, x)));

  std::vector<Eigen::Index> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(4));
  const MatrixXd xp = x(Eigen::all, perm);
  const MatrixXd yp = forward(p, z, xp);
  const MatrixXd expect = y(Eigen::all, perm);
  CHECK((yp - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("forward rejects mismatched shapes") {
  const auto p = init_shared(tiny_config(), 2);
  CHECK_THROWS_AS(forward(p, Latent::zeros(3), MatrixXd::Zero(3, 4)), UsageError);
  CHECK_THROWS_AS(forward(p, Latent::zeros(2), MatrixXd::Zero(2, 4)), UsageError);
}
