#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dualmotion/motion_encoder.hpp"
#include "gradcheck.hpp"

using namespace dualmotion;
using dualmotion::testing::check_gradient;
using dualmotion::testing::kNetworkFloor;
using dualmotion::testing::kNetworkStep;
using dualmotion::testing::describe;
using dualmotion::testing::random_tensor;
using dualmotion::testing::random_weights;

namespace {

ModelConfig small_config(int size = 16, int width = 8) {
  ModelConfig c;
  c.height = size;
  c.width = size;
  c.latent_channels = width;
  c.critic_channels = 8;
  return c;
}

std::vector<Var> random_frames(int t, int size, std::uint64_t seed, bool grad = false) {
  std::vector<Var> out;
  for (int i = 0; i < t; ++i) out.emplace_back(random_tensor({1, 3, size, size}, seed + i), grad);
  return out;
}

LatentDistribution make_dist(const Tensor& mean, const Tensor& lv, bool grad = false) {
  return {Var(mean, grad), Var(lv, grad)};
}

// log N(z; m, e^lv) summed over elements.
double log_normal(const Tensor& z, const Tensor& m, const Tensor& lv) {
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double var = std::exp(lv[i]);
    s += -0.5 * (std::log(2 * std::numbers::pi) + lv[i] + (z[i] - m[i]) * (z[i] - m[i]) / var);
  }
  return s;
}

}  // namespace

TEST_CASE("ConvLSTM with zero parameters stays at the zero fixed point") {
  Rng rng(1);
  ConvLSTMCell cell = ConvLSTMCell::create(3, 4, 4, rng);
  cell.gates().weight.mutable_value().fill(0.0);
  cell.gates().bias.mutable_value().fill(0.0);
  const auto [out, state] = cell.step(Var(Tensor::zeros({1, 3, 5, 5})), cell.zero_state(1, 5, 5));
  CHECK(out.shape() == Shape{1, 4, 5, 5});
  for (Scalar v : out.value().values()) CHECK(v == 0.0);
  for (Scalar v : state.cell.value().values()) CHECK(v == 0.0);
}

TEST_CASE("ConvLSTM forget bias starts at one") {
  Rng rng(2);
  const ConvLSTMCell cell = ConvLSTMCell::create(3, 4, 4, rng);
  const Tensor& b = cell.gates().bias.value();
  REQUIRE(b.size() == 16);
  for (int i = 0; i < 16; ++i) CHECK(b[i] == (i >= 4 && i < 8 ? 1.0 : 0.0));
}

TEST_CASE("ConvLSTM carries the cell through an open forget gate") {
  Rng rng(3);
  const ConvLSTMCell cell = ConvLSTMCell::create(2, 3, 4, rng);
  const Var x(random_tensor({1, 2, 6, 6}, 4));
  ConvLSTMState a = cell.zero_state(1, 6, 6);
  ConvLSTMState b = a;
  b.cell = Var(random_tensor({1, 3, 6, 6}, 5));
  const Var ha = cell.step(x, a).first, hb = cell.step(x, b).first;
  CHECK_FALSE(ha.value() == hb.value());
}

TEST_CASE("ConvLSTM gradients match finite differences") {
  Rng rng(6);
  ConvLSTMCell cell = ConvLSTMCell::create(2, 3, 4, rng);
  Var x(random_tensor({1, 2, 5, 5}, 7), true);
  Var h(random_tensor({1, 3, 5, 5}, 8), true);
  Var c(random_tensor({1, 3, 5, 5}, 9), true);
  const Tensor w = random_weights({1, 3, 5, 5}, 10);
  auto loss = [&] {
    const auto [out, st] = cell.step(x, {h, c});
    return ops::add(ops::weighted_sum(out, w), ops::weighted_sum(st.cell, w));
  };
  for (const Var* v : std::initializer_list<const Var*>{&x, &h, &c, &cell.gates().weight}) {
    const auto r = check_gradient(loss, *v, 12, 11);
    INFO(describe(r));
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("ConvLSTM rejects mismatched shapes") {
  Rng rng(12);
  const ConvLSTMCell cell = ConvLSTMCell::create(2, 3, 4, rng);
  CHECK_THROWS_AS(cell.step(Var(Tensor::zeros({1, 2, 5, 5})), cell.zero_state(1, 4, 4)), ShapeError);
  CHECK_THROWS_AS(cell.step(Var(Tensor::zeros({1, 3, 5, 5})), cell.zero_state(1, 5, 5)), ShapeError);
}

TEST_CASE("encoder maps are D x H/8 x W/8") {
  Rng rng(13);
  ModelConfig cfg = small_config(64, 64);
  const MotionEncoder enc(cfg, rng);
  const auto frames = random_frames(3, 64, 14);
  const LatentDistribution d = enc.encode(frames);
  CHECK(d.mean.shape() == Shape{1, 64, 8, 8});
  CHECK(d.log_variance.shape() == Shape{1, 64, 8, 8});
  for (Scalar v : d.log_variance.value().values()) CHECK(std::isfinite(v));

  const MotionEncoder small(small_config(32, 8), rng);
  CHECK(small.encode(random_frames(2, 32, 15)).mean.shape() == Shape{1, 8, 4, 4});
  CHECK_THROWS_AS(small.encode(random_frames(2, 20, 16)), ShapeError);
}

TEST_CASE("encoder is deterministic and sensitive to the last frame") {
  Rng rng(17);
  const MotionEncoder enc(small_config(), rng);
  auto frames = random_frames(3, 16, 18);
  const LatentDistribution a = enc.encode(frames), b = enc.encode(frames);
  CHECK(a.mean.value() == b.mean.value());
  CHECK(a.log_variance.value() == b.log_variance.value());
  frames.back() = Var(random_tensor({1, 3, 16, 16}, 99));
  CHECK_FALSE(enc.encode(frames).mean.value() == a.mean.value());
}

TEST_CASE("encoder gradients match finite differences") {
  Rng rng(19);
  const MotionEncoder enc(small_config(), rng);
  auto frames = random_frames(2, 16, 20, true);
  const Tensor wm = random_weights({1, 8, 2, 2}, 21), wl = random_weights({1, 8, 2, 2}, 22);
  auto loss = [&] {
    const LatentDistribution d = enc.encode(frames);
    return ops::add(ops::weighted_sum(d.mean, wm), ops::weighted_sum(d.log_variance, wl));
  };
  for (const Var& f : frames) {
    const auto r = check_gradient(loss, f, 12, 23, kNetworkStep, kNetworkFloor);
    INFO(describe(r));
    CHECK(r.max_rel_error < 1e-3);
  }
  for (const auto& [name, p] : enc.parameters()) {
    const auto r = check_gradient(loss, p, 3, 24, kNetworkStep, kNetworkFloor);
    INFO(name << ": " << describe(r));
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("sampling identities") {
  const Tensor m = random_tensor({1, 2, 2, 2}, 30), lv = random_tensor({1, 2, 2, 2}, 31);
  const LatentDistribution d = make_dist(m, lv);
  CHECK(sample(d, Tensor::zeros(m.shape())).z.value() == m);

  const LatentDistribution narrow = make_dist(m, Tensor::filled(m.shape(), -40.0));
  const Tensor z = sample(narrow, random_tensor(m.shape(), 32, -3, 3)).z.value();
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(z[i] - m[i]) < 1e-8);

  // Affine in the noise.
  const Tensor e1 = random_tensor(m.shape(), 33), e2 = random_tensor(m.shape(), 34);
  const double a = 0.7, b = -1.3;
  Tensor mix(m.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * e1[i] + b * e2[i];
  const Tensor lhs = sample(d, mix).z.value();
  const Tensor z1 = sample(d, e1).z.value(), z2 = sample(d, e2).z.value();
  for (std::size_t i = 0; i < lhs.size(); ++i)
    CHECK(lhs[i] == doctest::Approx(a * z1[i] + b * z2[i] - (a + b - 1) * m[i]).epsilon(1e-12));

  const LatentCode code = sample(d, e1);
  CHECK(code.noise == e1);
  CHECK_THROWS_AS(sample(d, Tensor::zeros({1, 2, 2, 3})), ShapeError);
}

TEST_CASE("sample mean converges to the distribution mean") {
  const Tensor m = random_tensor({1, 2, 2, 2}, 40), lv = random_tensor({1, 2, 2, 2}, 41);
  const LatentDistribution d = make_dist(m, lv);
  Rng rng(42);
  constexpr int n = 100000;
  Tensor acc = Tensor::zeros(m.shape());
  for (int i = 0; i < n; ++i) {
    const Tensor z = sample(d, draw_noise(m.shape(), rng)).z.value();
    for (std::size_t k = 0; k < z.size(); ++k) acc[k] += z[k];
  }
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double se = std::exp(0.5 * lv[k]) / std::sqrt(double(n));
    CHECK(std::abs(acc[k] / n - m[k]) < 3 * se);
  }
}

TEST_CASE("sample gradients flow to mean and log-variance") {
  Var m(random_tensor({1, 2, 3, 3}, 50), true), lv(random_tensor({1, 2, 3, 3}, 51), true);
  const Tensor eps = random_tensor({1, 2, 3, 3}, 52), w = random_weights({1, 2, 3, 3}, 53);
  auto loss = [&] { return ops::weighted_sum(sample({m, lv}, eps).z, w); };
  CHECK(check_gradient(loss, m, 10, 54).max_rel_error < 1e-3);
  CHECK(check_gradient(loss, lv, 10, 55).max_rel_error < 1e-3);
}

TEST_CASE("KL closed form anchors") {
  CHECK(kl_divergence(make_dist(Tensor::zeros({1, 3, 2, 2}), Tensor::zeros({1, 3, 2, 2}))).value().item() == 0.0);
  CHECK(kl_divergence(make_dist(Tensor({1}, {1.0}), Tensor({1}, {0.0}))).value().item() == 0.5);
  // Nonnegative, and zero only at the prior.
  for (std::uint64_t s = 0; s < 20; ++s) {
    const double kl = kl_divergence(make_dist(random_tensor({4}, 60 + s), random_tensor({4}, 80 + s))).value().item();
    CHECK(kl > 0.0);
  }
}

TEST_CASE("KL matches a Monte Carlo estimate") {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Tensor m = random_tensor({1, 2, 2, 2}, 100 + s), lv = random_tensor({1, 2, 2, 2}, 110 + s);
    const LatentDistribution d = make_dist(m, lv);
    const double closed = kl_divergence(d).value().item();
    Rng rng(120 + s);
    const Tensor zero = Tensor::zeros(m.shape());
    constexpr int n = 100000;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      const Tensor z = sample(d, draw_noise(m.shape(), rng)).z.value();
      acc += log_normal(z, m, lv) - log_normal(z, zero, zero);
    }
    CHECK(std::abs(acc / n - closed) < 0.02 * closed);
  }
}

TEST_CASE("KL gradients match finite differences") {
  Var m(random_tensor({1, 2, 3, 3}, 130), true), lv(random_tensor({1, 2, 3, 3}, 131), true);
  auto loss = [&] { return kl_divergence({m, lv}); };
  CHECK(check_gradient(loss, m, 10, 132).max_rel_error < 1e-3);
  CHECK(check_gradient(loss, lv, 10, 133).max_rel_error < 1e-3);
}
