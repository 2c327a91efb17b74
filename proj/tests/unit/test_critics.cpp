#include <doctest.h>

#include <cmath>

#include "dualmotion/critics.hpp"
#include "gradcheck.hpp"

using namespace dualmotion;
using dualmotion::testing::check_gradient;
using dualmotion::testing::describe;
using dualmotion::testing::kNetworkFloor;
using dualmotion::testing::kNetworkStep;
using dualmotion::testing::random_tensor;

namespace {

ModelConfig config() {
  ModelConfig c;
  c.height = 32;
  c.width = 32;
  c.latent_channels = 8;
  c.critic_channels = 4;
  return c;
}

ParamList params_of(const Critic& c) {
  ParamList out;
  c.collect(out, "critic");
  return out;
}

}  // namespace

TEST_CASE("critic scores have one unbounded value per sample") {
  Rng rng(1);
  const Critic frame = make_frame_critic(config(), rng);
  const Critic flow = make_flow_critic(config(), rng);
  CHECK(frame.in_channels() == 3);
  CHECK(flow.in_channels() == 2);
  CHECK(frame.score(Var(random_tensor({2, 3, 32, 32}, 2))).shape() == Shape{2, 1});
  CHECK(flow.score(Var(random_tensor({1, 2, 32, 32}, 3, -5, 5))).shape() == Shape{1, 1});
  CHECK_THROWS_AS(frame.score(Var(Tensor::zeros({1, 2, 32, 32}))), ShapeError);

  // No squashing at the end: scaling the head scales the score without bound.
  ParamList ps = params_of(frame);
  const Var x(random_tensor({1, 3, 32, 32}, 4));
  const double base = frame.score(x).value()[0];
  for (auto& p : ps)
    if (p.name.find("head") != std::string::npos)
      for (auto& v : p.var.mutable_value().values()) v *= 1000.0;
  const double scaled = frame.score(x).value()[0];
  CHECK(scaled == doctest::Approx(1000.0 * base).epsilon(1e-9));
}

TEST_CASE("zero-weight critics score zero") {
  Rng rng(5);
  const Critic c = make_frame_critic(config(), rng);
  for (const auto& p : params_of(c)) p.var.mutable_value().fill(0.0);
  for (std::uint64_t s = 0; s < 3; ++s) CHECK(c.score(Var(random_tensor({1, 3, 32, 32}, 6 + s))).value()[0] == 0.0);
}

TEST_CASE("scores are finite for bounded inputs with clipped weights") {
  Rng rng(10);
  const Critic frame = make_frame_critic(config(), rng);
  const Critic flow = make_flow_critic(config(), rng);
  clip_weights(params_of(frame), 0.01);
  clip_weights(params_of(flow), 0.01);
  for (std::uint64_t s = 0; s < 20; ++s) {
    CHECK(std::isfinite(frame.score(Var(random_tensor({1, 3, 32, 32}, 11 + s))).value()[0]));
    CHECK(std::isfinite(flow.score(Var(random_tensor({1, 2, 32, 32}, 40 + s, -10, 10))).value()[0]));
  }
}

TEST_CASE("batch scoring equals per-sample scoring") {
  Rng rng(12);
  const Critic c = make_frame_critic(config(), rng);
  const Tensor a = random_tensor({1, 3, 32, 32}, 13), b = random_tensor({1, 3, 32, 32}, 14);
  const Tensor items[] = {a, b};
  const Tensor both = c.score(Var(stack_batch(items))).value();
  const Tensor ba_items[] = {b, a};
  const Tensor swapped = c.score(Var(stack_batch(ba_items))).value();
  CHECK(both[0] == doctest::Approx(c.score(Var(a)).value()[0]).epsilon(1e-12));
  CHECK(both[1] == doctest::Approx(c.score(Var(b)).value()[0]).epsilon(1e-12));
  CHECK(swapped[0] == doctest::Approx(both[1]).epsilon(1e-12));
}

TEST_CASE("critic gradients match finite differences") {
  Rng rng(15);
  const Critic frame = make_frame_critic(config(), rng);
  const Critic flow = make_flow_critic(config(), rng);
  Var x(random_tensor({1, 3, 32, 32}, 16), true);
  Var f(random_tensor({1, 2, 32, 32}, 17, -3, 3), true);
  auto frame_loss = [&] { return ops::sum(frame.score(x)); };
  auto flow_loss = [&] { return ops::sum(flow.score(f)); };
  auto r = check_gradient(frame_loss, x, 12, 18, kNetworkStep, kNetworkFloor);
  INFO(describe(r));
  CHECK(r.max_rel_error < 1e-3);
  r = check_gradient(flow_loss, f, 12, 19, kNetworkStep, kNetworkFloor);
  CHECK(r.max_rel_error < 1e-3);
  for (const auto& p : params_of(frame)) {
    const auto rp = check_gradient(frame_loss, p.var, 4, 20, kNetworkStep, kNetworkFloor);
    INFO(p.name << ": " << describe(rp));
    CHECK(rp.max_rel_error < 1e-3);
  }
  for (const auto& p : params_of(flow)) {
    const auto rp = check_gradient(flow_loss, p.var, 4, 21, kNetworkStep, kNetworkFloor);
    INFO(p.name << ": " << describe(rp));
    CHECK(rp.max_rel_error < 1e-3);
  }
}

TEST_CASE("weight clipping") {
  Var w(Tensor({4}, {0.5, -0.003, -0.7, 0.01}), true);
  const ParamList ps{{"w", w}};
  clip_weights(ps, 0.01);
  CHECK(w.value()[0] == 0.01);
  CHECK(w.value()[1] == -0.003);
  CHECK(w.value()[2] == -0.01);
  CHECK(w.value()[3] == 0.01);
  CHECK(max_abs_weight(ps) == 0.01);

  Rng rng(22);
  const Critic c = make_frame_critic(config(), rng);
  const ParamList cp = params_of(c);
  for (auto& p : cp)
    for (auto& v : p.var.mutable_value().values()) v *= 50.0;
  clip_weights(cp, 0.01);
  const std::uint64_t once = checksum(cp);
  clip_weights(cp, 0.01);
  CHECK(checksum(cp) == once);
  CHECK(max_abs_weight(cp) <= 0.01);
}
