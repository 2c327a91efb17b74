#include <doctest.h>

#include <cmath>

#include "dualmotion/losses.hpp"
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
  c.height = 16;
  c.width = 16;
  c.latent_channels = 8;
  c.critic_channels = 4;
  return c;
}

double l1_oracle(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double epe_oracle(const Tensor& f, const Tensor& g) {
  const int n = f.dim(0), h = f.dim(2), w = f.dim(3);
  double s = 0;
  for (int k = 0; k < n; ++k)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        s += std::hypot(f.at(k, 0, y, x) - g.at(k, 0, y, x), f.at(k, 1, y, x) - g.at(k, 1, y, x));
  return s / (static_cast<double>(n) * h * w);
}

Tensor constant_flow(int h, int w, double u, double v) {
  Tensor t({1, 2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      t.at(0, 0, y, x) = u;
      t.at(0, 1, y, x) = v;
    }
  return t;
}

double value(const Var& v) { return v.value().item(); }

struct RandomBundle {
  PredictionBundle bundle;
  Var frame;
  Var flow;
  LatentDistribution dist;
};

RandomBundle random_bundle(std::uint64_t seed) {
  RandomBundle r;
  r.bundle.frame_pred = Var(random_tensor({1, 3, 16, 16}, seed), true);
  r.bundle.warped_frame = Var(random_tensor({1, 3, 16, 16}, seed + 1), true);
  r.bundle.fused_frame = Var(random_tensor({1, 3, 16, 16}, seed + 2), true);
  r.bundle.flow_pred = Var(random_tensor({1, 2, 16, 16}, seed + 3, -3, 3), true);
  r.bundle.estimated_flow = Var(random_tensor({1, 2, 16, 16}, seed + 4, -3, 3), true);
  r.frame = Var(random_tensor({1, 3, 16, 16}, seed + 5));
  r.flow = Var(random_tensor({1, 2, 16, 16}, seed + 6, -3, 3));
  r.dist = {Var(random_tensor({1, 8, 2, 2}, seed + 7), true), Var(random_tensor({1, 8, 2, 2}, seed + 8), true)};
  return r;
}

}  // namespace

TEST_CASE("l1 distance") {
  const Tensor a = Tensor::zeros({1, 3, 4, 4});
  CHECK(value(l1_distance(Var(a), Var(a))) == 0.0);
  CHECK(value(l1_distance(Var(a), Var(Tensor::filled(a.shape(), 0.1)))) == doctest::Approx(0.1).epsilon(1e-15));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor x = random_tensor({2, 3, 5, 4}, s), y = random_tensor({2, 3, 5, 4}, s + 100);
    CHECK(value(l1_distance(Var(x), Var(y))) == doctest::Approx(l1_oracle(x, y)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(l1_distance(Var(a), Var(Tensor::zeros({1, 3, 4, 5}))), ShapeError);
}

TEST_CASE("end-point error") {
  const Tensor zero = Tensor::zeros({1, 2, 3, 3});
  CHECK(value(epe(Var(zero), Var(zero))) == 0.0);
  CHECK(value(epe(Var(constant_flow(3, 3, 3, 4)), Var(zero))) == 5.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor f = random_tensor({2, 2, 4, 5}, s, -4, 4), g = random_tensor({2, 2, 4, 5}, s + 50, -4, 4);
    CHECK(value(epe(Var(f), Var(g))) == doctest::Approx(epe_oracle(f, g)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(epe(Var(Tensor::zeros({1, 3, 3, 3})), Var(Tensor::zeros({1, 3, 3, 3}))), ShapeError);
}

TEST_CASE("distances are symmetric and satisfy the triangle inequality") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Tensor a = random_tensor({1, 2, 4, 4}, 3 * s), b = random_tensor({1, 2, 4, 4}, 3 * s + 1),
                 c = random_tensor({1, 2, 4, 4}, 3 * s + 2);
    for (auto d : {&l1_distance, &epe}) {
      const double ab = value(d(Var(a), Var(b))), ba = value(d(Var(b), Var(a)));
      const double bc = value(d(Var(b), Var(c))), ac = value(d(Var(a), Var(c)));
      CHECK(ab == ba);
      CHECK(ab >= 0.0);
      CHECK(ac <= ab + bc + 1e-12);
    }
  }
}

TEST_CASE("distance gradients match finite differences") {
  // Away from coincident points, where both distances have kinks.
  Var a(random_tensor({1, 2, 4, 4}, 7), true);
  Tensor shift = random_tensor({1, 2, 4, 4}, 8, 0.2, 1.0);
  Var b(Tensor(a.value()), true);
  for (std::size_t i = 0; i < shift.size(); ++i) b.mutable_value()[i] += shift[i];
  for (auto d : {&l1_distance, &epe}) {
    auto loss = [&] { return d(a, b); };
    for (const Var* v : {&a, &b}) {
      const auto r = check_gradient(loss, *v, 10, 9);
      INFO(describe(r));
      CHECK(r.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("VAE loss on perfect predictions at the prior is zero") {
  PredictionBundle b;
  const Tensor frame = random_tensor({1, 3, 16, 16}, 10), flow = random_tensor({1, 2, 16, 16}, 11);
  b.frame_pred = b.warped_frame = b.fused_frame = Var(frame);
  b.flow_pred = b.estimated_flow = Var(flow);
  const LatentDistribution prior{Var(Tensor::zeros({1, 8, 2, 2})), Var(Tensor::zeros({1, 8, 2, 2}))};
  const LossBreakdown l = vae_loss(b, Var(frame), Var(flow), prior);
  for (const Var* t : {&l.l1_frame, &l.l1_warp, &l.l1_fused, &l.epe_flow_pred, &l.epe_flow_est, &l.kl, &l.total})
    CHECK(value(*t) == 0.0);

  // Flows off by (3, 4): only the two flow terms move, each by 5.
  Tensor off = flow;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      off.at(0, 0, y, x) += 3;
      off.at(0, 1, y, x) += 4;
    }
  b.flow_pred = b.estimated_flow = Var(off);
  const LossBreakdown m = vae_loss(b, Var(frame), Var(flow), prior);
  CHECK(value(m.epe_flow_pred) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(value(m.epe_flow_est) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(value(m.l1_frame) == 0.0);
  CHECK(value(m.kl) == 0.0);
  CHECK(value(m.total) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("VAE loss terms decompose into their primitives") {
  const RandomBundle r = random_bundle(20);
  const VaeOptions opts{0.25, true};
  const LossBreakdown l = vae_loss(r.bundle, r.frame, r.flow, r.dist, opts);
  CHECK(value(l.l1_frame) == l1_oracle(r.frame.value(), r.bundle.frame_pred.value()));
  CHECK(value(l.l1_warp) == doctest::Approx(l1_oracle(r.frame.value(), r.bundle.warped_frame.value())).epsilon(1e-13));
  CHECK(value(l.l1_fused) == doctest::Approx(l1_oracle(r.frame.value(), r.bundle.fused_frame.value())).epsilon(1e-13));
  CHECK(value(l.epe_flow_pred) == doctest::Approx(epe_oracle(r.flow.value(), r.bundle.flow_pred.value())).epsilon(1e-13));
  CHECK(value(l.epe_flow_est) ==
        doctest::Approx(epe_oracle(r.flow.value(), r.bundle.estimated_flow.value())).epsilon(1e-13));
  const double kl = value(kl_divergence(r.dist));
  CHECK(value(l.kl) == doctest::Approx(0.25 * kl / 32.0).epsilon(1e-13));
  CHECK(value(vae_loss(r.bundle, r.frame, r.flow, r.dist, {1.0, false}).kl) == doctest::Approx(kl).epsilon(1e-13));
  const double sum = value(l.l1_frame) + value(l.l1_warp) + value(l.l1_fused) + value(l.epe_flow_pred) +
                     value(l.epe_flow_est) + value(l.kl);
  CHECK(value(l.total) == doctest::Approx(sum).epsilon(1e-13));
  for (const Var* t : {&l.l1_frame, &l.l1_warp, &l.epe_flow_pred, &l.epe_flow_est, &l.kl}) CHECK(value(*t) >= 0.0);
}

TEST_CASE("disabled branches contribute zero terms") {
  RandomBundle r = random_bundle(30);
  r.bundle.flow_pred = Var();
  r.bundle.estimated_flow = Var();
  r.bundle.warped_frame = Var();
  r.bundle.fused_frame = r.bundle.frame_pred;
  const LossBreakdown l = vae_loss(r.bundle, r.frame, r.flow, r.dist);
  CHECK(value(l.l1_warp) == 0.0);
  CHECK(value(l.l1_fused) == 0.0);
  CHECK(value(l.epe_flow_pred) == 0.0);
  CHECK(value(l.epe_flow_est) == 0.0);
  CHECK(value(l.l1_frame) > 0.0);
}

TEST_CASE("VAE loss gradients match finite differences") {
  const RandomBundle r = random_bundle(40);
  auto loss = [&] { return vae_loss(r.bundle, r.frame, r.flow, r.dist).total; };
  for (const Var* v : {&r.bundle.frame_pred, &r.bundle.warped_frame, &r.bundle.fused_frame, &r.bundle.flow_pred,
                       &r.bundle.estimated_flow, &r.dist.mean, &r.dist.log_variance}) {
    const auto g = check_gradient(loss, *v, 10, 41);
    INFO(describe(g));
    CHECK(g.max_rel_error < 1e-3);
  }
}

TEST_CASE("GAN objectives") {
  Rng rng(50);
  const Critic frame_critic = make_frame_critic(config(), rng);
  const Critic flow_critic = make_flow_critic(config(), rng);
  const Var real(random_tensor({1, 3, 16, 16}, 51)), a(random_tensor({1, 3, 16, 16}, 52)),
      b(random_tensor({1, 3, 16, 16}, 53));
  const Var rf(random_tensor({1, 2, 16, 16}, 54, -2, 2)), fa(random_tensor({1, 2, 16, 16}, 55, -2, 2)),
      fb(random_tensor({1, 2, 16, 16}, 56, -2, 2));

  SUBCASE("decomposition into three critic calls") {
    auto s = [](const Critic& c, const Var& x) { return c.score(x).value()[0]; };
    CHECK(value(gan_frame_objective(real, a, b, frame_critic)) ==
          doctest::Approx(s(frame_critic, real) - 0.5 * s(frame_critic, a) - 0.5 * s(frame_critic, b)).epsilon(1e-13));
    CHECK(value(gan_flow_objective(rf, fa, fb, flow_critic)) ==
          doctest::Approx(s(flow_critic, rf) - 0.5 * s(flow_critic, fa) - 0.5 * s(flow_critic, fb)).epsilon(1e-13));
    CHECK(value(gan_frame_objective(real, a, Var(), frame_critic)) ==
          doctest::Approx(s(frame_critic, real) - s(frame_critic, a)).epsilon(1e-13));
    CHECK(value(gan_frame_objective(real, Var(), Var(), frame_critic)) == 0.0);
  }
  SUBCASE("fakes equal to the real sample cancel") {
    CHECK(value(gan_frame_objective(real, real, real, frame_critic)) == 0.0);
    CHECK(value(gan_flow_objective(rf, rf, rf, flow_critic)) == 0.0);
  }
  SUBCASE("zero-weight critics give zero") {
    ParamList ps;
    frame_critic.collect(ps, "f");
    flow_critic.collect(ps, "g");
    for (const auto& p : ps) p.var.mutable_value().fill(0.0);
    CHECK(value(gan_frame_objective(real, a, b, frame_critic)) == 0.0);
    CHECK(value(gan_flow_objective(rf, fa, fb, flow_critic)) == 0.0);
  }
  SUBCASE("gradients w.r.t. the fakes") {
    Var ga(a.value(), true), gb(b.value(), true);
    auto loss = [&] { return gan_frame_objective(real, ga, gb, frame_critic); };
    for (const Var* v : {&ga, &gb}) {
      const auto r = check_gradient(loss, *v, 10, 57, kNetworkStep, kNetworkFloor);
      INFO(describe(r));
      CHECK(r.max_rel_error < 1e-3);
    }
    Var gfa(fa.value(), true);
    auto floss = [&] { return gan_flow_objective(rf, gfa, fb, flow_critic); };
    const auto r = check_gradient(floss, gfa, 10, 58, kNetworkStep, kNetworkFloor);
    INFO(describe(r));
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("total objective wiring") {
  Rng rng(60);
  const Critic frame_critic = make_frame_critic(config(), rng);
  const Critic flow_critic = make_flow_critic(config(), rng);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const RandomBundle r = random_bundle(70 + 10 * s);
    LossBreakdown l = vae_loss(r.bundle, r.frame, r.flow, r.dist);
    const Var gf = gan_frame_objective(r.frame, r.bundle.frame_pred, r.bundle.warped_frame, frame_critic);
    const Var gw = gan_flow_objective(r.flow, r.bundle.flow_pred, r.bundle.estimated_flow, flow_critic);
    const double lambda = 0.001 * (1 + s);
    const Objectives o = total_objective(l, gf, gw, lambda);
    CHECK(std::abs(value(o.generator_loss) - value(l.vae()) - lambda * (value(gf) + value(gw))) < 1e-6);
    CHECK(value(o.critic_loss_frame) + value(gf) == 0.0);
    CHECK(value(o.critic_loss_flow) + value(gw) == 0.0);
    CHECK(l.lambda == lambda);
    CHECK(value(l.total) == value(o.generator_loss));

    LossBreakdown l0 = vae_loss(r.bundle, r.frame, r.flow, r.dist);
    CHECK(value(total_objective(l0, gf, gw, 0.0).generator_loss) == value(l0.vae()));
  }
}
