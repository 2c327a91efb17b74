#include <doctest.h>

#include <cmath>

#include "dualmotion/model.hpp"
#include "gradcheck.hpp"

using namespace dualmotion;
using dualmotion::testing::check_gradient;
using dualmotion::testing::kNetworkFloor;
using dualmotion::testing::kNetworkStep;
using dualmotion::testing::describe;
using dualmotion::testing::random_tensor;
using dualmotion::testing::random_weights;

namespace {

ModelConfig config(int size, int width) {
  ModelConfig c;
  c.height = size;
  c.width = size;
  c.latent_channels = width;
  c.critic_channels = 8;
  return c;
}

void zero_all(const ParamList& params) {
  for (const auto& p : params) p.var.mutable_value().fill(0.0);
}

template <class Module>
ParamList params_of(const Module& m) {
  ParamList out;
  m.collect(out, "m");
  return out;
}

void expect_grad(const std::function<Var()>& f, const Var& x, std::uint64_t seed, int probes = 10) {
  auto w = std::make_shared<Tensor>();
  auto loss = [&f, w, seed] {
    Var out = f();
    if (w->empty()) *w = random_weights(out.shape(), seed);
    return ops::weighted_sum(out, *w);
  };
  const auto r = check_gradient(loss, x, probes, seed + 1, kNetworkStep, kNetworkFloor);
  INFO(describe(r));
  CHECK(r.max_rel_error < 1e-3);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("generator output shapes and ranges") {
  Rng rng(1);
  const ModelConfig cfg = config(64, 64);
  const FrameGenerator fg(cfg, rng);
  const FlowGenerator fl(cfg, rng);
  const Var z(random_tensor({1, 64, 8, 8}, 2, -3, 3));
  const Var frame = fg(z), flow = fl(z);
  CHECK(frame.shape() == Shape{1, 3, 64, 64});
  CHECK(flow.shape() == Shape{1, 2, 64, 64});
  for (Scalar v : frame.value().values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(fg(Var(Tensor::zeros({1, 32, 8, 8}))), ShapeError);
}

TEST_CASE("zero parameters give mid-gray frames and zero flow") {
  Rng rng(3);
  const ModelConfig cfg = config(16, 8);
  const FrameGenerator fg(cfg, rng);
  const FlowGenerator fl(cfg, rng);
  const FlowEstimator est(cfg, rng);
  zero_all(params_of(fg));
  zero_all(params_of(fl));
  zero_all(params_of(est));
  const Var z(random_tensor({1, 8, 2, 2}, 4));
  for (Scalar v : fg(z).value().values()) CHECK(v == 0.0);
  for (Scalar v : fl(z).value().values()) CHECK(v == 0.0);
  const Var a(random_tensor({1, 3, 16, 16}, 5)), b(random_tensor({1, 3, 16, 16}, 6));
  const Var f = est(a, b);
  CHECK(f.shape() == Shape{1, 2, 16, 16});
  for (Scalar v : f.value().values()) CHECK(v == 0.0);
}

TEST_CASE("generator and estimator gradients match finite differences") {
  Rng rng(7);
  const ModelConfig cfg = config(16, 8);
  const FrameGenerator fg(cfg, rng);
  const FlowGenerator fl(cfg, rng);
  const FlowEstimator est(cfg, rng);
  Var z(random_tensor({1, 8, 2, 2}, 8), true);
  expect_grad([&] { return fg(z); }, z, 9);
  expect_grad([&] { return fl(z); }, z, 10);
  for (const auto& p : params_of(fg)) expect_grad([&] { return fg(z); }, p.var, 11, 3);
  for (const auto& p : params_of(fl)) expect_grad([&] { return fl(z); }, p.var, 12, 3);

  Var prev(random_tensor({1, 3, 16, 16}, 13), true), cand(random_tensor({1, 3, 16, 16}, 14), true);
  expect_grad([&] { return est(prev, cand); }, cand, 15);
  expect_grad([&] { return est(prev, cand); }, prev, 16);
  for (const auto& p : params_of(est)) expect_grad([&] { return est(prev, cand); }, p.var, 17, 3);
  CHECK_THROWS_AS(est(prev, Var(Tensor::zeros({1, 3, 8, 8}))), ShapeError);
}

TEST_CASE("warp identities") {
  const Tensor src = random_tensor({1, 3, 9, 11}, 20);
  SUBCASE("zero flow is the identity") {
    const Tensor out = warp(Var(src), Var(Tensor::zeros({1, 2, 9, 11}))).value();
    CHECK(max_abs_diff(out, src) <= 1e-6);
  }
  SUBCASE("unit horizontal flow shifts by one column") {
    Tensor flow = Tensor::zeros({1, 2, 9, 11});
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 11; ++x) flow.at(0, 0, y, x) = 1.0;
    const Tensor out = warp(Var(src), Var(flow)).value();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 9; ++y) {
        for (int x = 0; x + 1 < 11; ++x) CHECK(out.at(0, c, y, x) == src.at(0, c, y, x + 1));
        CHECK(out.at(0, c, y, 10) == src.at(0, c, y, 10));
      }
  }
  SUBCASE("linear in the source at fixed flow") {
    const Tensor other = random_tensor({1, 3, 9, 11}, 21);
    const Var flow(random_tensor({1, 2, 9, 11}, 22, -3, 3));
    const double a = 0.3, b = -1.7;
    Tensor mix(src.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * src[i] + b * other[i];
    const Tensor lhs = warp(Var(mix), flow).value();
    const Tensor w1 = warp(Var(src), flow).value(), w2 = warp(Var(other), flow).value();
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(lhs[i] == doctest::Approx(a * w1[i] + b * w2[i]).epsilon(1e-12));
  }
  SUBCASE("samples outside the image replicate the border") {
    const Tensor out = warp(Var(src), Var(Tensor::filled({1, 2, 9, 11}, -50.0))).value();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 11; ++x) CHECK(out.at(0, c, y, x) == src.at(0, c, 0, 0));
  }
}

TEST_CASE("fusion selector and averaging weights") {
  const ModelConfig cfg = config(16, 8);
  Fusion fusion(cfg);
  const Var a(random_tensor({1, 3, 4, 4}, 30, -1.2, 1.2)), b(random_tensor({1, 3, 4, 4}, 31));
  SUBCASE("initial weights average two identical inputs") {
    const Tensor out = fusion(a, a).value();
    const Tensor ref = ops::soft_clip(a, cfg.output_knee).value();
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  SUBCASE("selector on the first input") {
    Tensor& w = fusion.conv().weight.mutable_value();
    w.fill(0.0);
    for (int c = 0; c < 3; ++c) w[c * 6 + c] = 1.0;
    const Tensor out = fusion(a, b).value();
    const Tensor ref = ops::soft_clip(a, cfg.output_knee).value();
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  SUBCASE("gradients") {
    Var x(a.value(), true), y(b.value(), true);
    expect_grad([&] { return fusion(x, y); }, x, 32);
    expect_grad([&] { return fusion(x, y); }, y, 33);
    expect_grad([&] { return fusion(x, y); }, fusion.conv().weight, 34);
    expect_grad([&] { return fusion(x, y); }, fusion.conv().bias, 35);
  }
  CHECK_THROWS_AS(fusion(a, Var(Tensor::zeros({1, 3, 4, 5}))), ShapeError);
}

TEST_CASE("forward bundle with zero parameters") {
  Rng rng(40);
  const ModelConfig cfg = config(16, 8);
  const DualMotionModel model(cfg, rng);
  zero_all(model.generator_parameters());
  std::vector<Var> frames;
  for (int t = 0; t < 3; ++t) frames.emplace_back(random_tensor({1, 3, 16, 16}, 41 + t));
  const PredictionBundle b = forward_bundle(model, frames, std::nullopt, {}).bundle;
  for (Scalar v : b.frame_pred.value().values()) CHECK(v == 0.0);
  for (Scalar v : b.flow_pred.value().values()) CHECK(v == 0.0);
  for (Scalar v : b.estimated_flow.value().values()) CHECK(v == 0.0);
  CHECK(max_abs_diff(b.warped_frame.value(), frames.back().value()) <= 1e-12);
}

TEST_CASE("forward bundle shapes, determinism and branch switches") {
  Rng rng(50);
  const ModelConfig cfg = config(32, 8);
  const DualMotionModel model(cfg, rng);
  std::vector<Var> frames;
  for (int t = 0; t < 4; ++t) frames.emplace_back(random_tensor({1, 3, 32, 32}, 51 + t));
  Rng noise_rng(52);
  const Tensor noise = draw_noise(cfg.latent_shape(), noise_rng);
  const ForwardPass a = forward_bundle(model, frames, noise, {});
  const ForwardPass b = forward_bundle(model, frames, noise, {});
  const PredictionBundle& p = a.bundle;
  CHECK(p.frame_pred.shape() == Shape{1, 3, 32, 32});
  CHECK(p.flow_pred.shape() == Shape{1, 2, 32, 32});
  CHECK(p.warped_frame.shape() == Shape{1, 3, 32, 32});
  CHECK(p.estimated_flow.shape() == Shape{1, 2, 32, 32});
  CHECK(p.fused_frame.shape() == Shape{1, 3, 32, 32});
  CHECK(p.fused_frame.value() == b.bundle.fused_frame.value());
  CHECK(p.estimated_flow.value() == b.bundle.estimated_flow.value());
  CHECK(a.code.noise == noise);

  // Without noise the code is the posterior mean.
  const ForwardPass m = forward_bundle(model, frames, std::nullopt, {});
  CHECK(m.code.z.value() == m.dist.mean.value());

  BranchFlags frame_only{true, false, true};
  const PredictionBundle fo = forward_bundle(model, frames, noise, frame_only).bundle;
  CHECK_FALSE(fo.flow_pred.defined());
  CHECK_FALSE(fo.estimated_flow.defined());
  CHECK(fo.fused_frame.value() == fo.frame_pred.value());

  BranchFlags flow_only{false, true, true};
  const PredictionBundle wo = forward_bundle(model, frames, noise, flow_only).bundle;
  CHECK_FALSE(wo.frame_pred.defined());
  CHECK(wo.fused_frame.value() == wo.warped_frame.value());
}

TEST_CASE("generator parameter groups are disjoint from the critics") {
  Rng rng(60);
  const DualMotionModel model(config(16, 8), rng);
  const ParamList g = model.generator_parameters(), c = model.critic_parameters();
  CHECK(g.size() + c.size() == model.all_parameters().size());
  for (const auto& a : g)
    for (const auto& b : c) CHECK(a.var.node() != b.var.node());
  for (const std::string prefix : {"encoder.", "frame_generator.", "flow_generator.", "estimator.", "fusion."}) {
    bool found = false;
    for (const auto& p : g) found = found || p.name.rfind(prefix, 0) == 0;
    CHECK_MESSAGE(found, prefix);
  }
}
