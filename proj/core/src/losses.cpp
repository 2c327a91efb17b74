#include "dualmotion/losses.hpp"

#include <cmath>

namespace dualmotion {

Var zero_scalar() { return Var(Tensor::scalar(0.0)); }

Var l1_distance(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "l1_distance");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t n = x.size();
  Scalar s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(x[i] - y[i]);
  const Scalar inv = 1.0 / static_cast<Scalar>(n);
  return make_op_result(Tensor::scalar(s * inv), {a, b}, [a, b, inv](const Tensor& g) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    const Scalar go = g[0] * inv;
    Tensor ga(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Scalar d = x[i] - y[i];
      ga[i] = d > 0 ? go : (d < 0 ? -go : 0.0);
    }
    if (a.requires_grad()) a.node()->accumulate(ga);
    if (b.requires_grad()) {
      for (auto& v : ga.values()) v = -v;
      b.node()->accumulate(ga);
    }
  });
}

Var epe(const Var& f, const Var& g) {
  require_same_shape(f.value(), g.value(), "epe");
  const Shape& s = f.shape();
  if (s.size() != 4 || s[1] != 2) throw ShapeError("epe: expected [N, 2, H, W], got " + to_string(s));
  const int n = s[0];
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  const Tensor& a = f.value();
  const Tensor& b = g.value();
  Tensor norms({n, 1, s[2], s[3]});
  Scalar total = 0;
  for (int k = 0; k < n; ++k) {
    const std::size_t base = static_cast<std::size_t>(k) * 2 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const Scalar du = a[base + i] - b[base + i];
      const Scalar dv = a[base + plane + i] - b[base + plane + i];
      const Scalar r = std::sqrt(du * du + dv * dv);
      norms[k * plane + i] = r;
      total += r;
    }
  }
  const Scalar inv = 1.0 / static_cast<Scalar>(n * plane);
  return make_op_result(Tensor::scalar(total * inv), {f, g}, [f, g, norms, inv, n, plane](const Tensor& grad) {
    const Tensor& a = f.value();
    const Tensor& b = g.value();
    const Scalar go = grad[0] * inv;
    Tensor gf(a.shape());
    for (int k = 0; k < n; ++k) {
      const std::size_t base = static_cast<std::size_t>(k) * 2 * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const Scalar r = norms[k * plane + i];
        if (r == 0) continue;  // subgradient 0 at coincident vectors
        gf[base + i] = go * (a[base + i] - b[base + i]) / r;
        gf[base + plane + i] = go * (a[base + plane + i] - b[base + plane + i]) / r;
      }
    }
    if (f.requires_grad()) f.node()->accumulate(gf);
    if (g.requires_grad()) {
      for (auto& v : gf.values()) v = -v;
      g.node()->accumulate(gf);
    }
  });
}

Var LossBreakdown::vae() const {
  return ops::add(ops::add(ops::add(l1_frame, l1_warp), ops::add(l1_fused, epe_flow_pred)),
                  ops::add(epe_flow_est, kl));
}

LossBreakdown vae_loss(const PredictionBundle& bundle, const Var& true_frame, const Var& true_flow,
                       const LatentDistribution& dist, const VaeOptions& options) {
  LossBreakdown out;
  out.l1_frame = bundle.frame_pred.defined() ? l1_distance(true_frame, bundle.frame_pred) : zero_scalar();
  out.l1_warp = bundle.warped_frame.defined() ? l1_distance(true_frame, bundle.warped_frame) : zero_scalar();
  // With a single branch the fused frame is that branch's output, already counted.
  const bool fused_distinct = bundle.frame_pred.defined() && bundle.warped_frame.defined();
  out.l1_fused = fused_distinct ? l1_distance(true_frame, bundle.fused_frame) : zero_scalar();
  out.epe_flow_pred = bundle.flow_pred.defined() ? epe(true_flow, bundle.flow_pred) : zero_scalar();
  out.epe_flow_est = bundle.estimated_flow.defined() ? epe(true_flow, bundle.estimated_flow) : zero_scalar();
  if (options.kl_weight == 0) {
    out.kl = zero_scalar();
  } else {
    Var kl = kl_divergence(dist);
    Scalar w = options.kl_weight;
    if (options.kl_mean) w /= static_cast<Scalar>(dist.mean.value().size());
    out.kl = ops::scale(kl, w);
  }
  out.gan_frame = zero_scalar();
  out.gan_flow = zero_scalar();
  out.total = out.vae();
  return out;
}

Var gan_objective(const Critic& critic, const Var& real, const Var& fake_a, const Var& fake_b) {
  if (!fake_a.defined() && !fake_b.defined()) return zero_scalar();
  Var obj = ops::mean(critic.score(real));
  if (fake_a.defined() && fake_b.defined()) {
    obj = ops::sub(obj, ops::scale(ops::mean(critic.score(fake_a)), 0.5));
    obj = ops::sub(obj, ops::scale(ops::mean(critic.score(fake_b)), 0.5));
  } else {
    obj = ops::sub(obj, ops::mean(critic.score(fake_a.defined() ? fake_a : fake_b)));
  }
  return obj;
}

Var gan_frame_objective(const Var& real_frame, const Var& frame_pred, const Var& warped_frame,
                        const Critic& frame_critic) {
  return gan_objective(frame_critic, real_frame, frame_pred, warped_frame);
}

Var gan_flow_objective(const Var& real_flow, const Var& flow_pred, const Var& estimated_flow,
                       const Critic& flow_critic) {
  return gan_objective(flow_critic, real_flow, flow_pred, estimated_flow);
}

Objectives total_objective(LossBreakdown& breakdown, const Var& gan_frame, const Var& gan_flow, Scalar lambda) {
  breakdown.gan_frame = gan_frame;
  breakdown.gan_flow = gan_flow;
  breakdown.lambda = lambda;
  Objectives out;
  if (lambda == 0) {
    out.generator_loss = breakdown.vae();
  } else {
    out.generator_loss = ops::add(breakdown.vae(), ops::scale(ops::add(gan_frame, gan_flow), lambda));
  }
  breakdown.total = out.generator_loss;
  out.critic_loss_frame = ops::scale(gan_frame, -1.0);
  out.critic_loss_flow = ops::scale(gan_flow, -1.0);
  return out;
}

}  // namespace dualmotion
