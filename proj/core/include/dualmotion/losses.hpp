#pragma once

#include "dualmotion/model.hpp"

namespace dualmotion {

/// Mean absolute difference over all elements.
Var l1_distance(const Var& a, const Var& b);

/// Mean end-point error over pixels between two [N, 2, H, W] flows.
Var epe(const Var& f, const Var& g);

/// Per-term objective values. Terms of a disabled branch are zero scalars.
struct LossBreakdown {
  Var l1_frame;       // L1(true frame, generated frame)
  Var l1_warp;        // L1(true frame, warped frame)
  Var l1_fused;       // L1(true frame, fused frame); trains the fusion layer
  Var epe_flow_pred;  // EPE(true flow, generated flow)
  Var epe_flow_est;   // EPE(true flow, estimated flow)
  Var kl;             // KL(q(z | frames) || N(0, I)), scaled by the KL weight
  Var gan_frame;      // frame critic objective
  Var gan_flow;       // flow critic objective
  Scalar lambda = 0;
  Var total;

  /// Sum of the reconstruction and KL terms.
  Var vae() const;
};

struct VaeOptions {
  Scalar kl_weight = 1.0;
  /// KL is averaged over latent elements instead of summed, matching the
  /// mean reduction of the distance terms.
  bool kl_mean = true;
};

/// Fills the reconstruction and KL terms; GAN terms are left zero.
LossBreakdown vae_loss(const PredictionBundle& bundle, const Var& true_frame, const Var& true_flow,
                       const LatentDistribution& dist, const VaeOptions& options = {});

/// D(real) - 1/2 D(fake_a) - 1/2 D(fake_b), batch-averaged. With one fake
/// undefined, the other carries the full weight; with both undefined the
/// objective is zero.
Var gan_objective(const Critic& critic, const Var& real, const Var& fake_a, const Var& fake_b);

/// Frame-critic objective over the generated frame and the warped frame.
Var gan_frame_objective(const Var& real_frame, const Var& frame_pred, const Var& warped_frame,
                        const Critic& frame_critic);

/// Flow-critic objective over the generated flow and the estimated flow.
Var gan_flow_objective(const Var& real_flow, const Var& flow_pred, const Var& estimated_flow,
                       const Critic& flow_critic);

struct Objectives {
  Var generator_loss;
  Var critic_loss_frame;  // -gan_frame
  Var critic_loss_flow;   // -gan_flow
};

/// Sets breakdown.lambda/gan terms/total and returns the three losses:
/// generator = VAE + lambda * (gan_frame + gan_flow); critics minimize the
/// negated objectives.
Objectives total_objective(LossBreakdown& breakdown, const Var& gan_frame, const Var& gan_flow, Scalar lambda);

Var zero_scalar();

}  // namespace dualmotion
