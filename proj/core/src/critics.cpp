#include "dualmotion/critics.hpp"

#include <algorithm>

namespace dualmotion {

namespace {

constexpr Scalar kLeak = 0.2;

}  // namespace

Critic::Critic(int in_channels, int base_channels, Rng& rng) : in_(in_channels) {
  const ops::ConvGeometry down{4, 2, 1, 1, 0};
  int c = in_channels;
  for (int k = 0; k < 4; ++k) {
    const int out = base_channels << k;
    convs_[k] = Conv2d::create(c, out, down, rng);
    if (k == 1 || k == 2) norms_[k - 1] = InstanceNorm::create(out, false);
    c = out;
  }
  head_ = Linear::create(c, 1, rng);
}

Var Critic::score(const Var& x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != in_) {
    throw ShapeError("critic: expected [N, " + std::to_string(in_) + ", H, W], got " + to_string(s));
  }
  Var h = ops::leaky_relu(convs_[0](x), kLeak);
  for (int k = 1; k < 3; ++k) h = ops::leaky_relu(norms_[k - 1](convs_[k](h)), kLeak);
  h = ops::leaky_relu(convs_[3](h), kLeak);
  return head_(ops::global_avg_pool(h));
}

void Critic::collect(ParamList& out, const std::string& prefix) const {
  for (int k = 0; k < 4; ++k) convs_[k].collect(out, prefix + ".conv" + std::to_string(k));
  head_.collect(out, prefix + ".head");
}

void clip_weights(const ParamList& params, Scalar bound) {
  for (const auto& p : params) {
    for (auto& v : p.var.mutable_value().values()) v = std::clamp(v, -bound, bound);
  }
}

Scalar max_abs_weight(const ParamList& params) {
  Scalar m = 0;
  for (const auto& p : params) m = std::max(m, p.var.value().max_abs());
  return m;
}

}  // namespace dualmotion
