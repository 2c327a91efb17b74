#pragma once

#include <vector>

#include "dualmotion/autograd.hpp"

namespace dualmotion {

struct RMSpropOptions {
  Scalar learning_rate = 1e-4;
  Scalar decay = 0.99;
  Scalar eps = 1e-8;
};

/// ms <- decay * ms + (1 - decay) * g^2;  w <- w - lr * g / (sqrt(ms) + eps)
class RMSprop {
 public:
  RMSprop() = default;
  RMSprop(ParamList params, RMSpropOptions options);

  /// Applies one update from the accumulated gradients. Parameters without
  /// a gradient are treated as having a zero gradient.
  void step();
  void zero_grad() const { zero_grads(params_); }

  const ParamList& params() const { return params_; }
  const RMSpropOptions& options() const { return options_; }
  std::vector<Tensor>& state() { return mean_square_; }
  const std::vector<Tensor>& state() const { return mean_square_; }
  long long steps_taken() const { return steps_; }
  void set_steps_taken(long long n) { steps_ = n; }

 private:
  ParamList params_;
  RMSpropOptions options_;
  std::vector<Tensor> mean_square_;
  long long steps_ = 0;
};

}  // namespace dualmotion
