#include "dualmotion/optim.hpp"

#include <cmath>

namespace dualmotion {

RMSprop::RMSprop(ParamList params, RMSpropOptions options) : params_(std::move(params)), options_(options) {
  mean_square_.reserve(params_.size());
  for (const auto& p : params_) mean_square_.push_back(Tensor::zeros(p.var.shape()));
}

void RMSprop::step() {
  const Scalar lr = options_.learning_rate, rho = options_.decay, eps = options_.eps;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Tensor& g = params_[k].var.grad();
    Tensor& w = params_[k].var.mutable_value();
    Tensor& ms = mean_square_[k];
    const bool has_grad = !g.empty();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Scalar gi = has_grad ? g[i] : 0.0;
      ms[i] = rho * ms[i] + (1 - rho) * gi * gi;
      w[i] -= lr * gi / (std::sqrt(ms[i]) + eps);
    }
  }
  ++steps_;
}

}  // namespace dualmotion
