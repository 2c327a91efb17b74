#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dualmotion/tensor.hpp"

namespace dualmotion {

class Var;

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives d(loss)/d(value) and accumulates into the parents.
  std::function<void(const Tensor&)> backward;

  void accumulate(const Tensor& g);
};

}  // namespace detail

/// Handle to a value in the reverse-mode autodiff graph.
///
/// Leaves created with `requires_grad = true` are trainable parameters.
/// Results of operations keep their inputs alive until the handle is dropped,
/// so a forward pass can be differentiated with `backward()` at any point.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const;
  // Handle semantics: mutation goes through to the shared node.
  Tensor& mutable_value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

  /// Accumulated gradient; an empty tensor when nothing reached this node.
  const Tensor& grad() const;
  void zero_grad() const;

  /// Same value, cut from the graph.
  Var detached() const { return Var(value(), false); }

  detail::Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

  static Var from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Runs reverse-mode accumulation from a single-element `loss`.
void backward(const Var& loss);

/// Builds an operation result. When gradients are disabled or no input needs
/// them, the result is a constant leaf and `fn` is discarded.
Var make_op_result(Tensor value, std::vector<Var> inputs, std::function<void(const Tensor&)> fn);

bool grad_enabled() noexcept;

/// Disables graph construction for the lifetime of the guard (thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// A named trainable tensor.
struct NamedParam {
  std::string name;
  Var var;
};

using ParamList = std::vector<NamedParam>;

void zero_grads(const ParamList& params);

/// Order-sensitive digest of all parameter values (bit-level).
std::uint64_t checksum(const ParamList& params);

}  // namespace dualmotion
