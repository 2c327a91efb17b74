#include "dualmotion/autograd.hpp"

#include <cstdint>
#include <cstring>
#include <unordered_set>

namespace dualmotion {

namespace {
thread_local bool g_grad_enabled = true;
}

namespace detail {

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  Scalar* dst = grad.data();
  const Scalar* src = g.data();
  for (std::size_t i = 0, n = grad.size(); i < n; ++i) dst[i] += src[i];
}

}  // namespace detail

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::value() const {
  if (!node_) throw std::logic_error("value() on undefined Var");
  return node_->value;
}

Tensor& Var::mutable_value() const {
  if (!node_) throw std::logic_error("mutable_value() on undefined Var");
  return node_->value;
}

const Tensor& Var::grad() const {
  if (!node_) throw std::logic_error("grad() on undefined Var");
  return node_->grad;
}

void Var::zero_grad() const {
  if (node_) node_->grad = Tensor();
}

Var Var::from_node(std::shared_ptr<detail::Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op_result(Tensor value, std::vector<Var> inputs, std::function<void(const Tensor&)> fn) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(fn);
  }
  return Var::from_node(std::move(node));
}

void backward(const Var& loss) {
  if (!loss.defined()) throw std::logic_error("backward() on undefined Var");
  if (loss.value().size() != 1) throw ShapeError("backward() needs a single-element loss, got " + to_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed post-order is a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Tensor(loss.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(node->grad);
      // Interior gradients are no longer needed once propagated.
      if (!node->parents.empty()) node->grad = Tensor();
    }
  }
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) p.var.zero_grad();
}

std::uint64_t checksum(const ParamList& params) {
  // FNV-1a over the raw bytes of every value.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params) {
    const Tensor& t = p.var.value();
    mix(p.name.data(), p.name.size());
    mix(t.data(), t.size() * sizeof(Scalar));
  }
  return h;
}

}  // namespace dualmotion
