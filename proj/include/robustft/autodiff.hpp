#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "robustft/tensor.hpp"

namespace robustft {

class Node;
using Var = std::shared_ptr<Node>;

/// A value in the computation graph. Leaves are parameters or constants;
/// interior nodes carry a rule that pushes their gradient into their parents.
class Node {
 public:
  using BackwardFn = std::function<void(Node& self)>;

  Node(Tensor value, bool requires_grad) : value(std::move(value)), requires_grad(requires_grad) {}

  Tensor value;
  bool requires_grad;
  std::vector<Var> parents;
  BackwardFn backward_fn;

  bool is_leaf() const noexcept { return parents.empty(); }
  bool has_grad() const noexcept { return !grad_.empty(); }

  /// Gradient buffer, zero-filled on first access.
  Tensor& grad();
  const Tensor& grad() const;
  void zero_grad();
  void release_grad() { grad_ = Tensor(); }

 private:
  Tensor grad_;
};

/// Trainable leaf.
Var parameter(Tensor value);
/// Leaf that never receives a gradient.
Var constant(Tensor value);

/// Builds an interior node. When no parent requires a gradient (or recording
/// is disabled by NoGradGuard) the parents and rule are dropped.
Var make_node(Tensor value, std::vector<Var> parents, Node::BackwardFn fn);

bool grad_enabled() noexcept;

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Instrumentation hook for backward(): counts how often each node's rule ran.
struct BackwardTrace {
  std::unordered_map<const Node*, std::size_t> visits;
  std::size_t total() const;
};

/// Reverse-mode pass from a scalar root. Leaf gradients accumulate across
/// calls; interior gradients are reset at the start of each call.
void backward(const Var& root, BackwardTrace* trace = nullptr);

// Elementwise and reduction ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);
Var relu(const Var& x);
Var flatten(const Var& x);

// Layers.
Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride, std::size_t padding);
Var maxpool2(const Var& x);
Var dense(const Var& x, const Var& weight, const Var& bias);
Var log_softmax(const Var& logits);

}  // namespace robustft
