#include "robustft/autodiff.hpp"

#include <algorithm>
#include <unordered_set>

#include "robustft/errors.hpp"

namespace robustft {

namespace {
thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->value.shape() != b->value.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_to_string(a->value.shape()) + " vs " +
                         shape_to_string(b->value.shape()));
  }
}
}  // namespace

Tensor& Node::grad() {
  if (grad_.empty()) grad_ = Tensor::zeros(value.shape());
  return grad_;
}

const Tensor& Node::grad() const {
  if (grad_.empty()) throw ContractError("gradient requested before it was materialized");
  return grad_;
}

void Node::zero_grad() {
  if (!grad_.empty()) grad_.fill(0.0);
}

Var parameter(Tensor value) { return std::make_shared<Node>(std::move(value), true); }
Var constant(Tensor value) { return std::make_shared<Node>(std::move(value), false); }

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_node(Tensor value, std::vector<Var> parents, Node::BackwardFn fn) {
  const bool needs = g_grad_enabled &&
                     std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p->requires_grad; });
  auto node = std::make_shared<Node>(std::move(value), needs);
  if (needs) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return node;
}

std::size_t BackwardTrace::total() const {
  std::size_t n = 0;
  for (const auto& [node, count] : visits) n += count;
  return n;
}

void backward(const Var& root, BackwardTrace* trace) {
  if (!root) throw ContractError("backward: null root");
  if (root->value.numel() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + shape_to_string(root->value.shape()));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS yields a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (!node->is_leaf()) node->zero_grad();
  }
  root->grad()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (trace) ++trace->visits[node];
    if (node->backward_fn) node->backward_fn(*node);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      Tensor& g = p->grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad()[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const Tensor& up = self.grad();
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= up[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const Tensor& up = self.grad();
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) {
      Tensor& g = pa->grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor& g = pb->grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a->value;
  for (double& v : out.data()) v *= factor;
  require_finite(out, "scale");
  return make_node(std::move(out), {a}, [factor](Node& self) {
    Tensor& g = self.parents[0]->grad();
    const Tensor& up = self.grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * up[i];
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a->value.data()) total += v;
  return make_node(Tensor::scalar(total), {a}, [](Node& self) {
    Tensor& g = self.parents[0]->grad();
    const double up = self.grad()[0];
    for (double& v : g.data()) v += up;
  });
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {x}, [](Node& self) {
    const Tensor& in = self.parents[0]->value;
    Tensor& g = self.parents[0]->grad();
    const Tensor& up = self.grad();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (in[i] > 0.0) g[i] += up[i];
    }
  });
}

Var flatten(const Var& x) {
  if (x->value.rank() < 2) throw DimensionError("flatten: need rank >= 2, got " + shape_to_string(x->value.shape()));
  const std::size_t n = x->value.dim(0);
  Tensor out = x->value.reshaped({n, x->value.numel() / n});
  return make_node(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad();
    const Tensor& up = self.grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up[i];
  });
}

}  // namespace robustft
