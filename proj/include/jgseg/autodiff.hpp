// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode differentiation over dense tensors.
//
// Every op's backward is itself expressed through ops, so gradients can be
// differentiated again (needed by the R1 regularizer, which differentiates
// the squared norm of an input gradient with respect to network parameters).
// Graph recording is controlled by a thread-local mode: during an ordinary
// backward() pass the mode is off and backward closures evaluate to plain
// buffers; grad(..., create_graph=true) re-enables recording so the returned
// gradients carry their own graph.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "jgseg/errors.hpp"
#include "jgseg/tensor.hpp"

namespace jgseg::ad {

inline bool& grad_mode_ref() {
  thread_local bool mode = true;
  return mode;
}
inline bool grad_enabled() { return grad_mode_ref(); }

class GradMode {
 public:
  explicit GradMode(bool enable) : prev_(grad_mode_ref()) { grad_mode_ref() = enable; }
  ~GradMode() { grad_mode_ref() = prev_; }
  GradMode(const GradMode&) = delete;
  GradMode& operator=(const GradMode&) = delete;

 private:
  bool prev_;
};

struct NoGrad : GradMode {
  NoGrad() : GradMode(false) {}
};

template <typename T>
class Var;

template <typename T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
  std::vector<Var<T>> inputs;
  // Maps the output cotangent to one cotangent per input (undefined Var for
  // inputs that take no gradient). Null on leaves.
  std::function<std::vector<Var<T>>(const Var<T>&)> backward;
  // Leaf-only accumulator, detached from any graph.
  Tensor<T> grad;
  bool has_grad = false;
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : n_(std::make_shared<Node<T>>()) {
    n_->value = std::move(value);
    n_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor<T>& value() const { return n_->value; }
  // Var is a shared handle; value mutation through a copied handle is the
  // intended way optimizers update parameters.
  Tensor<T>& mutable_value() const { return n_->value; }
  const Shape& shape() const { return n_->value.shape(); }
  std::int64_t numel() const { return n_->value.numel(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  bool is_leaf() const { return !n_->backward; }

  // Leaf-only: toggling off freezes the parameter (ops treat it as constant).
  void set_requires_grad(bool b) const {
    if (!is_leaf()) throw ContractViolation("set_requires_grad on a non-leaf");
    n_->requires_grad = b;
  }

  bool has_grad() const { return n_ && n_->has_grad; }
  const Tensor<T>& grad() const {
    if (!has_grad()) throw ContractViolation("grad() on a node without accumulated gradient");
    return n_->grad;
  }
  Tensor<T>& mutable_grad() const {
    if (!has_grad()) throw ContractViolation("mutable_grad() without accumulated gradient");
    return n_->grad;
  }
  void zero_grad() const {
    if (!n_) return;
    n_->has_grad = false;
    n_->grad = Tensor<T>();
  }
  void accumulate_grad(const Tensor<T>& g) const {
    if (!n_->has_grad) {
      n_->grad = g;
      n_->has_grad = true;
    } else {
      if (!n_->grad.same_shape(g)) throw InvalidArgument("gradient shape mismatch in accumulate");
      T* a = n_->grad.data();
      const T* b = g.data();
      for (std::int64_t i = 0; i < g.numel(); ++i) a[i] += b[i];
    }
  }

  Node<T>* node() const { return n_.get(); }

  // Same value, no history: gradients do not propagate past this point.
  Var detached() const { return Var(n_->value, false); }

 private:
  template <typename U>
  friend Var<U> make_op(Tensor<U> value, std::vector<Var<U>> inputs,
                        std::function<std::vector<Var<U>>(const Var<U>&)> backward);

  std::shared_ptr<Node<T>> n_;
};

// Records an op node when grad mode is on and some input needs gradients;
// otherwise returns the bare result.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<std::vector<Var<T>>(const Var<T>&)> backward) {
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs)
      if (in.defined() && in.requires_grad()) {
        needs = true;
        break;
      }
  }
  if (!needs) return Var<T>(std::move(value), false);
  Var<T> out(std::move(value), true);
  out.n_->inputs = std::move(inputs);
  out.n_->backward = std::move(backward);
  return out;
}

// Forward pass returns the value unchanged; reverse pass propagates exactly
// zero through this point. Idempotent.
template <typename T>
Var<T> stop_gradient(const Var<T>& x) {
  return x.detached();
}

namespace detail {

template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> done;
  // Iterative post-order DFS over nodes that require grad.
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root, 0);
  std::unordered_set<Node<T>*> on_stack{root};
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node<T>* child = node->inputs[idx].defined() ? node->inputs[idx].node() : nullptr;
      ++idx;
      if (child && child->requires_grad && !done.count(child) && !on_stack.count(child)) {
        stack.emplace_back(child, 0);
        on_stack.insert(child);
      }
    } else {
      done.insert(node);
      on_stack.erase(node);
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // inputs before consumers
}

template <typename T>
std::unordered_map<Node<T>*, Var<T>> backprop(const Var<T>& root, bool create_graph) {
  if (!root.defined()) throw InvalidArgument("backward on undefined variable");
  if (root.numel() != 1) throw InvalidArgument("backward root must be scalar");
  if (!root.requires_grad())
    return {};  // nothing reachable

  auto order = topo_order<T>(root.node());
  std::unordered_map<Node<T>*, Var<T>> grads;
  grads[root.node()] = Var<T>(Tensor<T>::scalar(T(1)), false);

  GradMode mode(create_graph);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    auto gi = grads.find(n);
    if (gi == grads.end() || !n->backward) continue;
    std::vector<Var<T>> in_grads = n->backward(gi->second);
    if (in_grads.size() != n->inputs.size())
      throw ContractViolation("backward returned wrong number of gradients");
    for (size_t k = 0; k < n->inputs.size(); ++k) {
      const Var<T>& in = n->inputs[k];
      if (!in.defined() || !in.requires_grad() || !in_grads[k].defined()) continue;
      if (!(in_grads[k].shape() == in.shape()))
        throw ContractViolation("backward produced gradient of wrong shape");
      auto slot = grads.find(in.node());
      if (slot == grads.end()) {
        grads.emplace(in.node(), in_grads[k]);
      } else {
        // Accumulation is itself an op so create_graph composes.
        Tensor<T> sum = slot->second.value();
        const Tensor<T>& add = in_grads[k].value();
        for (std::int64_t i = 0; i < sum.numel(); ++i) sum[i] += add[i];
        Var<T> a = slot->second, b = in_grads[k];
        slot->second = make_op<T>(
            std::move(sum), {a, b}, [](const Var<T>& g) -> std::vector<Var<T>> {
              return {g, g};
            });
      }
    }
  }
  return grads;
}

}  // namespace detail

// Accumulates d(root)/d(leaf) into every reachable leaf's .grad buffer.
template <typename T>
void backward(const Var<T>& root) {
  auto grads = detail::backprop(root, /*create_graph=*/false);
  for (auto& [node, g] : grads) {
    if (node->backward) continue;  // only leaves accumulate
    if (!node->has_grad) {
      node->grad = g.value();
      node->has_grad = true;
    } else {
      T* a = node->grad.data();
      const T* b = g.value().data();
      for (std::int64_t i = 0; i < g.value().numel(); ++i) a[i] += b[i];
    }
  }
}

// Gradients of `root` with respect to `wrt`, without touching any .grad
// accumulator. With create_graph the results are differentiable again.
// Unreachable entries come back undefined.
template <typename T>
std::vector<Var<T>> grad(const Var<T>& root, const std::vector<Var<T>>& wrt,
                         bool create_graph = false) {
  auto grads = detail::backprop(root, create_graph);
  std::vector<Var<T>> out;
  out.reserve(wrt.size());
  for (const auto& v : wrt) {
    auto it = v.defined() ? grads.find(v.node()) : grads.end();
    out.push_back(it == grads.end() ? Var<T>() : it->second);
  }
  return out;
}

}  // namespace jgseg::ad
