// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode autodiff. A Var is a handle to a graph node;
// ops build nodes that keep their inputs alive and know how to push the
// incoming gradient back. Graphs are rebuilt every step and freed when the
// root Var goes out of scope. Nodes whose inputs all have requires_grad ==
// false carry no backward closure, so inference builds no graph.
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "recolor/tensor.hpp"

namespace recolor {

template <typename T>
struct Node {
  Array<T> value;
  Array<T> grad;  // lazily allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Array<T>& ensure_grad() {
    if (!grad.defined()) grad = Array<T>::zeros(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Var leaf(Array<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Array<T>& value() const { return n_->value; }
  Array<T>& value() { return n_->value; }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  Array<T>& grad() { return n_->ensure_grad(); }
  bool has_grad() const { return n_ && n_->grad.defined(); }

  void zero_grad() {
    if (n_ && n_->grad.defined()) n_->grad.fill(T(0));
  }

  // New leaf sharing this node's value storage, detached from the graph.
  Var detach() const { return leaf(n_->value, false); }

  std::shared_ptr<Node<T>> node() const { return n_; }

  T item() const {
    check(n_->value.size() == 1, "item(): tensor is not a scalar");
    return n_->value[0];
  }

  // Reverse sweep from a scalar root. Reverse post-order DFS gives a
  // topological order, so every consumer runs before its producers.
  void backward() {
    check(defined() && n_->value.size() == 1, "backward(): root must be scalar");
    n_->ensure_grad().fill(T(1));
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->inputs.size()) {
        Node<T>* in = node->inputs[idx++].get();
        if (in->requires_grad && seen.insert(in).second)
          stack.emplace_back(in, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* node = *it;
      if (node->backward && node->grad.defined()) node->backward(*node);
    }
  }

 private:
  std::shared_ptr<Node<T>> n_;
};

// Builds an op node. The backward closure receives the node (whose grad is
// fully accumulated) and must add into inputs[i]->ensure_grad().
template <typename T>
Var<T> make_op(Array<T> value, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool req = false;
  for (const auto& v : inputs) req = req || v.requires_grad();
  n->requires_grad = req;
  if (req) {
    n->inputs.reserve(inputs.size());
    for (auto& v : inputs) n->inputs.push_back(v.node());
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

}  // namespace recolor
