// Minimal reverse-mode autodiff over Tensor<S>. A forward pass records a DAG of
// nodes; backward() walks it in reverse topological order. Graph construction is
// skipped entirely when grad mode is off or no input requires gradients, so
// evaluation rollouts cost no extra memory.
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "mspn/tensor.hpp"

namespace mspn {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;  // allocated lazily during backward
  bool requires_grad = false;
  bool is_param = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<S>>> parents;
  // Reads this->grad and accumulates into parents' grad.
  std::function<void(Node<S>&)> backward_op;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor<S>::zeros(value.n, value.c, value.h, value.w);
  }
};

template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<S> v, bool requires_grad = false) : node_(std::make_shared<Node<S>>()) {
    node_->value = std::move(v);
    node_->requires_grad = requires_grad && grad_mode();
  }

  static Var param(Tensor<S> v) {
    Var r(std::move(v), false);
    r.node_->requires_grad = true;  // params track gradients regardless of grad mode at creation
    r.node_->is_param = true;
    r.node_->op = "param";
    return r;
  }
  static Var constant(Tensor<S> v) { return Var(std::move(v), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<S>& value() const { return node_->value; }
  Tensor<S>& value() { return node_->value; }
  Tensor<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::shared_ptr<Node<S>> node() const { return node_; }

  int n() const { return node_->value.n; }
  int c() const { return node_->value.c; }
  int h() const { return node_->value.h; }
  int w() const { return node_->value.w; }

 private:
  std::shared_ptr<Node<S>> node_;
};

// Builds the result node for an op. When gradients are off (or no parent needs
// them) the result is a plain constant and `bwd` is dropped.
template <class S, class Bwd>
Var<S> make_op(const char* name, Tensor<S> out, std::vector<Var<S>> parents, Bwd&& bwd) {
  bool needs = false;
  if (grad_mode())
    for (const auto& p : parents)
      if (p.requires_grad()) {
        needs = true;
        break;
      }
  Var<S> r(std::move(out), false);
  if (needs) {
    auto node = r.node();
    node->requires_grad = true;
    node->op = name;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_op = std::forward<Bwd>(bwd);
  }
  return r;
}

// Reverse topological order via iterative post-order DFS along parent edges.
template <class S>
std::vector<Node<S>*> topo_order(Node<S>* root) {
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* parent = node->parents[idx++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.push_back({parent, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

// Backpropagates from a scalar root. Gradients accumulate into every node that
// requires them; interior activation grads are released as soon as consumed.
template <class S>
void backward(const Var<S>& root) {
  if (!root.defined() || !root.node()->requires_grad)
    throw ContractViolation("backward: root does not require gradients");
  if (root.value().size() != 1) throw ContractViolation("backward: root must be scalar");
  Node<S>* r = root.node().get();
  r->ensure_grad();
  r->grad.data.setConstant(S(1));
  for (Node<S>* node : topo_order(r)) {
    if (node->backward_op) {
      node->ensure_grad();
      node->backward_op(*node);
      if (!node->is_param && node != r) node->grad = Tensor<S>{};  // free interior grads
    }
  }
}

}  // namespace mspn
