#pragma once

#include <functional>
#include <vector>

#include "vct/tensor.hpp"

namespace vct {

// Handle to a node inside a Graph.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. One Graph is built per training step (or per forward
// evaluation); nodes are stored in creation order and backward runs in
// reverse creation order over the ancestors of the loss node. Deterministic:
// no threading, accumulation order fixed by construction order.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int32_t)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  // Parameter leaf. The value is copied; gradients accumulate directly into
  // *sink (the parameter's persistent grad buffer). Pass nullptr for a
  // non-trainable input that still wants a grad buffer of its own.
  Var leaf(const Tensor<T>& value, Tensor<T>* sink);
  // Input leaf that wants gradients collected on the node itself.
  Var input(Tensor<T> value);
  // Constant: no gradient flows.
  Var constant(Tensor<T> value);

  Var add_node(Tensor<T> value, const std::vector<Var>& parents, BackwardFn fn);

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // True if accumulating into v is useful (it is trainable or feeds something
  // trainable). Ops use this to skip dead gradient work.
  bool wants_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Lazily-zeroed gradient buffer for v. For parameter leaves this is the
  // external sink, which is NOT zeroed here (the optimizer owns that).
  Tensor<T>& grad_ref(Var v);
  // Gradient of v after backward(); throws if none was accumulated.
  const Tensor<T>& grad(Var v) const;

  // Seeds d(loss)/d(loss) = seed and propagates. May be called more than once
  // on disjoint subgraphs of the same tape (used for loss-scoped updates).
  void backward(Var loss, T seed = T(1));

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T>* sink = nullptr;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<int32_t> parents;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<uint8_t> mark_;  // scratch for reachability
  bool grad_enabled_;
};

// Temporarily disables recording on a graph: nodes created inside the scope
// are plain values that block gradient flow (used for the stop-gradient
// around decoded images in the disentangling loss).
template <typename T>
class NoGradScope {
 public:
  explicit NoGradScope(Graph<T>& g) : g_(g), saved_(g.grad_enabled()) {
    g_.set_grad_enabled(false);
  }
  ~NoGradScope() { g_.set_grad_enabled(saved_); }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Graph<T>& g_;
  bool saved_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace vct
