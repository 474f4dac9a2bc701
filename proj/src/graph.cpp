#include "vct/graph.hpp"

#include <stdexcept>

namespace vct {

template <typename T>
Var Graph<T>::leaf(const Tensor<T>& value, Tensor<T>* sink) {
  Node n;
  n.value = value;
  n.sink = sink;
  n.requires_grad = grad_enabled_ && sink != nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::input(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::add_node(Tensor<T> value, const std::vector<Var>& parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (Var p : parents)
      if (nodes_[p.id].requires_grad) {
        n.requires_grad = true;
        break;
      }
  }
  if (n.requires_grad) {
    n.parents.reserve(parents.size());
    for (Var p : parents) n.parents.push_back(p.id);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Graph<T>::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.sink) return *n.sink;
  if (!n.grad_ready) {
    n.grad = Tensor<T>::zeros(n.value.shape);
    n.grad_ready = true;
  }
  return n.grad;
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.sink) return *n.sink;
  if (!n.grad_ready) throw std::logic_error("grad: no gradient accumulated for node");
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var loss, T seed) {
  const Node& ln = nodes_[loss.id];
  if (ln.value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!ln.requires_grad) return;

  mark_.assign(nodes_.size(), 0);
  std::vector<int32_t> stack{loss.id};
  mark_[loss.id] = 1;
  while (!stack.empty()) {
    int32_t id = stack.back();
    stack.pop_back();
    for (int32_t p : nodes_[id].parents)
      if (!mark_[p] && nodes_[p].requires_grad) {
        mark_[p] = 1;
        stack.push_back(p);
      }
  }

  grad_ref(loss)[0] += seed;
  for (int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!mark_[id] || !n.backward) continue;
    if (!n.grad_ready && !n.sink) continue;  // reachable but never received gradient
    n.backward(*this, id);
    // Intermediate gradients are dropped once consumed so that a second
    // backward() call on a different subgraph starts clean.
    if (!n.sink) {
      n.grad = Tensor<T>();
      n.grad_ready = false;
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace vct
