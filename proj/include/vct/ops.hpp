#pragma once

#include <memory>
#include <vector>

#include "vct/graph.hpp"

namespace vct::ops {

// ---- elementwise & shape ----
template <typename T> Var add(Graph<T>& g, Var a, Var b);
template <typename T> Var sub(Graph<T>& g, Var a, Var b);
template <typename T> Var scale(Graph<T>& g, Var a, T c);
template <typename T> Var add_bias(Graph<T>& g, Var x, Var bias);  // {R,C} + {1,C}
template <typename T> Var gelu(Graph<T>& g, Var x);
template <typename T> Var reshape(Graph<T>& g, Var x, std::vector<int64_t> shape);
template <typename T> Var concat_rows(Graph<T>& g, Var a, Var b);
template <typename T> Var slice_rows(Graph<T>& g, Var x, int64_t row0, int64_t nrows);
template <typename T> Var detach(Graph<T>& g, Var x);

// out[i] = idx[i] >= 0 ? flat(x)[idx[i]] : 0. Index map shared so the same
// precomputed layout (patchify, im2col, ...) can be reused across steps.
template <typename T>
Var gather_flat(Graph<T>& g, Var x, std::shared_ptr<const std::vector<int64_t>> idx,
                std::vector<int64_t> out_shape);

// ---- linear algebra ----
template <typename T>
Var matmul(Graph<T>& g, Var a, Var b, bool trans_a = false, bool trans_b = false);
template <typename T> Var linear(Graph<T>& g, Var x, Var w, Var bias);

// Per-batch-element product with a shared left matrix: x is {B*S, C}, a is
// {R, S}; output row block b is a · x_b, giving {B*R, C}.
template <typename T> Var matmul_shared_a(Graph<T>& g, Var a, Var x, int64_t batch);

// ---- normalization, activation stacks ----
template <typename T> Var layer_norm(Graph<T>& g, Var x, Var gain, Var bias);
template <typename T> Var softmax_rows(Graph<T>& g, Var x);

// Scaled dot-product attention over already-projected q/k/v. Rows are grouped
// per batch element: q is {B*Mq, D}, k and v are {B*Mkv, D}, D split across
// `heads`. Each query row only mixes value rows of its own batch element.
template <typename T>
Var attention_core(Graph<T>& g, Var q, Var k, Var v, int64_t batch, int64_t heads);

// ---- reductions & losses ----
template <typename T> Var rows_l2_norm(Graph<T>& g, Var x);  // {R,C} -> {R,1}
template <typename T>
Var cross_entropy_rows(Graph<T>& g, Var logits,
                       std::shared_ptr<const std::vector<int>> labels);  // mean over rows
template <typename T> Var mse(Graph<T>& g, Var a, Var b);

// ---- plain-tensor helpers (no graph) ----
template <typename T> Tensor<T> softmax_tensor(const Tensor<T>& x);
template <typename T> T gelu_scalar(T x);

}  // namespace vct::ops
