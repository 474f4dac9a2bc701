#pragma once

#include <vector>

#include "vct/model.hpp"

namespace vct {

// Which slot gets swapped for each batch element and with which partner image.
struct SwapPlan {
  std::vector<int> slots;
  std::vector<int> partners;
};

// Slots uniform over [0, M); partner of i is (i+1) mod B so the partner is
// always a different image.
SwapPlan draw_swap_plan(Rng& rng, int64_t batch, int64_t concepts);

// Row l of ci replaced by row l of cj (single image, plain tensors).
template <typename T>
Tensor<T> swap_tokens(const Tensor<T>& ci, const Tensor<T>& cj, int64_t l);

template <typename T>
struct LossNodes {
  Var rec, dis, total;
  Tensor<T> logits;          // {B, M} slot-identification logits (value copy)
  Tensor<T> reencode_input;  // {2B, pixels} decoded originals then swaps
  double rec_value = 0, dis_value = 0, total_value = 0;
  double swap_accuracy = 0;
};

template <typename T>
struct DisTail {
  Var dis;
  Tensor<T> logits;  // {B, M}
  double swap_accuracy = 0;
};

// Slot-identification tail of the disentangling loss: c_re stacks the
// re-encoded concepts of the originals ({B*M, D} rows) followed by those of
// the swap-decoded images; logits are the per-slot l2 norms of the row-wise
// difference and the loss is cross entropy against the swapped slot.
template <typename T>
DisTail<T> dis_from_reencoded(Graph<T>& g, Var c_re, const std::vector<int>& slots,
                              int64_t B, int64_t M);

// Builds reconstruction and disentangling losses on g. The model must already
// be bound to g. Honors the detach/no-detach settings of the model config;
// the disentangling branch is always built (so swap accuracy is reported even
// when its weight is zero).
template <typename T>
LossNodes<T> build_losses(VctModel<T>& model, Graph<T>& g, const Tensor<T>& images,
                          int64_t B, const SwapPlan& plan);

// Backward pass with the configured gradient scoping: default mode backprops
// the disentangling loss, zeroes gradients outside the concept tokenizer and
// prototypes, then backprops reconstruction on top; no-detach mode backprops
// the weighted sum through everything.
template <typename T>
void backward_losses(VctModel<T>& model, Graph<T>& g, const LossNodes<T>& nodes);

extern template Tensor<float> swap_tokens<float>(const Tensor<float>&, const Tensor<float>&, int64_t);
extern template Tensor<double> swap_tokens<double>(const Tensor<double>&, const Tensor<double>&, int64_t);
extern template DisTail<float> dis_from_reencoded<float>(Graph<float>&, Var,
                                                         const std::vector<int>&, int64_t, int64_t);
extern template DisTail<double> dis_from_reencoded<double>(Graph<double>&, Var,
                                                           const std::vector<int>&, int64_t,
                                                           int64_t);
extern template LossNodes<float> build_losses<float>(VctModel<float>&, Graph<float>&,
                                                     const Tensor<float>&, int64_t,
                                                     const SwapPlan&);
extern template LossNodes<double> build_losses<double>(VctModel<double>&, Graph<double>&,
                                                       const Tensor<double>&, int64_t,
                                                       const SwapPlan&);
extern template void backward_losses<float>(VctModel<float>&, Graph<float>&,
                                            const LossNodes<float>&);
extern template void backward_losses<double>(VctModel<double>&, Graph<double>&,
                                             const LossNodes<double>&);

}  // namespace vct
