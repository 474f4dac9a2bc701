#include "vct/losses.hpp"

#include <memory>
#include <stdexcept>

namespace vct {

namespace o = ops;

SwapPlan draw_swap_plan(Rng& rng, int64_t batch, int64_t concepts) {
  SwapPlan plan;
  plan.slots.resize(static_cast<size_t>(batch));
  plan.partners.resize(static_cast<size_t>(batch));
  for (int64_t i = 0; i < batch; ++i) {
    plan.slots[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(concepts));
    plan.partners[static_cast<size_t>(i)] = static_cast<int>((i + 1) % batch);
  }
  return plan;
}

template <typename T>
Tensor<T> swap_tokens(const Tensor<T>& ci, const Tensor<T>& cj, int64_t l) {
  if (!ci.same_shape(cj)) throw std::invalid_argument("swap_tokens: shape mismatch");
  if (l < 0 || l >= ci.rows()) throw std::out_of_range("swap_tokens: slot out of range");
  Tensor<T> out = ci;
  const int64_t D = ci.cols();
  for (int64_t d = 0; d < D; ++d) out.at(l, d) = cj.at(l, d);
  return out;
}

template <typename T>
DisTail<T> dis_from_reencoded(Graph<T>& g, Var c_re, const std::vector<int>& slots,
                              int64_t B, int64_t M) {
  Var dc = o::sub(g, o::slice_rows(g, c_re, B * M, B * M), o::slice_rows(g, c_re, 0, B * M));
  Var logits = o::reshape(g, o::rows_l2_norm(g, dc), {B, M});
  auto labels = std::make_shared<const std::vector<int>>(slots);
  DisTail<T> out;
  out.dis = o::cross_entropy_rows(g, logits, labels);
  out.logits = g.value(logits);
  int hits = 0;
  for (int64_t b = 0; b < B; ++b) {
    int best = 0;
    for (int64_t m = 1; m < M; ++m)
      if (out.logits.at(b, m) > out.logits.at(b, best)) best = static_cast<int>(m);
    if (best == slots[static_cast<size_t>(b)]) ++hits;
  }
  out.swap_accuracy = static_cast<double>(hits) / static_cast<double>(B);
  return out;
}

template <typename T>
LossNodes<T> build_losses(VctModel<T>& model, Graph<T>& g, const Tensor<T>& images,
                          int64_t B, const SwapPlan& plan) {
  const ExperimentConfig& cfg = model.config();
  if (B < 2) throw std::invalid_argument("disentangling loss needs a batch of at least 2");
  if (static_cast<int64_t>(plan.slots.size()) != B ||
      static_cast<int64_t>(plan.partners.size()) != B)
    throw std::invalid_argument("swap plan does not match batch size");
  const int64_t M = cfg.concepts, D = cfg.dim;
  const T lambda = cfg.no_dis_loss ? T(0) : static_cast<T>(cfg.dis_weight);

  Var X = g.constant(images);
  Var C = model.encode(g, X, B);
  Var xhat = model.decode_image(g, C, B);
  Var rec = o::mse(g, xhat, X);

  Var c_re;               // re-encoded concepts of [originals; swapped], {2B*M, D}
  Tensor<T> re_in_value;  // its pixel input, {2B, pixels}
  if (cfg.no_detach) {
    // differentiable swap: route each row of the swapped set from C
    auto map = std::make_shared<std::vector<int64_t>>();
    map->reserve(static_cast<size_t>(B * M * D));
    for (int64_t b = 0; b < B; ++b)
      for (int64_t m = 0; m < M; ++m) {
        int64_t src_row = b * M + m;
        if (m == plan.slots[static_cast<size_t>(b)])
          src_row = static_cast<int64_t>(plan.partners[static_cast<size_t>(b)]) * M + m;
        for (int64_t d = 0; d < D; ++d) map->push_back(src_row * D + d);
      }
    Var chat = o::gather_flat(g, C, std::move(map), {B * M, D});
    Var xswap = model.decode_image(g, chat, B);
    Var re_in = o::concat_rows(g, xhat, xswap);
    re_in_value = g.value(re_in);
    c_re = model.encode(g, re_in, 2 * B);
  } else {
    // stop gradient at the decoded images: swap on values, decode without
    // recording, feed the pixels back in as constants
    const Tensor<T>& cv = g.value(C);
    Tensor<T> chat = cv;
    for (int64_t b = 0; b < B; ++b) {
      const int64_t l = plan.slots[static_cast<size_t>(b)];
      const int64_t j = plan.partners[static_cast<size_t>(b)];
      for (int64_t d = 0; d < D; ++d) chat.at(b * M + l, d) = cv.at(j * M + l, d);
    }
    Tensor<T> xswap;
    {
      NoGradScope<T> ng(g);
      xswap = g.value(model.decode_image(g, g.constant(std::move(chat)), B));
    }
    const Tensor<T>& xrec = g.value(xhat);
    Tensor<T> re = Tensor<T>::zeros({2 * B, model.pixels()});
    mat(re).topRows(B) = mat(xrec);
    mat(re).bottomRows(B) = mat(xswap);
    re_in_value = re;
    c_re = model.encode(g, g.constant(std::move(re)), 2 * B);
  }

  DisTail<T> tail = dis_from_reencoded(g, c_re, plan.slots, B, M);
  Var total = o::add(g, rec, o::scale(g, tail.dis, lambda));

  LossNodes<T> out;
  out.rec = rec;
  out.dis = tail.dis;
  out.total = total;
  out.logits = std::move(tail.logits);
  out.reencode_input = std::move(re_in_value);
  out.rec_value = static_cast<double>(g.value(rec)[0]);
  out.dis_value = static_cast<double>(g.value(out.dis)[0]);
  out.total_value = static_cast<double>(g.value(total)[0]);
  out.swap_accuracy = tail.swap_accuracy;
  return out;
}

template <typename T>
void backward_losses(VctModel<T>& model, Graph<T>& g, const LossNodes<T>& nodes) {
  const ExperimentConfig& cfg = model.config();
  const T lambda = cfg.no_dis_loss ? T(0) : static_cast<T>(cfg.dis_weight);
  if (lambda == T(0)) {
    g.backward(nodes.rec);
    return;
  }
  if (cfg.no_detach) {
    g.backward(nodes.total);
    return;
  }
  g.backward(nodes.dis, lambda);
  model.params().keep_grads_with_prefix(model.dis_scope());
  g.backward(nodes.rec);
}

template Tensor<float> swap_tokens<float>(const Tensor<float>&, const Tensor<float>&, int64_t);
template Tensor<double> swap_tokens<double>(const Tensor<double>&, const Tensor<double>&, int64_t);
template DisTail<float> dis_from_reencoded<float>(Graph<float>&, Var, const std::vector<int>&,
                                                  int64_t, int64_t);
template DisTail<double> dis_from_reencoded<double>(Graph<double>&, Var, const std::vector<int>&,
                                                    int64_t, int64_t);
template LossNodes<float> build_losses<float>(VctModel<float>&, Graph<float>&,
                                              const Tensor<float>&, int64_t, const SwapPlan&);
template LossNodes<double> build_losses<double>(VctModel<double>&, Graph<double>&,
                                                const Tensor<double>&, int64_t, const SwapPlan&);
template void backward_losses<float>(VctModel<float>&, Graph<float>&, const LossNodes<float>&);
template void backward_losses<double>(VctModel<double>&, Graph<double>&, const LossNodes<double>&);

}  // namespace vct
