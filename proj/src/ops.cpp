#include "vct/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace vct::ops {

namespace {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "add");
  Tensor<T> out = g.value(a);
  mat(out) += mat(g.value(b));
  return g.add_node(std::move(out), {a, b}, [a, b](Graph<T>& g, int32_t id) {
    const Tensor<T>& go = g.grad(Var{id});
    if (g.wants_grad(a)) mat(g.grad_ref(a)) += mat(go);
    if (g.wants_grad(b)) mat(g.grad_ref(b)) += mat(go);
  });
}

template <typename T>
Var sub(Graph<T>& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "sub");
  Tensor<T> out = g.value(a);
  mat(out) -= mat(g.value(b));
  return g.add_node(std::move(out), {a, b}, [a, b](Graph<T>& g, int32_t id) {
    const Tensor<T>& go = g.grad(Var{id});
    if (g.wants_grad(a)) mat(g.grad_ref(a)) += mat(go);
    if (g.wants_grad(b)) mat(g.grad_ref(b)) -= mat(go);
  });
}

template <typename T>
Var scale(Graph<T>& g, Var a, T c) {
  Tensor<T> out = g.value(a);
  mat(out) *= c;
  return g.add_node(std::move(out), {a}, [a, c](Graph<T>& g, int32_t id) {
    if (g.wants_grad(a)) mat(g.grad_ref(a)) += c * mat(g.grad(Var{id}));
  });
}

template <typename T>
Var add_bias(Graph<T>& g, Var x, Var bias) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& bv = g.value(bias);
  if (bv.numel() != xv.cols())
    throw std::invalid_argument("add_bias: bias length != columns");
  Tensor<T> out = xv;
  mat(out).rowwise() += Eigen::Map<const Eigen::RowVectorX<T>>(bv.data.data(), bv.numel());
  return g.add_node(std::move(out), {x, bias}, [x, bias](Graph<T>& g, int32_t id) {
    const Tensor<T>& go = g.grad(Var{id});
    if (g.wants_grad(x)) mat(g.grad_ref(x)) += mat(go);
    if (g.wants_grad(bias)) {
      Tensor<T>& gb = g.grad_ref(bias);
      Eigen::Map<Eigen::RowVectorX<T>>(gb.data.data(), gb.numel()) +=
          mat(go).colwise().sum();
    }
  });
}

template <typename T>
T gelu_scalar(T x) {
  return static_cast<T>(0.5) * x *
         (static_cast<T>(1) + std::erf(x * static_cast<T>(kInvSqrt2)));
}

template <typename T>
Var gelu(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out = Tensor<T>::zeros(xv.shape);
  for (size_t i = 0; i < xv.data.size(); ++i) out.data[i] = gelu_scalar(xv.data[i]);
  return g.add_node(std::move(out), {x}, [x](Graph<T>& g, int32_t id) {
    if (!g.wants_grad(x)) return;
    const Tensor<T>& go = g.grad(Var{id});
    const Tensor<T>& xv = g.value(x);
    Tensor<T>& gx = g.grad_ref(x);
    for (size_t i = 0; i < xv.data.size(); ++i) {
      T v = xv.data[i];
      T cdf = static_cast<T>(0.5) *
              (static_cast<T>(1) + std::erf(v * static_cast<T>(kInvSqrt2)));
      T pdf = static_cast<T>(kInvSqrt2Pi) * std::exp(static_cast<T>(-0.5) * v * v);
      gx.data[i] += go.data[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var reshape(Graph<T>& g, Var x, std::vector<int64_t> shape) {
  Tensor<T> out = g.value(x).reshaped(shape);
  return g.add_node(std::move(out), {x}, [x](Graph<T>& g, int32_t id) {
    if (!g.wants_grad(x)) return;
    const Tensor<T>& go = g.grad(Var{id});
    Tensor<T>& gx = g.grad_ref(x);
    for (size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i];
  });
}

template <typename T>
Var concat_rows(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (av.cols() != bv.cols()) throw std::invalid_argument("concat_rows: column mismatch");
  Tensor<T> out = Tensor<T>::zeros({av.rows() + bv.rows(), av.cols()});
  mat(out).topRows(av.rows()) = mat(av);
  mat(out).bottomRows(bv.rows()) = mat(bv);
  const int64_t ar = av.rows();
  return g.add_node(std::move(out), {a, b}, [a, b, ar](Graph<T>& g, int32_t id) {
    const Tensor<T>& go = g.grad(Var{id});
    if (g.wants_grad(a)) mat(g.grad_ref(a)) += mat(go).topRows(ar);
    if (g.wants_grad(b)) mat(g.grad_ref(b)) += mat(go).bottomRows(go.rows() - ar);
  });
}

template <typename T>
Var slice_rows(Graph<T>& g, Var x, int64_t row0, int64_t nrows) {
  const Tensor<T>& xv = g.value(x);
  if (row0 < 0 || row0 + nrows > xv.rows())
    throw std::out_of_range("slice_rows: range out of bounds");
  Tensor<T> out = Tensor<T>::zeros({nrows, xv.cols()});
  mat(out) = mat(xv).middleRows(row0, nrows);
  return g.add_node(std::move(out), {x}, [x, row0, nrows](Graph<T>& g, int32_t id) {
    if (!g.wants_grad(x)) return;
    mat(g.grad_ref(x)).middleRows(row0, nrows) += mat(g.grad(Var{id}));
  });
}

template <typename T>
Var detach(Graph<T>& g, Var x) {
  return g.constant(g.value(x));
}

template <typename T>
Var gather_flat(Graph<T>& g, Var x, std::shared_ptr<const std::vector<int64_t>> idx,
                std::vector<int64_t> out_shape) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  if (static_cast<int64_t>(idx->size()) != out.numel())
    throw std::invalid_argument("gather_flat: index map size != output numel");
  const auto& map = *idx;
  for (size_t i = 0; i < map.size(); ++i)
    out.data[i] = map[i] >= 0 ? xv.data[static_cast<size_t>(map[i])] : T(0);
  return g.add_node(std::move(out), {x}, [x, idx](Graph<T>& g, int32_t id) {
    if (!g.wants_grad(x)) return;
    const Tensor<T>& go = g.grad(Var{id});
    Tensor<T>& gx = g.grad_ref(x);
    const auto& map = *idx;
    for (size_t i = 0; i < map.size(); ++i)
      if (map[i] >= 0) gx.data[static_cast<size_t>(map[i])] += go.data[i];
  });
}

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b, bool trans_a, bool trans_b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  const int64_t m = trans_a ? av.cols() : av.rows();
  const int64_t ka = trans_a ? av.rows() : av.cols();
  const int64_t kb = trans_b ? bv.cols() : bv.rows();
  const int64_t n = trans_b ? bv.rows() : bv.cols();
  if (ka != kb)
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(av.shape) +
                                " x " + shape_str(bv.shape));
  Tensor<T> out = Tensor<T>::zeros({m, n});
  auto A = mat(av);
  auto B = mat(bv);
  auto C = mat(out);
  if (!trans_a && !trans_b) C.noalias() = A * B;
  else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
  else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
  else C.noalias() = A.transpose() * B.transpose();

  return g.add_node(std::move(out), {a, b},
                    [a, b, trans_a, trans_b](Graph<T>& g, int32_t id) {
    auto G = mat(g.grad(Var{id}));
    auto A = mat(g.value(a));
    auto B = mat(g.value(b));
    if (g.wants_grad(a)) {
      auto GA = mat(g.grad_ref(a));
      if (!trans_a && !trans_b) GA.noalias() += G * B.transpose();
      else if (trans_a && !trans_b) GA.noalias() += B * G.transpose();
      else if (!trans_a && trans_b) GA.noalias() += G * B;
      else GA.noalias() += B.transpose() * G.transpose();
    }
    if (g.wants_grad(b)) {
      auto GB = mat(g.grad_ref(b));
      if (!trans_a && !trans_b) GB.noalias() += A.transpose() * G;
      else if (trans_a && !trans_b) GB.noalias() += A * G;
      else if (!trans_a && trans_b) GB.noalias() += G.transpose() * A;
      else GB.noalias() += G.transpose() * A.transpose();
    }
  });
}

template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var bias) {
  return add_bias(g, matmul(g, x, w), bias);
}

template <typename T>
Var matmul_shared_a(Graph<T>& g, Var a, Var x, int64_t batch) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& xv = g.value(x);
  const int64_t R = av.rows(), S = av.cols(), C = xv.cols();
  if (xv.rows() % batch != 0 || xv.rows() / batch != S)
    throw std::invalid_argument("matmul_shared_a: x rows must be batch * a cols");
  Tensor<T> out = Tensor<T>::zeros({batch * R, C});
  auto A = mat(av);
  auto X = mat(xv);
  auto Y = mat(out);
  for (int64_t b = 0; b < batch; ++b)
    Y.middleRows(b * R, R).noalias() = A * X.middleRows(b * S, S);
  return g.add_node(std::move(out), {a, x}, [a, x, batch, R, S](Graph<T>& g, int32_t id) {
    auto G = mat(g.grad(Var{id}));
    auto A = mat(g.value(a));
    auto X = mat(g.value(x));
    const bool wa = g.wants_grad(a), wx = g.wants_grad(x);
    for (int64_t b = 0; b < batch; ++b) {
      auto Gb = G.middleRows(b * R, R);
      if (wa) mat(g.grad_ref(a)).noalias() += Gb * X.middleRows(b * S, S).transpose();
      if (wx) mat(g.grad_ref(x)).middleRows(b * S, S).noalias() += A.transpose() * Gb;
    }
  });
}

template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gain, Var bias) {
  const T eps = static_cast<T>(1e-5);
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& gv = g.value(gain);
  const Tensor<T>& bv = g.value(bias);
  const int64_t R = xv.rows(), C = xv.cols();
  if (gv.numel() != C || bv.numel() != C)
    throw std::invalid_argument("layer_norm: gain/bias length != columns");

  Tensor<T> out = Tensor<T>::zeros(xv.shape);
  Tensor<T> mean = Tensor<T>::zeros({R});
  Tensor<T> rstd = Tensor<T>::zeros({R});
  auto X = mat(xv);
  auto Y = mat(out);
  Eigen::Map<const Eigen::RowVectorX<T>> gn(gv.data.data(), C);
  Eigen::Map<const Eigen::RowVectorX<T>> bs(bv.data.data(), C);
  for (int64_t r = 0; r < R; ++r) {
    T mu = X.row(r).mean();
    T var = (X.row(r).array() - mu).square().sum() / static_cast<T>(C);
    T rs = T(1) / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    Y.row(r) = (((X.row(r).array() - mu) * rs) * gn.array() + bs.array()).matrix();
  }

  return g.add_node(std::move(out), {x, gain, bias},
                    [x, gain, bias, mean, rstd](Graph<T>& g, int32_t id) {
    const Tensor<T>& go = g.grad(Var{id});
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& gv = g.value(gain);
    const int64_t R = xv.rows(), C = xv.cols();
    auto X = mat(xv);
    auto G = mat(go);
    Eigen::Map<const Eigen::RowVectorX<T>> gn(gv.data.data(), C);
    Eigen::RowVectorX<T> xhat(C), gy(C);
    const bool wx = g.wants_grad(x), wg = g.wants_grad(gain), wb = g.wants_grad(bias);
    for (int64_t r = 0; r < R; ++r) {
      xhat = ((X.row(r).array() - mean[r]) * rstd[r]).matrix();
      if (wg) {
        Tensor<T>& gg = g.grad_ref(gain);
        Eigen::Map<Eigen::RowVectorX<T>>(gg.data.data(), C).array() +=
            G.row(r).array() * xhat.array();
      }
      if (wb) {
        Tensor<T>& gb = g.grad_ref(bias);
        Eigen::Map<Eigen::RowVectorX<T>>(gb.data.data(), C) += G.row(r);
      }
      if (wx) {
        gy = (G.row(r).array() * gn.array()).matrix();
        T m1 = gy.mean();
        T m2 = (gy.array() * xhat.array()).mean();
        mat(g.grad_ref(x)).row(r).array() +=
            rstd[r] * (gy.array() - m1 - xhat.array() * m2);
      }
    }
  });
}

template <typename T>
Tensor<T> softmax_tensor(const Tensor<T>& x) {
  if (!x.all_finite()) throw std::domain_error("softmax: non-finite input");
  Tensor<T> out = Tensor<T>::zeros(x.shape);
  auto X = mat(x);
  auto Y = mat(out);
  for (int64_t r = 0; r < x.rows(); ++r) {
    T m = X.row(r).maxCoeff();
    Y.row(r) = (X.row(r).array() - m).exp();
    Y.row(r) /= Y.row(r).sum();
  }
  return out;
}

template <typename T>
Var softmax_rows(Graph<T>& g, Var x) {
  Tensor<T> out = softmax_tensor(g.value(x));
  return g.add_node(std::move(out), {x}, [x](Graph<T>& g, int32_t id) {
    if (!g.wants_grad(x)) return;
    auto Y = mat(g.value(Var{id}));
    auto G = mat(g.grad(Var{id}));
    auto GX = mat(g.grad_ref(x));
    for (int64_t r = 0; r < Y.rows(); ++r) {
      T dot = (Y.row(r).array() * G.row(r).array()).sum();
      GX.row(r).array() += Y.row(r).array() * (G.row(r).array() - dot);
    }
  });
}

template <typename T>
Var attention_core(Graph<T>& g, Var q, Var k, Var v, int64_t batch, int64_t heads) {
  const Tensor<T>& qv = g.value(q);
  const Tensor<T>& kv = g.value(k);
  const Tensor<T>& vv = g.value(v);
  const int64_t D = qv.cols();
  if (kv.cols() != D || vv.cols() != D)
    throw std::invalid_argument("attention: feature dimension mismatch");
  if (D % heads != 0) throw std::invalid_argument("attention: D not divisible by heads");
  if (qv.rows() % batch != 0 || kv.rows() % batch != 0)
    throw std::invalid_argument("attention: rows not divisible by batch");
  if (kv.rows() != vv.rows()) throw std::invalid_argument("attention: K/V row mismatch");
  const int64_t Mq = qv.rows() / batch;
  const int64_t Mk = kv.rows() / batch;
  const int64_t dh = D / heads;
  const T scl = T(1) / std::sqrt(static_cast<T>(dh));

  Tensor<T> out = Tensor<T>::zeros(qv.shape);
  // softmax probabilities saved for backward: {batch*heads*Mq, Mk}
  auto probs = std::make_shared<Tensor<T>>();
  const bool save = g.grad_enabled();
  if (save) *probs = Tensor<T>::zeros({batch * heads * Mq, Mk});

  auto Q = mat(qv);
  auto K = mat(kv);
  auto V = mat(vv);
  auto O = mat(out);
  EMat<T> S(Mq, Mk);
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t h = 0; h < heads; ++h) {
      auto Qb = Q.block(b * Mq, h * dh, Mq, dh);
      auto Kb = K.block(b * Mk, h * dh, Mk, dh);
      auto Vb = V.block(b * Mk, h * dh, Mk, dh);
      S.noalias() = Qb * Kb.transpose();
      S *= scl;
      for (int64_t r = 0; r < Mq; ++r) {
        T m = S.row(r).maxCoeff();
        S.row(r) = (S.row(r).array() - m).exp();
        S.row(r) /= S.row(r).sum();
      }
      O.block(b * Mq, h * dh, Mq, dh).noalias() = S * Vb;
      if (save) mat(*probs).middleRows((b * heads + h) * Mq, Mq) = S;
    }
  }

  return g.add_node(std::move(out), {q, k, v},
                    [q, k, v, probs, batch, heads, Mq, Mk, dh, scl](Graph<T>& g, int32_t id) {
    auto G = mat(g.grad(Var{id}));
    auto Q = mat(g.value(q));
    auto K = mat(g.value(k));
    auto V = mat(g.value(v));
    const bool wq = g.wants_grad(q), wk = g.wants_grad(k), wv = g.wants_grad(v);
    EMat<T> dS(Mq, Mk), dA(Mq, Mk);
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t h = 0; h < heads; ++h) {
        auto A = mat(*probs).middleRows((b * heads + h) * Mq, Mq);
        auto Gb = G.block(b * Mq, h * dh, Mq, dh);
        auto Qb = Q.block(b * Mq, h * dh, Mq, dh);
        auto Kb = K.block(b * Mk, h * dh, Mk, dh);
        auto Vb = V.block(b * Mk, h * dh, Mk, dh);
        if (wv)
          mat(g.grad_ref(v)).block(b * Mk, h * dh, Mk, dh).noalias() += A.transpose() * Gb;
        if (wq || wk) {
          dA.noalias() = Gb * Vb.transpose();
          for (int64_t r = 0; r < Mq; ++r) {
            T dot = (A.row(r).array() * dA.row(r).array()).sum();
            dS.row(r).array() = A.row(r).array() * (dA.row(r).array() - dot);
          }
          dS *= scl;
          if (wq)
            mat(g.grad_ref(q)).block(b * Mq, h * dh, Mq, dh).noalias() += dS * Kb;
          if (wk)
            mat(g.grad_ref(k)).block(b * Mk, h * dh, Mk, dh).noalias() += dS.transpose() * Qb;
        }
      }
    }
  });
}

template <typename T>
Var rows_l2_norm(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  const int64_t R = xv.rows();
  Tensor<T> out = Tensor<T>::zeros({R, 1});
  auto X = mat(xv);
  for (int64_t r = 0; r < R; ++r) out[r] = X.row(r).norm();
  return g.add_node(std::move(out), {x}, [x](Graph<T>& g, int32_t id) {
    if (!g.wants_grad(x)) return;
    const Tensor<T>& yv = g.value(Var{id});
    const Tensor<T>& go = g.grad(Var{id});
    auto X = mat(g.value(x));
    auto GX = mat(g.grad_ref(x));
    for (int64_t r = 0; r < X.rows(); ++r) {
      T n = std::max(yv[r], static_cast<T>(1e-12));
      GX.row(r) += (go[r] / n) * X.row(r);
    }
  });
}

template <typename T>
Var cross_entropy_rows(Graph<T>& g, Var logits, std::shared_ptr<const std::vector<int>> labels) {
  const Tensor<T>& lv = g.value(logits);
  const int64_t R = lv.rows(), C = lv.cols();
  if (static_cast<int64_t>(labels->size()) != R)
    throw std::invalid_argument("cross_entropy: one label per row required");
  for (int lab : *labels)
    if (lab < 0 || lab >= C) throw std::out_of_range("cross_entropy: label out of range");

  auto X = mat(lv);
  T total = T(0);
  for (int64_t r = 0; r < R; ++r) {
    T m = X.row(r).maxCoeff();
    T lse = m + std::log((X.row(r).array() - m).exp().sum());
    total += lse - X(r, (*labels)[static_cast<size_t>(r)]);
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(R));

  return g.add_node(std::move(out), {logits}, [logits, labels](Graph<T>& g, int32_t id) {
    if (!g.wants_grad(logits)) return;
    const T go = g.grad(Var{id})[0];
    auto X = mat(g.value(logits));
    auto GX = mat(g.grad_ref(logits));
    const int64_t R = X.rows();
    const T w = go / static_cast<T>(R);
    Eigen::RowVectorX<T> p(X.cols());
    for (int64_t r = 0; r < R; ++r) {
      T m = X.row(r).maxCoeff();
      p = (X.row(r).array() - m).exp();
      p /= p.sum();
      GX.row(r) += w * p;
      GX(r, (*labels)[static_cast<size_t>(r)]) -= w;
    }
  });
}

template <typename T>
Var mse(Graph<T>& g, Var a, Var b) {
  check_same_shape(g.value(a), g.value(b), "mse");
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  const int64_t n = av.numel();
  T total = (mat(av) - mat(bv)).squaredNorm();
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(n));
  return g.add_node(std::move(out), {a, b}, [a, b, n](Graph<T>& g, int32_t id) {
    const T go = g.grad(Var{id})[0];
    const T w = T(2) * go / static_cast<T>(n);
    auto A = mat(g.value(a));
    auto B = mat(g.value(b));
    if (g.wants_grad(a)) mat(g.grad_ref(a)) += w * (A - B);
    if (g.wants_grad(b)) mat(g.grad_ref(b)) -= w * (A - B);
  });
}

#define VCT_INSTANTIATE_OPS(T)                                                          \
  template Var add<T>(Graph<T>&, Var, Var);                                             \
  template Var sub<T>(Graph<T>&, Var, Var);                                             \
  template Var scale<T>(Graph<T>&, Var, T);                                             \
  template Var add_bias<T>(Graph<T>&, Var, Var);                                        \
  template Var gelu<T>(Graph<T>&, Var);                                                 \
  template T gelu_scalar<T>(T);                                                         \
  template Var reshape<T>(Graph<T>&, Var, std::vector<int64_t>);                        \
  template Var concat_rows<T>(Graph<T>&, Var, Var);                                     \
  template Var slice_rows<T>(Graph<T>&, Var, int64_t, int64_t);                         \
  template Var detach<T>(Graph<T>&, Var);                                               \
  template Var gather_flat<T>(Graph<T>&, Var, std::shared_ptr<const std::vector<int64_t>>, \
                              std::vector<int64_t>);                                    \
  template Var matmul<T>(Graph<T>&, Var, Var, bool, bool);                              \
  template Var linear<T>(Graph<T>&, Var, Var, Var);                                     \
  template Var matmul_shared_a<T>(Graph<T>&, Var, Var, int64_t);                        \
  template Var layer_norm<T>(Graph<T>&, Var, Var, Var);                                 \
  template Tensor<T> softmax_tensor<T>(const Tensor<T>&);                               \
  template Var softmax_rows<T>(Graph<T>&, Var);                                         \
  template Var attention_core<T>(Graph<T>&, Var, Var, Var, int64_t, int64_t);           \
  template Var rows_l2_norm<T>(Graph<T>&, Var);                                         \
  template Var cross_entropy_rows<T>(Graph<T>&, Var,                                    \
                                     std::shared_ptr<const std::vector<int>>);          \
  template Var mse<T>(Graph<T>&, Var, Var);

VCT_INSTANTIATE_OPS(float)
VCT_INSTANTIATE_OPS(double)

}  // namespace vct::ops
