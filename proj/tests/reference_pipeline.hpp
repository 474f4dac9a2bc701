#pragma once

// Step-by-step double-precision reference for the tokenize / detokenize /
// swap / re-encode pipeline, written directly against Eigen with one image
// at a time and no autodiff machinery. Shares nothing with the production
// path except the parameter store it reads weights from.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "vct/config.hpp"
#include "vct/losses.hpp"
#include "vct/params.hpp"
#include "vct/tensor.hpp"

namespace refpipe {

using Mat = Eigen::MatrixXd;
using vct::ExperimentConfig;
using vct::ParameterStore;
using vct::SwapPlan;

inline Mat pget(ParameterStore<double>& store, const std::string& name) {
  const vct::Tensor<double>& t = store.by_name(name).value;
  Mat m(t.rows(), t.cols());
  for (int64_t r = 0; r < t.rows(); ++r)
    for (int64_t c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
  return m;
}

inline Mat layernorm(const Mat& x, const Mat& gain, const Mat& bias) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mu = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mu += x(r, c);
    mu /= static_cast<double>(x.cols());
    double var = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<double>(x.cols());
    double rstd = 1.0 / std::sqrt(var + 1e-5);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      out(r, c) = (x(r, c) - mu) * rstd * gain(0, c) + bias(0, c);
  }
  return out;
}

inline Mat gelu(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      out(r, c) = 0.5 * x(r, c) * (1.0 + std::erf(x(r, c) / std::sqrt(2.0)));
  return out;
}

inline Mat linear(const Mat& x, const Mat& w, const Mat& b) {
  Mat out = x * w;
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) += b.row(0);
  return out;
}

// multi-head attention for one image: q_in {Sq, D}, kv_in {Skv, D}
inline Mat attention(ParameterStore<double>& store, const std::string& p, const Mat& q_in,
                     const Mat& kv_in, int64_t heads) {
  Mat q = linear(q_in, pget(store, p + ".wq"), pget(store, p + ".bq"));
  Mat k = linear(kv_in, pget(store, p + ".wk"), pget(store, p + ".bk"));
  Mat v = linear(kv_in, pget(store, p + ".wv"), pget(store, p + ".bv"));
  const Eigen::Index D = q.cols(), dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat mixed(q.rows(), D);
  for (int64_t h = 0; h < heads; ++h) {
    Mat qh = q.middleCols(h * dh, dh);
    Mat kh = k.middleCols(h * dh, dh);
    Mat vh = v.middleCols(h * dh, dh);
    Mat scores = qh * kh.transpose() * scale;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      double mx = scores.row(r).maxCoeff();
      double denom = 0;
      for (Eigen::Index c = 0; c < scores.cols(); ++c) {
        scores(r, c) = std::exp(scores(r, c) - mx);
        denom += scores(r, c);
      }
      scores.row(r) /= denom;
    }
    mixed.middleCols(h * dh, dh) = scores * vh;
  }
  return linear(mixed, pget(store, p + ".wo"), pget(store, p + ".bo"));
}

inline Mat ffn(ParameterStore<double>& store, const std::string& p, const Mat& x) {
  Mat h = gelu(linear(x, pget(store, p + ".w1"), pget(store, p + ".b1")));
  return linear(h, pget(store, p + ".w2"), pget(store, p + ".b2"));
}

inline Mat self_block(ParameterStore<double>& store, const std::string& p, const Mat& x,
                      int64_t heads) {
  Mat n1 = layernorm(x, pget(store, p + ".ln1.g"), pget(store, p + ".ln1.b"));
  Mat h = x + attention(store, p + ".attn", n1, n1, heads);
  Mat n2 = layernorm(h, pget(store, p + ".ln2.g"), pget(store, p + ".ln2.b"));
  return h + ffn(store, p + ".ffn", n2);
}

inline Mat cross_block(ParameterStore<double>& store, const std::string& p, const Mat& q,
                       const Mat& kv, int64_t heads) {
  Mat nq = layernorm(q, pget(store, p + ".lnq.g"), pget(store, p + ".lnq.b"));
  Mat nk = layernorm(kv, pget(store, p + ".lnkv.g"), pget(store, p + ".lnkv.b"));
  Mat h = q + attention(store, p + ".attn", nq, nk, heads);
  Mat n2 = layernorm(h, pget(store, p + ".ln2.g"), pget(store, p + ".ln2.b"));
  return h + ffn(store, p + ".ffn", n2);
}

// one image's pixels ({H*W*3} row-major HWC) to concept tokens {M, D}
inline Mat encode_one(ParameterStore<double>& store, const ExperimentConfig& cfg,
                      const Eigen::VectorXd& px) {
  const int64_t S = cfg.image_size, ps = cfg.patch_size, side = S / ps;
  const int64_t N = side * side, P = ps * ps * 3, D = cfg.dim;
  Mat patches(N, P);
  for (int64_t py = 0; py < side; ++py)
    for (int64_t pxi = 0; pxi < side; ++pxi)
      for (int64_t dy = 0; dy < ps; ++dy)
        for (int64_t dx = 0; dx < ps; ++dx)
          for (int64_t c = 0; c < 3; ++c)
            patches(py * side + pxi, (dy * ps + dx) * 3 + c) =
                px(((py * ps + dy) * S + pxi * ps + dx) * 3 + c);
  Mat z = linear(patches, pget(store, "it.proj.w"), pget(store, "it.proj.b")) +
          pget(store, "it.pos");
  Mat con = pget(store, "prototypes");
  for (int64_t l = 0; l < cfg.enc_layers; ++l) {
    const std::string base = "ct.l" + std::to_string(l);
    z = self_block(store, base + ".img", z, cfg.heads);
    con = cross_block(store, base + ".con", con, z, cfg.heads);
  }
  return con;
}

// concept tokens {M, D} back to one image's pixels
inline Eigen::VectorXd decode_one(ParameterStore<double>& store, const ExperimentConfig& cfg,
                                  const Mat& con) {
  const int64_t S = cfg.image_size, ps = cfg.patch_size, side = S / ps;
  Mat x = pget(store, "queries");
  for (int64_t l = 0; l < cfg.dec_layers; ++l) {
    const std::string base = "dt.l" + std::to_string(l);
    x = cross_block(store, base + ".x", x, con, cfg.heads);
    x = self_block(store, base + ".s", x, cfg.heads);
  }
  Mat patches = linear(x, pget(store, "id.proj.w"), pget(store, "id.proj.b"));
  Eigen::VectorXd px(S * S * 3);
  for (int64_t y = 0; y < S; ++y)
    for (int64_t xx = 0; xx < S; ++xx)
      for (int64_t c = 0; c < 3; ++c)
        px((y * S + xx) * 3 + c) =
            patches((y / ps) * side + (xx / ps), ((y % ps) * ps + (xx % ps)) * 3 + c);
  return px;
}

struct RefLosses {
  double rec = 0, dis = 0, total = 0;
  Mat logits;
  double swap_accuracy = 0;
};

inline RefLosses reference_losses(ParameterStore<double>& store, const ExperimentConfig& cfg,
                                  const vct::Tensor<double>& images, const SwapPlan& plan) {
  const int64_t B = images.rows(), M = cfg.concepts;
  const double lambda = cfg.no_dis_loss ? 0.0 : cfg.dis_weight;

  std::vector<Mat> C(B), Chat(B);
  std::vector<Eigen::VectorXd> x(B), xhat(B);
  for (int64_t i = 0; i < B; ++i) {
    x[i] = Eigen::VectorXd(images.cols());
    for (int64_t p = 0; p < images.cols(); ++p) x[i](p) = images.at(i, p);
    C[i] = encode_one(store, cfg, x[i]);
  }
  RefLosses out;
  for (int64_t i = 0; i < B; ++i) {
    xhat[i] = decode_one(store, cfg, C[i]);
    out.rec += (xhat[i] - x[i]).squaredNorm();
  }
  out.rec /= static_cast<double>(B * images.cols());

  out.logits = Mat::Zero(B, M);
  double dis_sum = 0;
  int hits = 0;
  for (int64_t i = 0; i < B; ++i) {
    const int l = plan.slots[static_cast<size_t>(i)];
    const int j = plan.partners[static_cast<size_t>(i)];
    Chat[i] = C[i];
    Chat[i].row(l) = C[j].row(l);
    Eigen::VectorXd xswap = decode_one(store, cfg, Chat[i]);
    Mat re_orig = encode_one(store, cfg, xhat[i]);
    Mat re_swap = encode_one(store, cfg, xswap);
    Mat dc = re_swap - re_orig;
    for (int64_t m = 0; m < M; ++m) out.logits(i, m) = dc.row(m).norm();
    double mx = out.logits.row(i).maxCoeff();
    double lse = 0;
    for (int64_t m = 0; m < M; ++m) lse += std::exp(out.logits(i, m) - mx);
    dis_sum += mx + std::log(lse) - out.logits(i, l);
    int best = 0;
    for (int64_t m = 1; m < M; ++m)
      if (out.logits(i, m) > out.logits(i, best)) best = static_cast<int>(m);
    if (best == l) ++hits;
  }
  out.dis = dis_sum / static_cast<double>(B);
  out.total = out.rec + lambda * out.dis;
  out.swap_accuracy = static_cast<double>(hits) / static_cast<double>(B);
  return out;
}

}  // namespace refpipe
