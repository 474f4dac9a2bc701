#include <cmath>
#include <vector>

#include "doctest.h"
#include "vct/model.hpp"
#include "vct/rng.hpp"

using namespace vct;

namespace {

ExperimentConfig tiny_cfg() {
  ExperimentConfig c;
  c.image_size = 16;
  c.patch_size = 8;  // 4 image tokens
  c.dim = 32;
  c.heads = 2;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.concepts = 5;
  c.init_std = 0.05;
  c.batch = 3;
  return c;
}

template <typename T>
Tensor<T> random_images(Rng& rng, int64_t B, int64_t size) {
  Tensor<T> x = Tensor<T>::zeros({B, size * size * 3});
  for (auto& v : x.data) v = static_cast<T>(rng.uniform());
  return x;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  REQUIRE(a.same_shape(b));
  double m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

// Largest row mismatch between the full-prototype-set run and per-slot
// single-prototype runs of the same tokenizer. Zero (to roundoff) when
// concept rows never interact.
double independence_violation(const ExperimentConfig& cfg, uint64_t seed) {
  VctModel<double> model(cfg, seed);
  Rng rng(mix_seed(seed, "img"));
  const int64_t B = cfg.batch, M = cfg.concepts, D = cfg.dim;
  Tensor<double> x = random_images<double>(rng, B, cfg.image_size);

  Graph<double> g(false);
  model.bind(g);
  Var z = model.image_tokens(g, g.constant(x), B);
  Tensor<double> full = g.value(model.concept_tokens(g, z, B));

  double worst = 0;
  for (int64_t j = 0; j < M; ++j) {
    Tensor<double> solo = g.value(model.concept_tokens_subset(g, z, B, j, 1));
    for (int64_t b = 0; b < B; ++b)
      for (int64_t d = 0; d < D; ++d)
        worst = std::max(worst, std::abs(full.at(b * M + j, d) - solo.at(b, d)));
  }
  return worst;
}

}  // namespace

TEST_CASE("tokenizer is equivariant to prototype permutation") {
  ExperimentConfig cfg = tiny_cfg();
  const int64_t B = cfg.batch, M = cfg.concepts, D = cfg.dim;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    VctModel<double> model(cfg, seed);
    Rng rng(mix_seed(seed, "img"));
    Tensor<double> x = random_images<double>(rng, B, cfg.image_size);

    Graph<double> g(false);
    model.bind(g);
    Tensor<double> base = g.value(model.encode(g, g.constant(x), B));

    std::vector<int64_t> perm(static_cast<size_t>(M));
    for (int64_t m = 0; m < M; ++m) perm[static_cast<size_t>(m)] = m;
    rng.shuffle(perm);

    Tensor<double>& P = model.params().by_name("prototypes").value;
    Tensor<double> orig = P;
    for (int64_t m = 0; m < M; ++m)
      for (int64_t d = 0; d < D; ++d) P.at(m, d) = orig.at(perm[static_cast<size_t>(m)], d);

    Graph<double> g2(false);
    model.bind(g2);
    Tensor<double> permuted = g2.value(model.encode(g2, g2.constant(x), B));

    double worst = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t m = 0; m < M; ++m)
        for (int64_t d = 0; d < D; ++d)
          worst = std::max(worst, std::abs(permuted.at(b * M + m, d) -
                                           base.at(b * M + perm[static_cast<size_t>(m)], d)));
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("concept rows are computed independently of one another") {
  ExperimentConfig cfg = tiny_cfg();
  for (uint64_t seed = 0; seed < 20; ++seed) CHECK(independence_violation(cfg, seed) <= 1e-5);
}

TEST_CASE("adding concept self-attention breaks row independence") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.concept_self_attention = true;
  double worst = 0;
  for (uint64_t seed = 0; seed < 3; ++seed)
    worst = std::max(worst, independence_violation(cfg, seed));
  CHECK(worst > 1e-5);
}

TEST_CASE("detokenizer output does not depend on concept token order") {
  for (int variant = 0; variant < 2; ++variant) {
    ExperimentConfig cfg = tiny_cfg();
    if (variant == 1) {
      cfg.codec = "conv-ae";
      cfg.cnn_detokenizer = true;
    }
    const int64_t B = cfg.batch, M = cfg.concepts, D = cfg.dim;
    for (uint64_t seed = 0; seed < 20; ++seed) {
      VctModel<double> model(cfg, seed);
      Rng rng(mix_seed(seed, "img"));
      Tensor<double> x = random_images<double>(rng, B, cfg.image_size);
      Tensor<double> c = model.encode_tensor(x, B);

      std::vector<int64_t> perm(static_cast<size_t>(M));
      for (int64_t m = 0; m < M; ++m) perm[static_cast<size_t>(m)] = m;
      rng.shuffle(perm);
      Tensor<double> shuffled = Tensor<double>::zeros({B * M, D});
      for (int64_t b = 0; b < B; ++b)
        for (int64_t m = 0; m < M; ++m)
          for (int64_t d = 0; d < D; ++d)
            shuffled.at(b * M + m, d) = c.at(b * M + perm[static_cast<size_t>(m)], d);

      Tensor<double> y0 = model.decode_tensor(c, B);
      Tensor<double> y1 = model.decode_tensor(shuffled, B);
      CHECK(max_abs_diff(y0, y1) <= 1e-5);
    }
  }
}

TEST_CASE("sequence-style ablation detokenizer is order sensitive") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.transformer_detokenizer = true;
  VctModel<double> model(cfg, 1);
  Rng rng(7);
  const int64_t B = cfg.batch, M = cfg.concepts, D = cfg.dim;
  Tensor<double> x = random_images<double>(rng, B, cfg.image_size);
  Tensor<double> c = model.encode_tensor(x, B);
  Tensor<double> rev = Tensor<double>::zeros({B * M, D});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t m = 0; m < M; ++m)
      for (int64_t d = 0; d < D; ++d) rev.at(b * M + m, d) = c.at(b * M + (M - 1 - m), d);
  CHECK(max_abs_diff(model.decode_tensor(c, B), model.decode_tensor(rev, B)) > 1e-5);
}

TEST_CASE("image branch of the tokenizer never reads the prototypes") {
  ExperimentConfig cfg = tiny_cfg();
  VctModel<double> model(cfg, 3);
  Rng rng(11);
  const int64_t B = cfg.batch;
  Tensor<double> x = random_images<double>(rng, B, cfg.image_size);

  auto run = [&]() {
    std::vector<Tensor<double>> stream;
    model.probe_image_stream = &stream;
    Graph<double> g(false);
    model.bind(g);
    model.encode(g, g.constant(x), B);
    model.probe_image_stream = nullptr;
    return stream;
  };

  std::vector<Tensor<double>> before = run();
  Tensor<double>& P = model.params().by_name("prototypes").value;
  for (auto& v : P.data) v = -v * 3.0 + 0.125;
  std::vector<Tensor<double>> after = run();

  REQUIRE(before.size() == static_cast<size_t>(cfg.enc_layers));
  REQUIRE(after.size() == before.size());
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i].rows() == B * model.n_tokens());
    CHECK(max_abs_diff(before[i], after[i]) == 0.0);
  }
}

TEST_CASE("conv codec stage plans bottleneck at a 4x4 grid") {
  auto enc = conv_encoder_plan(64, 256);
  REQUIRE(enc.size() == 4);
  CHECK(enc.front().in_size == 64);
  CHECK(enc.front().cin == 3);
  CHECK(enc.back().out_size == 4);
  CHECK(enc.back().cout == 256);
  for (size_t i = 0; i + 1 < enc.size(); ++i) {
    CHECK(enc[i].out_size == enc[i + 1].in_size);
    CHECK(enc[i].cout == enc[i + 1].cin);
  }
  auto dec = conv_decoder_plan(64, 256);
  REQUIRE(dec.size() == 4);
  CHECK(dec.front().in_size == 4);
  CHECK(dec.front().cin == 256);
  CHECK(dec.back().out_size == 64);
  CHECK(dec.back().cout == 3);
  CHECK_FALSE(dec.back().gelu);
}

TEST_CASE("conv codec round trip shapes") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.codec = "conv-ae";
  VctModel<float> model(cfg, 5);
  CHECK(model.n_tokens() == 16);
  Rng rng(5);
  const int64_t B = 2;
  Tensor<float> x = random_images<float>(rng, B, cfg.image_size);

  Graph<float> g(false);
  model.bind(g);
  Var z = model.image_tokens(g, g.constant(x), B);
  CHECK(g.value(z).rows() == B * 16);
  CHECK(g.value(z).cols() == cfg.dim);
  Var c = model.concept_tokens(g, z, B);
  Var y = model.decode_image(g, c, B);
  CHECK(g.value(y).rows() == B);
  CHECK(g.value(y).cols() == model.pixels());
  CHECK(g.value(y).all_finite());

  Var ae = model.autoencode(g, g.constant(x), B);
  CHECK(g.value(ae).same_shape(x));
  CHECK(g.value(ae).all_finite());
}

TEST_CASE("ablation detokenizers decode to image shape") {
  for (int variant = 0; variant < 2; ++variant) {
    ExperimentConfig cfg = tiny_cfg();
    cfg.codec = "conv-ae";
    if (variant == 0)
      cfg.cnn_detokenizer = true;
    else
      cfg.transformer_detokenizer = true;
    VctModel<float> model(cfg, 9);
    Rng rng(9);
    Tensor<float> x = random_images<float>(rng, 2, cfg.image_size);
    Tensor<float> y = model.reconstruct_tensor(x, 2);
    CHECK(y.rows() == 2);
    CHECK(y.cols() == model.pixels());
    CHECK(y.all_finite());
  }
}

TEST_CASE("disentangling scope follows the update switches") {
  ExperimentConfig cfg = tiny_cfg();
  {
    VctModel<float> m(cfg, 0);
    auto scope = m.dis_scope();
    bool has_ct = false, has_proto = false, has_it = false;
    for (auto& p : scope) {
      if (p == "ct.") has_ct = true;
      if (p == "prototypes") has_proto = true;
      if (p == "it.") has_it = true;
    }
    CHECK(has_ct);
    CHECK(has_proto);
    CHECK_FALSE(has_it);
    CHECK(m.frozen_prefixes().empty());
  }
  {
    ExperimentConfig c2 = cfg;
    c2.dis_update_prototypes = false;
    c2.dis_update_image_tokenizer = true;
    VctModel<float> m(c2, 0);
    auto scope = m.dis_scope();
    bool has_proto = false, has_it = false;
    for (auto& p : scope) {
      if (p == "prototypes") has_proto = true;
      if (p == "it.") has_it = true;
    }
    CHECK_FALSE(has_proto);
    CHECK(has_it);
  }
  {
    ExperimentConfig c3 = cfg;
    c3.codec = "pretrained-conv-ae";
    VctModel<float> m(c3, 0);
    auto frozen = m.frozen_prefixes();
    REQUIRE(frozen.size() == 2);
    CHECK(frozen[0] == "it.conv");
    CHECK(frozen[1] == "id.conv");
  }
}

TEST_CASE("concept positional embedding ablation changes the tokens") {
  ExperimentConfig a = tiny_cfg();
  ExperimentConfig b = a;
  b.concept_pos_embedding = true;
  VctModel<double> ma(a, 2), mb(b, 2);
  // the flag has to be wired through to the tokenizer input
  Rng rng(2);
  Tensor<double> x = random_images<double>(rng, a.batch, a.image_size);
  CHECK(max_abs_diff(ma.encode_tensor(x, a.batch), mb.encode_tensor(x, a.batch)) > 1e-6);
}
