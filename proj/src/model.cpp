#include "vct/model.hpp"

#include <stdexcept>

namespace vct {

namespace o = ops;

std::vector<ConvStage> conv_encoder_plan(int64_t image_size, int64_t dim) {
  int stages = 0;
  for (int64_t t = image_size; t > 4; t /= 2) ++stages;
  std::vector<ConvStage> plan;
  int64_t cin = 3, size = image_size;
  for (int i = 0; i < stages; ++i) {
    ConvStage st;
    st.in_size = size;
    st.out_size = size / 2;
    st.cin = cin;
    st.cout = (i == stages - 1) ? dim : std::min<int64_t>(32ll << i, 128);
    st.gelu = (i != stages - 1);
    plan.push_back(st);
    cin = st.cout;
    size = st.out_size;
  }
  return plan;
}

std::vector<ConvStage> conv_decoder_plan(int64_t image_size, int64_t dim) {
  auto enc = conv_encoder_plan(image_size, dim);
  const int stages = static_cast<int>(enc.size());
  std::vector<ConvStage> plan;
  int64_t cin = dim, size = 4;
  for (int i = 0; i < stages; ++i) {
    ConvStage st;
    st.in_size = size;
    st.out_size = size * 2;
    st.cin = cin;
    st.cout = (i == stages - 1) ? 3 : enc[static_cast<size_t>(stages - 2 - i)].cout;
    st.gelu = (i != stages - 1);
    plan.push_back(st);
    cin = st.cout;
    size = st.out_size;
  }
  return plan;
}

template <typename T>
VctModel<T>::VctModel(ExperimentConfig cfg, uint64_t param_seed) : cfg_(std::move(cfg)) {
  validate_config(cfg_);
  n_ = token_count(cfg_);
  const bool conv_codec = cfg_.codec != "patch";
  if (conv_codec || cfg_.cnn_detokenizer) {
    enc_plan_ = conv_encoder_plan(cfg_.image_size, cfg_.dim);
    dec_plan_ = conv_decoder_plan(cfg_.image_size, cfg_.dim);
  }

  Rng rng(param_seed);
  const int64_t D = cfg_.dim;
  const int64_t P = cfg_.patch_size * cfg_.patch_size * 3;
  const T std = static_cast<T>(cfg_.init_std);

  // image tokenizer
  if (conv_codec) {
    reg_conv_stack(rng, "it.conv", enc_plan_);
  } else {
    store_.add_trunc_normal("it.proj.w", {P, D}, rng, std);
    store_.add_zeros("it.proj.b", {1, D});
  }
  store_.add_trunc_normal("it.pos", {n_, D}, rng, std);

  // concept tokenizer
  store_.add_trunc_normal("prototypes", {cfg_.concepts, D}, rng, std);
  if (cfg_.concept_pos_embedding)
    store_.add_trunc_normal("ct.cpos", {cfg_.concepts, D}, rng, std);
  for (int64_t l = 0; l < cfg_.enc_layers; ++l) {
    const std::string base = "ct.l" + std::to_string(l);
    reg_self_block(rng, base + ".img");
    reg_cross_block(rng, base + ".con");
    if (cfg_.concept_self_attention) {
      reg_ln(base + ".con.sattn.ln", D);
      reg_attn(rng, base + ".con.sattn");
    }
  }

  // concept detokenizer
  if (cfg_.cnn_detokenizer) {
    store_.add_trunc_normal("dt.cnn.expand.w", {D, 16 * D}, rng, std);
    store_.add_zeros("dt.cnn.expand.b", {1, 16 * D});
    reg_conv_stack(rng, "dt.cnn.up", dec_plan_);
  } else if (cfg_.transformer_detokenizer) {
    for (int64_t l = 0; l < cfg_.dec_layers; ++l)
      reg_self_block(rng, "dt.tr.l" + std::to_string(l));
    store_.add_trunc_normal("dt.tr.readout", {n_, cfg_.concepts}, rng, std);
  } else {
    store_.add_trunc_normal("queries", {n_, D}, rng, std);
    for (int64_t l = 0; l < cfg_.dec_layers; ++l) {
      const std::string base = "dt.l" + std::to_string(l);
      reg_cross_block(rng, base + ".x");
      reg_self_block(rng, base + ".s");
    }
  }

  // image detokenizer (the cnn variant decodes straight to pixels)
  if (!cfg_.cnn_detokenizer) {
    if (conv_codec) {
      reg_conv_stack(rng, "id.conv", dec_plan_);
    } else {
      store_.add_trunc_normal("id.proj.w", {D, P}, rng, std);
      store_.add_zeros("id.proj.b", {1, P});
    }
  }
}

// ---- registration helpers ----

template <typename T>
void VctModel<T>::reg_ln(const std::string& p, int64_t width) {
  store_.add_ones(p + ".g", {1, width});
  store_.add_zeros(p + ".b", {1, width});
}

template <typename T>
void VctModel<T>::reg_attn(Rng& rng, const std::string& p) {
  const int64_t D = cfg_.dim;
  const T std = static_cast<T>(cfg_.init_std);
  for (const char* w : {".wq", ".wk", ".wv", ".wo"})
    store_.add_trunc_normal(p + w, {D, D}, rng, std);
  for (const char* b : {".bq", ".bk", ".bv", ".bo"}) store_.add_zeros(p + b, {1, D});
}

template <typename T>
void VctModel<T>::reg_ffn(Rng& rng, const std::string& p) {
  const int64_t D = cfg_.dim;
  const T std = static_cast<T>(cfg_.init_std);
  store_.add_trunc_normal(p + ".w1", {D, 4 * D}, rng, std);
  store_.add_zeros(p + ".b1", {1, 4 * D});
  store_.add_trunc_normal(p + ".w2", {4 * D, D}, rng, std);
  store_.add_zeros(p + ".b2", {1, D});
}

template <typename T>
void VctModel<T>::reg_self_block(Rng& rng, const std::string& p) {
  reg_ln(p + ".ln1", cfg_.dim);
  reg_attn(rng, p + ".attn");
  reg_ln(p + ".ln2", cfg_.dim);
  reg_ffn(rng, p + ".ffn");
}

template <typename T>
void VctModel<T>::reg_cross_block(Rng& rng, const std::string& p) {
  reg_ln(p + ".lnq", cfg_.dim);
  reg_ln(p + ".lnkv", cfg_.dim);
  reg_attn(rng, p + ".attn");
  reg_ln(p + ".ln2", cfg_.dim);
  reg_ffn(rng, p + ".ffn");
}

template <typename T>
void VctModel<T>::reg_conv_stack(Rng& rng, const std::string& p,
                                 const std::vector<ConvStage>& plan) {
  const T std = static_cast<T>(cfg_.init_std);
  for (size_t i = 0; i < plan.size(); ++i) {
    const ConvStage& s = plan[i];
    store_.add_trunc_normal(p + std::to_string(i) + ".w", {16 * s.cin, s.cout}, rng, std);
    store_.add_zeros(p + std::to_string(i) + ".b", {1, s.cout});
  }
}

// ---- binding ----

template <typename T>
void VctModel<T>::bind(Graph<T>& g) {
  pvars_.clear();
  pvars_.reserve(store_.size());
  for (auto& p : store_) pvars_.push_back(g.leaf(p.value, &p.grad));
  bound_ = &g;
}

template <typename T>
Var VctModel<T>::pv(Graph<T>& g, const std::string& name) {
  if (bound_ != &g) throw std::logic_error("model is not bound to this graph");
  int idx = store_.index_of(name);
  if (idx < 0) throw std::logic_error("unknown parameter " + name);
  return pvars_[static_cast<size_t>(idx)];
}

// ---- index maps ----

template <typename T>
IndexMap VctModel<T>::tile_map(int64_t B, int64_t rows, int64_t cols, int64_t row0) {
  std::string key = "tile:" + std::to_string(B) + ":" + std::to_string(rows) + ":" +
                    std::to_string(cols) + ":" + std::to_string(row0);
  auto it = map_cache_.find(key);
  if (it != map_cache_.end()) return it->second;
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(B * rows * cols));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) map->push_back((row0 + r) * cols + c);
  map_cache_[key] = map;
  return map;
}

template <typename T>
IndexMap VctModel<T>::patch_map(int64_t B) {
  std::string key = "patch:" + std::to_string(B);
  auto it = map_cache_.find(key);
  if (it != map_cache_.end()) return it->second;
  const int64_t H = cfg_.image_size, W = cfg_.image_size, ps = cfg_.patch_size;
  const int64_t side = H / ps;
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(B * H * W * 3));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t py = 0; py < side; ++py)
      for (int64_t px = 0; px < side; ++px)
        for (int64_t dy = 0; dy < ps; ++dy)
          for (int64_t dx = 0; dx < ps; ++dx)
            for (int64_t c = 0; c < 3; ++c)
              map->push_back(((b * H + py * ps + dy) * W + px * ps + dx) * 3 + c);
  map_cache_[key] = map;
  return map;
}

template <typename T>
IndexMap VctModel<T>::unpatch_map(int64_t B) {
  std::string key = "unpatch:" + std::to_string(B);
  auto it = map_cache_.find(key);
  if (it != map_cache_.end()) return it->second;
  const int64_t H = cfg_.image_size, W = cfg_.image_size, ps = cfg_.patch_size;
  const int64_t side = H / ps, N = side * side, P = ps * ps * 3;
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(B * H * W * 3));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        for (int64_t c = 0; c < 3; ++c) {
          int64_t row = b * N + (y / ps) * side + (x / ps);
          int64_t col = ((y % ps) * ps + (x % ps)) * 3 + c;
          map->push_back(row * P + col);
        }
  map_cache_[key] = map;
  return map;
}

template <typename T>
IndexMap VctModel<T>::im2col_map(int64_t B, const ConvStage& s, bool transposed) {
  std::string key = "col:" + std::to_string(B) + ":" + std::to_string(s.in_size) + ":" +
                    std::to_string(s.cin) + (transposed ? ":t" : ":f");
  auto it = map_cache_.find(key);
  if (it != map_cache_.end()) return it->second;
  const int64_t IH = s.in_size, OH = s.out_size, C = s.cin;
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(B * OH * OH * 16 * C));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OH; ++ox)
        for (int64_t ky = 0; ky < 4; ++ky)
          for (int64_t kx = 0; kx < 4; ++kx)
            for (int64_t c = 0; c < C; ++c) {
              int64_t src = -1;
              if (!transposed) {
                // stride-2 conv, kernel 4, pad 1
                int64_t iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                if (iy >= 0 && iy < IH && ix >= 0 && ix < IH)
                  src = ((b * IH + iy) * IH + ix) * C + c;
              } else {
                // stride-2 transposed conv as a stride-1 conv over the
                // zero-upsampled input (effective pad 2)
                int64_t uy = oy - 2 + ky, ux = ox - 2 + kx;
                if (uy >= 0 && ux >= 0 && uy % 2 == 0 && ux % 2 == 0) {
                  int64_t iy = uy / 2, ix = ux / 2;
                  if (iy < IH && ix < IH) src = ((b * IH + iy) * IH + ix) * C + c;
                }
              }
              map->push_back(src);
            }
  map_cache_[key] = map;
  return map;
}

// ---- builder helpers ----

template <typename T>
Var VctModel<T>::ln(Graph<T>& g, Var x, const std::string& p) {
  return o::layer_norm(g, x, pv(g, p + ".g"), pv(g, p + ".b"));
}

template <typename T>
Var VctModel<T>::mha(Graph<T>& g, Var q_in, Var kv_in, int64_t B, const std::string& p) {
  Var q = o::linear(g, q_in, pv(g, p + ".wq"), pv(g, p + ".bq"));
  Var k = o::linear(g, kv_in, pv(g, p + ".wk"), pv(g, p + ".bk"));
  Var v = o::linear(g, kv_in, pv(g, p + ".wv"), pv(g, p + ".bv"));
  Var core = o::attention_core(g, q, k, v, B, cfg_.heads);
  return o::linear(g, core, pv(g, p + ".wo"), pv(g, p + ".bo"));
}

template <typename T>
Var VctModel<T>::ffn(Graph<T>& g, Var x, const std::string& p) {
  Var h = o::gelu(g, o::linear(g, x, pv(g, p + ".w1"), pv(g, p + ".b1")));
  return o::linear(g, h, pv(g, p + ".w2"), pv(g, p + ".b2"));
}

template <typename T>
Var VctModel<T>::self_block(Graph<T>& g, Var x, int64_t B, const std::string& p) {
  Var n1 = ln(g, x, p + ".ln1");
  Var h = o::add(g, x, mha(g, n1, n1, B, p + ".attn"));
  Var n2 = ln(g, h, p + ".ln2");
  return o::add(g, h, ffn(g, n2, p + ".ffn"));
}

template <typename T>
Var VctModel<T>::cross_block(Graph<T>& g, Var q_stream, Var kv_stream, int64_t B,
                             const std::string& p) {
  Var nq = ln(g, q_stream, p + ".lnq");
  Var nk = ln(g, kv_stream, p + ".lnkv");
  Var h = o::add(g, q_stream, mha(g, nq, nk, B, p + ".attn"));
  Var n2 = ln(g, h, p + ".ln2");
  return o::add(g, h, ffn(g, n2, p + ".ffn"));
}

template <typename T>
Var VctModel<T>::conv_stack(Graph<T>& g, Var x, int64_t B, const std::string& p,
                            const std::vector<ConvStage>& plan) {
  Var h = x;
  for (size_t i = 0; i < plan.size(); ++i) {
    const ConvStage& s = plan[i];
    const bool transposed = s.out_size > s.in_size;
    Var cols = o::gather_flat(g, h, im2col_map(B, s, transposed),
                              {B * s.out_size * s.out_size, 16 * s.cin});
    h = o::linear(g, cols, pv(g, p + std::to_string(i) + ".w"),
                  pv(g, p + std::to_string(i) + ".b"));
    if (s.gelu) h = o::gelu(g, h);
  }
  return h;
}

template <typename T>
Var VctModel<T>::tile_rows(Graph<T>& g, Var table, int64_t B, int64_t rows) {
  if (B == 1) return table;
  const int64_t cols = g.value(table).cols();
  return o::gather_flat(g, table, tile_map(B, rows, cols), {B * rows, cols});
}

// ---- image codec ----

template <typename T>
Var VctModel<T>::image_tokens(Graph<T>& g, Var images, int64_t B) {
  Var z;
  if (cfg_.codec == "patch") {
    const int64_t P = cfg_.patch_size * cfg_.patch_size * 3;
    Var patches = o::gather_flat(g, images, patch_map(B), {B * n_, P});
    z = o::linear(g, patches, pv(g, "it.proj.w"), pv(g, "it.proj.b"));
  } else {
    z = conv_stack(g, images, B, "it.conv", enc_plan_);
  }
  return o::add(g, z, tile_rows(g, pv(g, "it.pos"), B, n_));
}

template <typename T>
Var VctModel<T>::image_detokenize(Graph<T>& g, Var zhat, int64_t B) {
  if (cfg_.codec == "patch") {
    Var p = o::linear(g, zhat, pv(g, "id.proj.w"), pv(g, "id.proj.b"));
    return o::gather_flat(g, p, unpatch_map(B), {B, pixels()});
  }
  Var img = conv_stack(g, zhat, B, "id.conv", dec_plan_);
  return o::reshape(g, img, {B, pixels()});
}

template <typename T>
Var VctModel<T>::autoencode(Graph<T>& g, Var images, int64_t B) {
  if (cfg_.codec == "patch")
    throw std::logic_error("autoencode pretraining applies to conv codecs only");
  Var z = conv_stack(g, images, B, "it.conv", enc_plan_);
  return image_detokenize(g, z, B);
}

// ---- concept tokenizer ----

template <typename T>
Var VctModel<T>::tokenizer_stack(Graph<T>& g, Var concepts0, Var z, int64_t B) {
  if (probe_image_stream) probe_image_stream->clear();
  Var img = z;
  Var con = concepts0;
  for (int64_t l = 0; l < cfg_.enc_layers; ++l) {
    const std::string base = "ct.l" + std::to_string(l);
    img = self_block(g, img, B, base + ".img");
    con = cross_block(g, con, img, B, base + ".con");
    if (cfg_.concept_self_attention) {
      Var n = ln(g, con, base + ".con.sattn.ln");
      con = o::add(g, con, mha(g, n, n, B, base + ".con.sattn"));
    }
    if (probe_image_stream) probe_image_stream->push_back(g.value(img));
  }
  return con;
}

template <typename T>
Var VctModel<T>::concept_tokens(Graph<T>& g, Var z, int64_t B) {
  return concept_tokens_subset(g, z, B, 0, cfg_.concepts);
}

template <typename T>
Var VctModel<T>::concept_tokens_subset(Graph<T>& g, Var z, int64_t B, int64_t slot0,
                                       int64_t nslots) {
  if (slot0 < 0 || slot0 + nslots > cfg_.concepts)
    throw std::out_of_range("prototype slot range out of bounds");
  const int64_t D = cfg_.dim;
  Var con = o::gather_flat(g, pv(g, "prototypes"), tile_map(B, nslots, D, slot0),
                           {B * nslots, D});
  if (cfg_.concept_pos_embedding) {
    Var cp = o::gather_flat(g, pv(g, "ct.cpos"), tile_map(B, nslots, D, slot0),
                            {B * nslots, D});
    con = o::add(g, con, cp);
  }
  return tokenizer_stack(g, con, z, B);
}

template <typename T>
Var VctModel<T>::encode(Graph<T>& g, Var images, int64_t B) {
  return concept_tokens(g, image_tokens(g, images, B), B);
}

// ---- concept detokenizer ----

template <typename T>
Var VctModel<T>::decode_tokens(Graph<T>& g, Var c, int64_t B) {
  if (cfg_.cnn_detokenizer)
    throw std::logic_error("cnn detokenizer decodes straight to pixels");
  if (cfg_.transformer_detokenizer) {
    Var h = c;
    for (int64_t l = 0; l < cfg_.dec_layers; ++l)
      h = self_block(g, h, B, "dt.tr.l" + std::to_string(l));
    return o::matmul_shared_a(g, pv(g, "dt.tr.readout"), h, B);
  }
  Var x = tile_rows(g, pv(g, "queries"), B, n_);
  for (int64_t l = 0; l < cfg_.dec_layers; ++l) {
    const std::string base = "dt.l" + std::to_string(l);
    x = cross_block(g, x, c, B, base + ".x");
    x = self_block(g, x, B, base + ".s");
  }
  return x;
}

template <typename T>
Var VctModel<T>::decode_image(Graph<T>& g, Var c, int64_t B) {
  if (cfg_.cnn_detokenizer) {
    Var pool = o::matmul_shared_a(
        g, g.constant(Tensor<T>::full({1, cfg_.concepts}, T(1) / static_cast<T>(cfg_.concepts))),
        c, B);
    Var e = o::linear(g, pool, pv(g, "dt.cnn.expand.w"), pv(g, "dt.cnn.expand.b"));
    Var grid = o::reshape(g, e, {B * 16, cfg_.dim});
    Var img = conv_stack(g, grid, B, "dt.cnn.up", dec_plan_);
    return o::reshape(g, img, {B, pixels()});
  }
  return image_detokenize(g, decode_tokens(g, c, B), B);
}

template <typename T>
Var VctModel<T>::reconstruct(Graph<T>& g, Var images, int64_t B) {
  return decode_image(g, encode(g, images, B), B);
}

// ---- conveniences ----

template <typename T>
Tensor<T> VctModel<T>::encode_tensor(const Tensor<T>& images, int64_t B) {
  Graph<T> g(false);
  bind(g);
  return g.value(encode(g, g.constant(images), B));
}

template <typename T>
Tensor<T> VctModel<T>::decode_tensor(const Tensor<T>& c, int64_t B) {
  Graph<T> g(false);
  bind(g);
  return g.value(decode_image(g, g.constant(c), B));
}

template <typename T>
Tensor<T> VctModel<T>::reconstruct_tensor(const Tensor<T>& images, int64_t B) {
  Graph<T> g(false);
  bind(g);
  return g.value(reconstruct(g, g.constant(images), B));
}

// ---- scoping ----

template <typename T>
std::vector<std::string> VctModel<T>::dis_scope() const {
  std::vector<std::string> scope{"ct."};
  if (cfg_.dis_update_prototypes) scope.push_back("prototypes");
  if (cfg_.dis_update_image_tokenizer) scope.push_back("it.");
  return scope;
}

template <typename T>
std::vector<std::string> VctModel<T>::frozen_prefixes() const {
  if (cfg_.codec == "pretrained-conv-ae" && cfg_.ae_freeze) return {"it.conv", "id.conv"};
  return {};
}

template class VctModel<float>;
template class VctModel<double>;

}  // namespace vct
