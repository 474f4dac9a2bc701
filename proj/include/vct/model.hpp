#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vct/config.hpp"
#include "vct/graph.hpp"
#include "vct/ops.hpp"
#include "vct/params.hpp"

namespace vct {

using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

// One stage of a strided convolution stack (built from gather + matmul).
struct ConvStage {
  int64_t in_size = 0;   // input spatial side
  int64_t out_size = 0;  // output spatial side
  int64_t cin = 0;
  int64_t cout = 0;
  bool gelu = true;
};

// Encoder/decoder stage plans for an image side (conv codec bottlenecks at
// a 4x4 grid regardless of input size).
std::vector<ConvStage> conv_encoder_plan(int64_t image_size, int64_t dim);
std::vector<ConvStage> conv_decoder_plan(int64_t image_size, int64_t dim);

// The concept tokenization model: image codec, concept tokenizer with shared
// prototypes, concept detokenizer with shared image queries. All builders
// operate on whole batches laid out as stacked row blocks ({B*rows, D}).
// Images are {B, H*W*3} row-major HWC with values in [0,1].
template <typename T>
class VctModel {
 public:
  VctModel(ExperimentConfig cfg, uint64_t param_seed);

  const ExperimentConfig& config() const { return cfg_; }
  ParameterStore<T>& params() { return store_; }
  const ParameterStore<T>& params() const { return store_; }

  int64_t n_tokens() const { return n_; }
  int64_t concepts() const { return cfg_.concepts; }
  int64_t dim() const { return cfg_.dim; }
  int64_t pixels() const { return cfg_.image_size * cfg_.image_size * 3; }

  // Every graph builder needs the model's parameters registered as leaves of
  // the target graph first. Rebinding to a new graph invalidates the old one.
  void bind(Graph<T>& g);

  // image tokenizer: pixels -> N image tokens (positional embedding added)
  Var image_tokens(Graph<T>& g, Var images, int64_t B);
  // concept tokenizer over the full prototype set -> {B*M, D}
  Var concept_tokens(Graph<T>& g, Var z, int64_t B);
  // same stack run with a contiguous subset of prototype rows
  Var concept_tokens_subset(Graph<T>& g, Var z, int64_t B, int64_t slot0, int64_t nslots);
  Var encode(Graph<T>& g, Var images, int64_t B);
  // concept detokenizer: {B*M, D} -> reconstructed image tokens {B*N, D}
  Var decode_tokens(Graph<T>& g, Var c, int64_t B);
  // full decode to pixels {B, H*W*3} (unclamped)
  Var decode_image(Graph<T>& g, Var c, int64_t B);
  Var reconstruct(Graph<T>& g, Var images, int64_t B);

  // conv codec pretraining path: encode -> decode without the transformers
  Var autoencode(Graph<T>& g, Var images, int64_t B);

  // one-shot conveniences on fresh no-grad graphs
  Tensor<T> encode_tensor(const Tensor<T>& images, int64_t B);
  Tensor<T> decode_tensor(const Tensor<T>& c, int64_t B);
  Tensor<T> reconstruct_tensor(const Tensor<T>& images, int64_t B);

  // parameter-name prefixes the disentangling loss updates
  std::vector<std::string> dis_scope() const;
  // prefixes frozen after conv-codec pretraining (empty otherwise)
  std::vector<std::string> frozen_prefixes() const;

  // when set, concept_tokens records each layer's image-branch output
  std::vector<Tensor<T>>* probe_image_stream = nullptr;

 private:
  // registration (constructor only)
  void reg_ln(const std::string& p, int64_t width);
  void reg_attn(Rng& rng, const std::string& p);
  void reg_ffn(Rng& rng, const std::string& p);
  void reg_self_block(Rng& rng, const std::string& p);
  void reg_cross_block(Rng& rng, const std::string& p);
  void reg_conv_stack(Rng& rng, const std::string& p, const std::vector<ConvStage>& plan);

  // builders
  Var pv(Graph<T>& g, const std::string& name);
  Var ln(Graph<T>& g, Var x, const std::string& p);
  Var mha(Graph<T>& g, Var q_in, Var kv_in, int64_t B, const std::string& p);
  Var ffn(Graph<T>& g, Var x, const std::string& p);
  Var self_block(Graph<T>& g, Var x, int64_t B, const std::string& p);
  Var cross_block(Graph<T>& g, Var q_stream, Var kv_stream, int64_t B, const std::string& p);
  Var conv_stack(Graph<T>& g, Var x, int64_t B, const std::string& p,
                 const std::vector<ConvStage>& plan);
  Var tokenizer_stack(Graph<T>& g, Var concepts0, Var z, int64_t B);
  Var image_detokenize(Graph<T>& g, Var zhat, int64_t B);

  Var tile_rows(Graph<T>& g, Var table, int64_t B, int64_t rows);

  IndexMap patch_map(int64_t B);
  IndexMap unpatch_map(int64_t B);
  IndexMap tile_map(int64_t B, int64_t rows, int64_t cols, int64_t row0 = 0);
  IndexMap im2col_map(int64_t B, const ConvStage& s, bool transposed);

  ExperimentConfig cfg_;
  int64_t n_ = 0;
  ParameterStore<T> store_;
  std::vector<ConvStage> enc_plan_, dec_plan_;

  Graph<T>* bound_ = nullptr;
  std::vector<Var> pvars_;

  std::map<std::string, IndexMap> map_cache_;
};

extern template class VctModel<float>;
extern template class VctModel<double>;

}  // namespace vct
