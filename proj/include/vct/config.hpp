#pragma once

#include <cstdint>
#include <string>

namespace vct {

// Everything that identifies an experiment. Serialized as a flat key=value
// text file; the FNV-1a hash of the canonical serialization is embedded in
// checkpoints and output filenames.
struct ExperimentConfig {
  // data
  std::string dataset = "minishapes";  // minishapes | miniscene
  int64_t image_size = 64;
  int64_t scene_min_objects = 1;
  int64_t scene_max_objects = 3;

  // image codec
  std::string codec = "patch";  // patch | conv-ae | pretrained-conv-ae
  int64_t patch_size = 8;

  // transformer
  int64_t dim = 256;
  int64_t heads = 4;
  int64_t enc_layers = 4;
  int64_t dec_layers = 4;
  int64_t concepts = 20;
  double init_std = 0.02;

  // ablation switches
  bool concept_self_attention = false;
  bool concept_pos_embedding = false;
  bool cnn_detokenizer = false;
  bool transformer_detokenizer = false;
  bool no_dis_loss = false;
  bool no_detach = false;
  bool dis_update_prototypes = true;
  bool dis_update_image_tokenizer = false;

  // training
  int64_t batch = 32;
  int64_t steps = 50000;
  double lr = 3e-4;
  double dis_weight = 1.0;
  int64_t seed = 0;
  int64_t log_every = 100;
  int64_t ckpt_every = 5000;

  // conv codec pretraining (codec = pretrained-conv-ae)
  int64_t ae_pretrain_steps = 3000;
  bool ae_freeze = true;
};

// Visits every config field as (key, reference); the single source of truth
// for parsing, serialization and hashing.
template <typename C, typename F>
void for_each_config_field(C& c, F&& f) {
  f("dataset", c.dataset);
  f("image_size", c.image_size);
  f("scene_min_objects", c.scene_min_objects);
  f("scene_max_objects", c.scene_max_objects);
  f("codec", c.codec);
  f("patch_size", c.patch_size);
  f("dim", c.dim);
  f("heads", c.heads);
  f("enc_layers", c.enc_layers);
  f("dec_layers", c.dec_layers);
  f("concepts", c.concepts);
  f("init_std", c.init_std);
  f("concept_self_attention", c.concept_self_attention);
  f("concept_pos_embedding", c.concept_pos_embedding);
  f("cnn_detokenizer", c.cnn_detokenizer);
  f("transformer_detokenizer", c.transformer_detokenizer);
  f("no_dis_loss", c.no_dis_loss);
  f("no_detach", c.no_detach);
  f("dis_update_prototypes", c.dis_update_prototypes);
  f("dis_update_image_tokenizer", c.dis_update_image_tokenizer);
  f("batch", c.batch);
  f("steps", c.steps);
  f("lr", c.lr);
  f("dis_weight", c.dis_weight);
  f("seed", c.seed);
  f("log_every", c.log_every);
  f("ckpt_every", c.ckpt_every);
  f("ae_pretrain_steps", c.ae_pretrain_steps);
  f("ae_freeze", c.ae_freeze);
}

// Parse key=value text ('#' comments, blank lines allowed). Unknown or
// duplicate keys and malformed values throw.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical serialization: sorted keys, one key=value per line.
std::string canonical_config(const ExperimentConfig& c);
uint64_t config_hash(const ExperimentConfig& c);

// Throws on inconsistent settings (both ablation decoders, indivisible image
// size, unknown dataset/codec, ...).
void validate_config(const ExperimentConfig& c);

// Image token count N for this config.
int64_t token_count(const ExperimentConfig& c);

}  // namespace vct
