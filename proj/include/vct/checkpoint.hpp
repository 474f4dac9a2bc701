#pragma once

#include <cstdint>
#include <string>

#include "vct/config.hpp"
#include "vct/params.hpp"

namespace vct {

// Binary checkpoint: magic "VCT1", version, config hash, the canonical config
// text, step counter, the named parameter table as raw little-endian 32-bit
// floats, and Adam state. The rng field stays empty because every random draw
// in training is derived from (seed, purpose, counter), never from evolving
// generator state. Saving the result of a load reproduces the file byte for
// byte.
struct CheckpointInfo {
  uint32_t version = 1;
  uint64_t config_hash = 0;
  std::string config_text;
  int64_t step = 0;
  std::string rng_state;
};

void save_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                     const ParameterStore<float>& store, const Adam<float>& opt, int64_t step);

// Restores parameter values and optimizer state in place; the store and
// optimizer must belong to a model built from the same architecture. Rejects
// a config-hash mismatch against `expect` unless force is set; shape or name
// mismatches always throw.
CheckpointInfo load_checkpoint(const std::string& path, const ExperimentConfig& expect,
                               ParameterStore<float>& store, Adam<float>& opt,
                               bool force = false);

// Header fields only; no model needed.
CheckpointInfo read_checkpoint_info(const std::string& path);

}  // namespace vct
