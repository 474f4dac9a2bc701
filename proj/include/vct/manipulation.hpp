#pragma once

#include <cstdint>
#include <vector>

#include "vct/model.hpp"
#include "vct/tensor.hpp"

namespace vct {

// Per-slot token statistics over an evaluation set: the mean token r̄_k and an
// RMS deviation from it (the activity; 0 means the slot never moves).
struct SlotProfile {
  int64_t slots = 0, dim = 0, images = 0;
  Tensor<float> mean;            // {M, D}
  std::vector<double> activity;  // {M}, >= 0

  bool fitted() const { return images > 0; }
};

class SlotProfileAccumulator {
 public:
  SlotProfileAccumulator(int64_t slots, int64_t dim);
  // tokens: {B*M, D} stacked per image
  void add_batch(const Tensor<float>& tokens, int64_t batch);
  // throws if fewer than min_images were accumulated
  SlotProfile finalize(int64_t min_images = 1000) const;
  int64_t images() const { return n_; }

 private:
  int64_t slots_, dim_, n_ = 0;
  Tensor<double> sum_;     // {M, D}
  Tensor<double> sum_sq_;  // {M, D}
};

// Decode token set `ca` with the listed slot rows replaced by `cb`'s rows.
// Both are {M, D} single-image token sets from the same model.
Tensor<float> swap_and_decode(VctModel<float>& model, const Tensor<float>& ca,
                              const Tensor<float>& cb, const std::vector<int64_t>& slots);

// Compose one token set by picking row m from sources[assignment[m]] and
// decode it in a single pass. assignment must cover every slot.
Tensor<float> recombine(VctModel<float>& model, const std::vector<Tensor<float>>& sources,
                        const std::vector<int64_t>& assignment);

// Decode the linear path that moves row `slot` of c toward target_row.
// steps >= 2; endpoints reproduce the unmodified and fully-replaced decodes.
std::vector<Tensor<float>> interpolate_slot(VctModel<float>& model, const Tensor<float>& c,
                                            int64_t slot, const Tensor<float>& target_row,
                                            int64_t steps);

struct MaskExtraction {
  std::vector<Tensor<float>> saliency;     // per slot {S, S}
  std::vector<int> assignment;             // {S*S}: slot index, or -1 = background
  std::vector<std::vector<uint8_t>> masks; // per slot {S*S} binary
  double threshold_used = 0;
  bool otsu_fallback = false;  // threshold came from Otsu, not tau
};

// Ablation saliency: per slot k, decode with row k replaced by the profile
// mean and sum absolute channel differences per pixel. A pixel is assigned to
// the strongest slot if that saliency exceeds tau, else to the background.
// If tau leaves no background at all, the threshold falls back to Otsu's
// method on the per-pixel maxima (reported via otsu_fallback).
MaskExtraction extract_masks(VctModel<float>& model, const Tensor<float>& image,
                             const SlotProfile& profile, double tau = 0.05);

}  // namespace vct
