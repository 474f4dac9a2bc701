#pragma once

#include "vct/gradcheck.hpp"
#include "vct/losses.hpp"
#include "vct/model.hpp"

namespace vct {

// Finite-difference audit of a whole model, always in 64-bit mode.
struct ModelGradChecks {
  GradCheckReport<double> rec;          // reconstruction path, every parameter
  GradCheckReport<double> dis_scoped;   // disentangling path, scoped parameters
  GradCheckReport<double> dis_nodetach; // disentangling path with detach off
  // default mode: decoder gradients vanish before any masking, and after
  // scoping nothing outside the concept tokenizer / prototypes is touched
  bool decoder_zero_before_mask = false;
  bool outside_zero_after_mask = false;
  // detach off: the swap loss reaches the detokenizer
  bool nodetach_decoder_nonzero = false;

  double max_rel_err() const;
  bool passed(double tol) const;
};

// Runs the audit for the given architecture settings (detach flags in cfg are
// ignored; both settings are always exercised).
ModelGradChecks run_model_gradchecks(ExperimentConfig cfg, uint64_t seed, int probes_per_param);

// The D=8 / N=4 / M=3 instance the gradcheck command uses.
ExperimentConfig gradcheck_default_config();

}  // namespace vct
