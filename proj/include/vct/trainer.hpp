#pragma once

#include <functional>
#include <memory>
#include <string>

#include "vct/datasets.hpp"
#include "vct/losses.hpp"
#include "vct/model.hpp"

namespace vct {

struct StepStats {
  int64_t step = 0;
  double rec = 0, dis = 0, swap_acc = 0, lr = 0;
};

// Owns the model and optimizer and advances fully deterministic training:
// the batch at step s comes from the seeded dataset stream addressed by s,
// and the swap plan from a generator seeded with (seed, "swap", s). Nothing
// depends on call history, so any step is reproducible from scratch and
// resuming from a checkpoint is bit-exact.
class Trainer {
 public:
  explicit Trainer(const ExperimentConfig& cfg);

  VctModel<float>& model() { return *model_; }
  const ExperimentConfig& config() const { return cfg_; }
  ParameterStore<float>& params() { return model_->params(); }
  Adam<float>& optimizer() { return opt_; }
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

  // Conv-codec warmup on the plain autoencoding path (its own Adam and its
  // own data stream); no-op unless the codec is the pretrained one.
  void pretrain_codec();

  // One optimization step at the current counter. Throws std::runtime_error
  // on a non-finite loss or gradient.
  StepStats train_step();

  // Loss values for the batch/plan addressed by an arbitrary step counter,
  // without touching parameters; used for held-out reporting.
  StepStats eval_step(int64_t step_index);

 private:
  void fill_batch(int64_t step_index, Tensor<float>& images);

  ExperimentConfig cfg_;
  std::unique_ptr<VctModel<float>> model_;
  Adam<float> opt_;
  int64_t step_ = 0;
  std::unique_ptr<ShapesStream> shapes_;
  std::unique_ptr<SceneStream> scenes_;
};

struct TrainingRun {
  std::string checkpoint_path;  // latest successfully written checkpoint
  std::string log_path;
  int64_t steps_done = 0;
  bool aborted = false;
  std::string abort_reason;
};

// End-to-end driver: optional checkpoint resume, periodic + final
// checkpoints, and a CSV log (step,rec,dis,swap_acc,lr). Artifacts are named
// {config-hash}-{seed}-…; a (config, seed) replay reproduces the log byte for
// byte. On a non-finite abort the last good checkpoint is kept.
TrainingRun run_training(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& resume_path = "",
                         const std::function<void(const StepStats&)>& on_log = nullptr);

}  // namespace vct
