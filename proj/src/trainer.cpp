#include "vct/trainer.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "vct/checkpoint.hpp"
#include "vct/ops.hpp"

namespace vct {

namespace {

ExperimentConfig checked(const ExperimentConfig& cfg) {
  validate_config(cfg);
  return cfg;
}

bool frozen_codec(const ExperimentConfig& cfg) {
  return cfg.codec == "pretrained-conv-ae" && cfg.ae_freeze;
}

}  // namespace

Trainer::Trainer(const ExperimentConfig& cfg)
    : cfg_(checked(cfg)),
      model_(std::make_unique<VctModel<float>>(
          cfg_, mix_seed(static_cast<uint64_t>(cfg_.seed), "params"))),
      opt_(model_->params(), AdamConfig<float>{static_cast<float>(cfg_.lr), 0.9f, 0.999f,
                                               1e-8f}) {
  uint64_t data_seed = mix_seed(static_cast<uint64_t>(cfg_.seed), "data");
  if (cfg_.dataset == "minishapes") {
    shapes_ = std::make_unique<ShapesStream>(data_seed, cfg_.image_size);
  } else {
    scenes_ = std::make_unique<SceneStream>(data_seed, cfg_.image_size, cfg_.scene_min_objects,
                                            cfg_.scene_max_objects);
  }
}

void Trainer::fill_batch(int64_t step_index, Tensor<float>& images) {
  if (shapes_)
    shapes_->batch(step_index, cfg_.batch, images);
  else
    scenes_->batch(step_index, cfg_.batch, images);
}

void Trainer::pretrain_codec() {
  if (cfg_.codec != "pretrained-conv-ae") return;
  Adam<float> pre(model_->params(),
                  AdamConfig<float>{static_cast<float>(cfg_.lr), 0.9f, 0.999f, 1e-8f});
  uint64_t ae_seed = mix_seed(static_cast<uint64_t>(cfg_.seed), "ae");
  std::unique_ptr<ShapesStream> ae_shapes;
  std::unique_ptr<SceneStream> ae_scenes;
  if (cfg_.dataset == "minishapes")
    ae_shapes = std::make_unique<ShapesStream>(ae_seed, cfg_.image_size);
  else
    ae_scenes = std::make_unique<SceneStream>(ae_seed, cfg_.image_size, cfg_.scene_min_objects,
                                              cfg_.scene_max_objects);
  Tensor<float> images = Tensor<float>::zeros({cfg_.batch, model_->pixels()});
  for (int64_t s = 0; s < cfg_.ae_pretrain_steps; ++s) {
    if (ae_shapes)
      ae_shapes->batch(s, cfg_.batch, images);
    else
      ae_scenes->batch(s, cfg_.batch, images);
    Graph<float> g(true);
    model_->bind(g);
    Var x = g.constant(images);
    Var loss = ops::mse(g, model_->autoencode(g, x, cfg_.batch), x);
    double v = static_cast<double>(g.value(loss)[0]);
    if (!std::isfinite(v))
      throw std::runtime_error("codec pretraining: non-finite loss at step " +
                               std::to_string(s));
    g.backward(loss);
    pre.step(model_->params(),
             cosine_lr(static_cast<float>(cfg_.lr), s, cfg_.ae_pretrain_steps));
  }
}

StepStats Trainer::train_step() {
  Tensor<float> images = Tensor<float>::zeros({cfg_.batch, model_->pixels()});
  fill_batch(step_, images);
  Rng srng(mix_seed(static_cast<uint64_t>(cfg_.seed), "swap", static_cast<uint64_t>(step_)));
  SwapPlan plan = draw_swap_plan(srng, cfg_.batch, cfg_.concepts);

  Graph<float> g(true);
  model_->bind(g);
  LossNodes<float> nodes = build_losses(*model_, g, images, cfg_.batch, plan);
  if (!std::isfinite(nodes.total_value) || !std::isfinite(nodes.rec_value) ||
      !std::isfinite(nodes.dis_value))
    throw std::runtime_error("training: non-finite loss at step " + std::to_string(step_));
  backward_losses(*model_, g, nodes);
  if (frozen_codec(cfg_))
    for (Parameter<float>& p : model_->params())
      if (ParameterStore<float>::name_has_prefix(p.name, model_->frozen_prefixes()))
        p.grad.fill(0.0f);

  double lr = cosine_lr(static_cast<double>(cfg_.lr), step_, cfg_.steps);
  opt_.step(model_->params(), static_cast<float>(lr));

  StepStats st;
  st.step = step_;
  st.rec = nodes.rec_value;
  st.dis = nodes.dis_value;
  st.swap_acc = nodes.swap_accuracy;
  st.lr = lr;
  ++step_;
  return st;
}

StepStats Trainer::eval_step(int64_t step_index) {
  Tensor<float> images = Tensor<float>::zeros({cfg_.batch, model_->pixels()});
  fill_batch(step_index, images);
  Rng srng(
      mix_seed(static_cast<uint64_t>(cfg_.seed), "swap", static_cast<uint64_t>(step_index)));
  SwapPlan plan = draw_swap_plan(srng, cfg_.batch, cfg_.concepts);
  Graph<float> g(false);
  model_->bind(g);
  LossNodes<float> nodes = build_losses(*model_, g, images, cfg_.batch, plan);
  StepStats st;
  st.step = step_index;
  st.rec = nodes.rec_value;
  st.dis = nodes.dis_value;
  st.swap_acc = nodes.swap_accuracy;
  st.lr = 0;
  return st;
}

TrainingRun run_training(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& resume_path,
                         const std::function<void(const StepStats&)>& on_log) {
  std::filesystem::create_directories(out_dir);
  Trainer tr(cfg);
  std::string prefix =
      out_dir + "/" + hex64(config_hash(cfg)) + "-" + std::to_string(cfg.seed);
  auto ckpt_path = [&](int64_t s) { return prefix + "-ckpt-" + std::to_string(s) + ".bin"; };

  TrainingRun run;
  run.log_path = prefix + "-train.csv";

  bool resumed = !resume_path.empty();
  if (resumed) {
    CheckpointInfo info =
        load_checkpoint(resume_path, cfg, tr.params(), tr.optimizer(), false);
    tr.set_step(info.step);
    run.checkpoint_path = resume_path;
  } else {
    tr.pretrain_codec();
    save_checkpoint(ckpt_path(0), cfg, tr.params(), tr.optimizer(), 0);
    run.checkpoint_path = ckpt_path(0);
  }

  bool append = resumed && std::filesystem::exists(run.log_path);
  std::ofstream log(run.log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("training: cannot write " + run.log_path);
  if (!append) log << "step,rec,dis,swap_acc,lr\n";

  char row[256];
  while (tr.step() < cfg.steps) {
    StepStats st;
    try {
      st = tr.train_step();
    } catch (const std::runtime_error& e) {
      run.aborted = true;
      run.abort_reason = e.what();
      break;
    }
    int64_t completed = tr.step();
    if (st.step % cfg.log_every == 0 || completed == cfg.steps) {
      std::snprintf(row, sizeof(row), "%" PRId64 ",%.17g,%.17g,%.17g,%.17g\n", st.step, st.rec,
                    st.dis, st.swap_acc, st.lr);
      log << row;
      log.flush();
      if (on_log) on_log(st);
    }
    if (completed % cfg.ckpt_every == 0 || completed == cfg.steps) {
      save_checkpoint(ckpt_path(completed), cfg, tr.params(), tr.optimizer(), completed);
      run.checkpoint_path = ckpt_path(completed);
    }
  }
  run.steps_done = tr.step();
  return run;
}

}  // namespace vct
