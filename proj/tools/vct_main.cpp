// vct: experiment runner for the concept-token framework.
//
// Verbs: train, eval, decompose, swap, interp, gradcheck, render-dataset.
// Exit codes: 0 success, 1 usage error, 2 numeric failure.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vct/checkpoint.hpp"
#include "vct/datasets.hpp"
#include "vct/evaluation.hpp"
#include "vct/image_io.hpp"
#include "vct/model_gradcheck.hpp"
#include "vct/trainer.hpp"

namespace fs = std::filesystem;
using namespace vct;

namespace {

constexpr int kOk = 0, kUsage = 1, kNumeric = 2;

std::string artifact_prefix(const ExperimentConfig& cfg) {
  return hex64(config_hash(cfg)) + "-" + std::to_string(cfg.seed);
}

// A checkpoint file carries its own config text, so a trainer can be rebuilt
// from the file alone.
struct LoadedRun {
  ExperimentConfig cfg;
  std::unique_ptr<Trainer> trainer;
};

LoadedRun load_run(const std::string& checkpoint) {
  CheckpointInfo info = read_checkpoint_info(checkpoint);
  LoadedRun run;
  run.cfg = parse_config(info.config_text);
  validate_config(run.cfg);
  run.trainer = std::make_unique<Trainer>(run.cfg);
  load_checkpoint(checkpoint, run.cfg, run.trainer->params(), run.trainer->optimizer());
  run.trainer->set_step(info.step);
  return run;
}

// Deterministic input image for swap/interp: a factor-product row for the
// shapes dataset, or the evaluation scene stream for scenes.
Tensor<float> render_input(const ExperimentConfig& cfg, int64_t index) {
  if (cfg.dataset == "minishapes") {
    FactorSpec spec = minishapes_factors();
    if (index < 0 || index >= spec.count())
      throw std::invalid_argument("image index " + std::to_string(index) +
                                  " outside the factor product [0, " +
                                  std::to_string(spec.count()) + ")");
    return render_label_batch({spec.labels_at(index)}, cfg.image_size);
  }
  if (index < 0) throw std::invalid_argument("image index must be >= 0");
  uint64_t base = mix_seed(config_hash(cfg), "eval", static_cast<uint64_t>(cfg.seed));
  SceneStream stream(mix_seed(base, "scene-eval"), cfg.image_size, cfg.scene_min_objects,
                     cfg.scene_max_objects);
  SceneRender scene = stream.render_at(index);
  return scene.image.reshaped({1, cfg.image_size * cfg.image_size * 3});
}

// Writes an integer label map (-1 or 0 = background) as an 8-bit raster with
// evenly spaced gray levels.
void write_label_map(const std::string& path, const std::vector<int>& labels, int64_t size,
                     int max_label) {
  Tensor<float> img = Tensor<float>::zeros({size * size});
  float denom = static_cast<float>(max_label + 1);
  for (int64_t p = 0; p < size * size; ++p)
    img[p] = labels[static_cast<size_t>(p)] < 0
                 ? 0.0f
                 : static_cast<float>(labels[static_cast<size_t>(p)] + 1) / denom;
  write_pgm(path, img, size);
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume, bool quiet) {
  ExperimentConfig cfg = load_config(config_path);
  validate_config(cfg);
  auto on_log = [&](const StepStats& st) {
    if (quiet) return;
    std::printf("step %" PRId64 "  rec %.6g  dis %.6g  swap_acc %.4f  lr %.3g\n", st.step, st.rec,
                st.dis, st.swap_acc, st.lr);
    std::fflush(stdout);
  };
  TrainingRun run = run_training(cfg, out_dir, resume, on_log);
  if (run.aborted) {
    std::fprintf(stderr, "training aborted: %s\nlast checkpoint: %s\n", run.abort_reason.c_str(),
                 run.checkpoint_path.c_str());
    return kNumeric;
  }
  std::printf("done: %" PRId64 " steps\ncheckpoint: %s\nlog: %s\n", run.steps_done,
              run.checkpoint_path.c_str(), run.log_path.c_str());
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& out_dir,
             const std::string& dataset, const std::string& pca, int64_t batch,
             int64_t swap_batches) {
  LoadedRun run = load_run(checkpoint);
  if (!dataset.empty() && dataset != run.cfg.dataset)
    throw std::invalid_argument("checkpoint was trained on dataset '" + run.cfg.dataset +
                                "', not '" + dataset + "'");
  if (run.cfg.dataset != "minishapes")
    throw std::invalid_argument(
        "disentanglement evaluation needs the factor-labelled dataset (minishapes); use "
        "`decompose` for scenes");
  EvalOptions opt;
  opt.pca = pca;
  opt.batch = batch;
  opt.swap_batches = swap_batches;
  DisentanglementReport rep = evaluate_disentanglement(*run.trainer, opt);

  ReportRows rows = report_rows(rep);
  fs::create_directories(out_dir);
  std::string prefix = (fs::path(out_dir) / artifact_prefix(run.cfg)).string();
  write_report_text(prefix + "-eval.txt", rows);
  write_report_csv(prefix + "-eval.csv", rows, run.cfg.seed, config_hash(run.cfg));
  for (const auto& [name, value] : rows) std::printf("%s = %.17g\n", name.c_str(), value);
  std::printf("report: %s-eval.txt\n", prefix.c_str());
  return kOk;
}

int cmd_decompose(const std::string& checkpoint, const std::string& out_dir, int64_t scenes,
                  int64_t profile_images, double tau, int64_t overlays) {
  LoadedRun run = load_run(checkpoint);
  if (run.cfg.dataset != "miniscene")
    throw std::invalid_argument("decompose needs a miniscene checkpoint, got dataset '" +
                                run.cfg.dataset + "'");
  SceneEvalOptions opt;
  opt.scenes = scenes;
  opt.profile_images = profile_images;
  opt.tau = tau;
  SceneReport rep = evaluate_scene(run.trainer->model(), opt);

  ReportRows rows = report_rows(rep);
  fs::create_directories(out_dir);
  std::string prefix = (fs::path(out_dir) / artifact_prefix(run.cfg)).string();
  write_report_text(prefix + "-decompose.txt", rows);
  write_report_csv(prefix + "-decompose.csv", rows, run.cfg.seed, config_hash(run.cfg));

  // overlays: input image, predicted assignment map, ground-truth instances
  if (overlays > 0) {
    VctModel<float>& model = run.trainer->model();
    const ExperimentConfig& cfg = run.cfg;
    uint64_t base = mix_seed(config_hash(cfg), "eval", static_cast<uint64_t>(cfg.seed));
    SceneStream profile_stream(mix_seed(base, "scene-profile"), cfg.image_size,
                               cfg.scene_min_objects, cfg.scene_max_objects);
    SlotProfileAccumulator acc(model.concepts(), model.dim());
    Tensor<float> images = Tensor<float>::zeros({32, model.pixels()});
    int64_t step = 0;
    while (acc.images() < profile_images) {
      profile_stream.batch(step++, 32, images);
      acc.add_batch(model.encode_tensor(images, 32), 32);
    }
    SlotProfile profile = acc.finalize(std::min<int64_t>(profile_images, 1000));
    SceneStream eval_stream(mix_seed(base, "scene-eval"), cfg.image_size, cfg.scene_min_objects,
                            cfg.scene_max_objects);
    for (int64_t i = 0; i < std::min(overlays, scenes); ++i) {
      SceneRender scene = eval_stream.render_at(i);
      MaskExtraction ext = extract_masks(model, scene.image, profile, tau);
      std::string stem = prefix + "-decompose-" + std::to_string(i);
      write_ppm(stem + "-image.ppm", scene.image, cfg.image_size);
      write_label_map(stem + "-pred.pgm", ext.assignment, cfg.image_size,
                      static_cast<int>(model.concepts()));
      write_label_map(stem + "-gt.pgm", scene.instance, cfg.image_size,
                      static_cast<int>(cfg.scene_max_objects));
    }
  }
  for (const auto& [name, value] : rows) std::printf("%s = %.17g\n", name.c_str(), value);
  std::printf("report: %s-decompose.txt\n", prefix.c_str());
  return kOk;
}

int cmd_swap(const std::string& checkpoint, const std::string& out_dir,
             const std::vector<std::string>& pairs, std::vector<int64_t> slots) {
  LoadedRun run = load_run(checkpoint);
  VctModel<float>& model = run.trainer->model();
  if (slots.empty())
    for (int64_t l = 0; l < model.concepts(); ++l) slots.push_back(l);

  std::vector<std::pair<int64_t, int64_t>> parsed;
  for (const std::string& p : pairs) {
    size_t colon = p.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("pair '" + p + "' must look like I:J");
    parsed.emplace_back(std::stoll(p.substr(0, colon)), std::stoll(p.substr(colon + 1)));
  }

  fs::create_directories(out_dir);
  std::string prefix = (fs::path(out_dir) / artifact_prefix(run.cfg)).string();
  const int64_t size = run.cfg.image_size;
  std::vector<Tensor<float>> tiles;  // grid: one row per slot, one column per pair
  for (int64_t l : slots) {
    for (const auto& [i, j] : parsed) {
      Tensor<float> xa = render_input(run.cfg, i), xb = render_input(run.cfg, j);
      Tensor<float> ca = model.encode_tensor(xa, 1), cb = model.encode_tensor(xb, 1);
      Tensor<float> edited = swap_and_decode(model, ca, cb, {l});
      std::string name = prefix + "-swap-" + std::to_string(i) + "-" + std::to_string(j) + "-" +
                         std::to_string(l) + ".ppm";
      write_ppm(name, edited, size);
      tiles.push_back(edited);
    }
  }
  Tensor<float> grid = image_grid(tiles, static_cast<int64_t>(slots.size()),
                                  static_cast<int64_t>(parsed.size()), size);
  std::string grid_path = prefix + "-swap-grid.ppm";
  int64_t h = static_cast<int64_t>(slots.size()) * (size + 2) + 2;
  int64_t w = static_cast<int64_t>(parsed.size()) * (size + 2) + 2;
  write_ppm_rect(grid_path, grid, w, h);
  std::printf("wrote %zu swap images and %s\n", tiles.size(), grid_path.c_str());
  return kOk;
}

int cmd_interp(const std::string& checkpoint, const std::string& out_dir, int64_t i, int64_t j,
               int64_t slot, int64_t steps) {
  LoadedRun run = load_run(checkpoint);
  VctModel<float>& model = run.trainer->model();
  Tensor<float> xa = render_input(run.cfg, i), xb = render_input(run.cfg, j);
  Tensor<float> ca = model.encode_tensor(xa, 1), cb = model.encode_tensor(xb, 1);
  Tensor<float> target = Tensor<float>::zeros({1, model.dim()});
  for (int64_t d = 0; d < model.dim(); ++d) target[d] = cb.at(slot, d);
  std::vector<Tensor<float>> frames = interpolate_slot(model, ca, slot, target, steps);

  fs::create_directories(out_dir);
  std::string prefix = (fs::path(out_dir) / artifact_prefix(run.cfg)).string();
  const int64_t size = run.cfg.image_size;
  Tensor<float> strip = image_grid(frames, 1, steps, size);
  std::string path = prefix + "-interp-" + std::to_string(i) + "-" + std::to_string(j) + "-" +
                     std::to_string(slot) + ".ppm";
  write_ppm_rect(path, strip, steps * (size + 2) + 2, size + 4);
  std::printf("wrote %s (%" PRId64 " frames)\n", path.c_str(), steps);
  return kOk;
}

int cmd_gradcheck(const std::string& config_path, uint64_t seed, int probes, double tol) {
  ExperimentConfig cfg =
      config_path.empty() ? gradcheck_default_config() : load_config(config_path);
  validate_config(cfg);
  ModelGradChecks checks = run_model_gradchecks(cfg, seed, probes);
  std::printf("reconstruction path:   max rel err %.3g  (worst %s)\n", checks.rec.max_rel_err,
              checks.rec.worst_param.c_str());
  std::printf("disentangling scoped:  max rel err %.3g  (worst %s)\n",
              checks.dis_scoped.max_rel_err, checks.dis_scoped.worst_param.c_str());
  std::printf("disentangling nodetach: max rel err %.3g  (worst %s)\n",
              checks.dis_nodetach.max_rel_err, checks.dis_nodetach.worst_param.c_str());
  std::printf("decoder grads zero before scoping: %s\n",
              checks.decoder_zero_before_mask ? "yes" : "no");
  std::printf("outside-scope grads zero after scoping: %s\n",
              checks.outside_zero_after_mask ? "yes" : "no");
  std::printf("nodetach reaches the detokenizer: %s\n",
              checks.nodetach_decoder_nonzero ? "yes" : "no");
  if (!checks.passed(tol)) {
    std::fprintf(stderr, "gradcheck FAILED (tolerance %.3g)\n", tol);
    return kNumeric;
  }
  std::printf("gradcheck passed (tolerance %.3g)\n", tol);
  return kOk;
}

int cmd_render_dataset(const std::string& dataset, const std::string& out_dir, int64_t size,
                       uint64_t seed, int64_t count, int64_t min_objects, int64_t max_objects) {
  if (dataset == "minishapes") {
    export_minishapes(out_dir, size);
  } else if (dataset == "miniscene") {
    export_miniscene(out_dir, size, seed, count, min_objects, max_objects);
  } else {
    throw std::invalid_argument("unknown dataset '" + dataset +
                                "' (expected minishapes or miniscene)");
  }
  std::printf("wrote %s to %s\n", dataset.c_str(), out_dir.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concept-token experiments: train, evaluate, decompose, and edit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", resume, checkpoint, dataset, pca = "per-slot";
  bool quiet = false;
  int64_t batch = 64, swap_batches = 50;
  int64_t scenes = 64, profile_images = 1024, overlays = 0;
  double tau = 0.05, tol = 1e-4;
  std::vector<std::string> pairs;
  std::vector<int64_t> slots;
  int64_t idx_i = 0, idx_j = 1, slot = 0, steps = 10;
  uint64_t seed = 0;
  int probes = 2;
  int64_t size = 64, count = 1000, min_objects = 1, max_objects = 3;

  CLI::App* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "key=value config file")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "artifact directory");
  train->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_flag("--quiet", quiet, "suppress per-step log lines");

  CLI::App* eval = app.add_subcommand("eval", "disentanglement metric suite on a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--out", out_dir, "report directory");
  eval->add_option("--dataset", dataset, "expected dataset (errors on mismatch)");
  eval->add_option("--pca", pca, "token reduction: per-slot or concat");
  eval->add_option("--batch", batch, "encode batch size");
  eval->add_option("--swap-batches", swap_batches, "held-out batches for swap accuracy");

  CLI::App* decompose = app.add_subcommand("decompose", "scene decomposition scores and masks");
  decompose->add_option("--checkpoint", checkpoint, "trained miniscene checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  decompose->add_option("--out", out_dir, "report directory");
  decompose->add_option("--scenes", scenes, "number of scored scenes");
  decompose->add_option("--profile-images", profile_images, "images for the slot profile");
  decompose->add_option("--tau", tau, "saliency threshold");
  decompose->add_option("--overlays", overlays, "write image/pred/gt rasters for first K scenes");

  CLI::App* swap = app.add_subcommand("swap", "decode token swaps between image pairs");
  swap->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  swap->add_option("--out", out_dir, "image directory");
  swap->add_option("--pair", pairs, "image index pair I:J (repeatable)")->required();
  swap->add_option("--slots", slots, "slot indices to swap (default: all)");

  CLI::App* interp = app.add_subcommand("interp", "interpolate one slot between two images");
  interp->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  interp->add_option("--out", out_dir, "image directory");
  interp->add_option("--i", idx_i, "source image index");
  interp->add_option("--j", idx_j, "target image index");
  interp->add_option("--slot", slot, "slot to interpolate");
  interp->add_option("--steps", steps, "frames along the path")->check(CLI::Range(2, 1000));

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("--config", config_path, "config to audit (default: tiny instance)")
      ->check(CLI::ExistingFile);
  gradcheck->add_option("--seed", seed, "probe seed");
  gradcheck->add_option("--probes", probes, "probed entries per parameter");
  gradcheck->add_option("--tol", tol, "relative-error tolerance");

  CLI::App* render = app.add_subcommand("render-dataset", "export a dataset to flat files");
  render->add_option("--dataset", dataset, "minishapes or miniscene")->required();
  render->add_option("--out", out_dir, "output directory")->required();
  render->add_option("--size", size, "image size in pixels");
  render->add_option("--seed", seed, "scene sampling seed");
  render->add_option("--count", count, "number of scenes");
  render->add_option("--min-objects", min_objects, "scene minimum object count");
  render->add_option("--max-objects", max_objects, "scene maximum object count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir, resume, quiet);
    if (eval->parsed()) return cmd_eval(checkpoint, out_dir, dataset, pca, batch, swap_batches);
    if (decompose->parsed())
      return cmd_decompose(checkpoint, out_dir, scenes, profile_images, tau, overlays);
    if (swap->parsed()) return cmd_swap(checkpoint, out_dir, pairs, slots);
    if (interp->parsed()) return cmd_interp(checkpoint, out_dir, idx_i, idx_j, slot, steps);
    if (gradcheck->parsed()) return cmd_gradcheck(config_path, seed, probes, tol);
    if (render->parsed())
      return cmd_render_dataset(dataset, out_dir, size, seed, count, min_objects, max_objects);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumeric;
  }
  return kUsage;
}
