// Python bindings for the concept-token framework. The surface mirrors the
// CLI: configs, models, training, checkpoints, metrics, and token surgery.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>

#include "vct/checkpoint.hpp"
#include "vct/evaluation.hpp"
#include "vct/image_io.hpp"
#include "vct/model_gradcheck.hpp"
#include "vct/trainer.hpp"

namespace py = pybind11;
using namespace vct;

namespace {

// {rows, cols} float32 tensor <-> numpy
py::array_t<float> to_numpy(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), t.data.data(), sizeof(float) * t.data.size());
  return out;
}

Tensor<float> from_numpy(const py::array& arr_in) {
  py::array_t<float, py::array::c_style | py::array::forcecast> arr(arr_in);
  std::vector<int64_t> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<size_t>(i)] = arr.shape(i);
  Tensor<float> t = Tensor<float>::zeros(shape);
  std::memcpy(t.data.data(), arr.data(), sizeof(float) * t.data.size());
  return t;
}

py::array_t<double> to_numpy64(const Tensor<double>& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> out(shape);
  std::memcpy(out.mutable_data(), t.data.data(), sizeof(double) * t.data.size());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "concept-token models: training, evaluation, and token surgery";

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("dataset", &ExperimentConfig::dataset)
      .def_readwrite("image_size", &ExperimentConfig::image_size)
      .def_readwrite("scene_min_objects", &ExperimentConfig::scene_min_objects)
      .def_readwrite("scene_max_objects", &ExperimentConfig::scene_max_objects)
      .def_readwrite("codec", &ExperimentConfig::codec)
      .def_readwrite("patch_size", &ExperimentConfig::patch_size)
      .def_readwrite("dim", &ExperimentConfig::dim)
      .def_readwrite("heads", &ExperimentConfig::heads)
      .def_readwrite("enc_layers", &ExperimentConfig::enc_layers)
      .def_readwrite("dec_layers", &ExperimentConfig::dec_layers)
      .def_readwrite("concepts", &ExperimentConfig::concepts)
      .def_readwrite("init_std", &ExperimentConfig::init_std)
      .def_readwrite("concept_self_attention", &ExperimentConfig::concept_self_attention)
      .def_readwrite("concept_pos_embedding", &ExperimentConfig::concept_pos_embedding)
      .def_readwrite("cnn_detokenizer", &ExperimentConfig::cnn_detokenizer)
      .def_readwrite("transformer_detokenizer", &ExperimentConfig::transformer_detokenizer)
      .def_readwrite("no_dis_loss", &ExperimentConfig::no_dis_loss)
      .def_readwrite("no_detach", &ExperimentConfig::no_detach)
      .def_readwrite("dis_update_prototypes", &ExperimentConfig::dis_update_prototypes)
      .def_readwrite("dis_update_image_tokenizer", &ExperimentConfig::dis_update_image_tokenizer)
      .def_readwrite("batch", &ExperimentConfig::batch)
      .def_readwrite("steps", &ExperimentConfig::steps)
      .def_readwrite("lr", &ExperimentConfig::lr)
      .def_readwrite("dis_weight", &ExperimentConfig::dis_weight)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("log_every", &ExperimentConfig::log_every)
      .def_readwrite("ckpt_every", &ExperimentConfig::ckpt_every)
      .def_readwrite("ae_pretrain_steps", &ExperimentConfig::ae_pretrain_steps)
      .def_readwrite("ae_freeze", &ExperimentConfig::ae_freeze)
      .def("__repr__",
           [](const ExperimentConfig& c) { return "<ExperimentConfig " + hex64(config_hash(c)) + ">"; });

  m.def("parse_config", &parse_config, py::arg("text"));
  m.def("load_config", &load_config, py::arg("path"));
  m.def("canonical_config", &canonical_config, py::arg("config"));
  m.def("config_hash_hex",
        [](const ExperimentConfig& c) { return hex64(config_hash(c)); }, py::arg("config"));
  m.def("validate_config", &validate_config, py::arg("config"));

  py::class_<StepStats>(m, "StepStats")
      .def_readonly("step", &StepStats::step)
      .def_readonly("rec", &StepStats::rec)
      .def_readonly("dis", &StepStats::dis)
      .def_readonly("swap_acc", &StepStats::swap_acc)
      .def_readonly("lr", &StepStats::lr)
      .def("__repr__", [](const StepStats& s) {
        return "<StepStats step=" + std::to_string(s.step) + " rec=" + std::to_string(s.rec) +
               " dis=" + std::to_string(s.dis) + " swap_acc=" + std::to_string(s.swap_acc) + ">";
      });

  py::class_<Trainer>(m, "Trainer")
      .def(py::init<const ExperimentConfig&>(), py::arg("config"))
      .def_property_readonly("step", &Trainer::step)
      .def_property_readonly("config", &Trainer::config)
      .def("pretrain_codec", &Trainer::pretrain_codec)
      .def("train_step", &Trainer::train_step)
      .def("eval_step", &Trainer::eval_step, py::arg("step_index"))
      .def("encode",
           [](Trainer& tr, const py::array& images) {
             Tensor<float> x = from_numpy(images);
             int64_t b = x.rows();
             if (x.shape.size() != 2) throw std::invalid_argument("images must be {B, pixels}");
             return to_numpy(tr.model().encode_tensor(x, b));
           },
           py::arg("images"), "encode a {B, pixels} batch to {B*M, D} concept tokens")
      .def("decode",
           [](Trainer& tr, const py::array& tokens, int64_t batch) {
             return to_numpy(tr.model().decode_tensor(from_numpy(tokens), batch));
           },
           py::arg("tokens"), py::arg("batch"),
           "decode {B*M, D} concept tokens to {B, pixels} images")
      .def("reconstruct",
           [](Trainer& tr, const py::array& images) {
             Tensor<float> x = from_numpy(images);
             return to_numpy(tr.model().reconstruct_tensor(x, x.rows()));
           },
           py::arg("images"))
      .def("save_checkpoint",
           [](Trainer& tr, const std::string& path) {
             save_checkpoint(path, tr.config(), tr.params(), tr.optimizer(), tr.step());
           },
           py::arg("path"))
      .def("load_checkpoint",
           [](Trainer& tr, const std::string& path, bool force) {
             CheckpointInfo info =
                 load_checkpoint(path, tr.config(), tr.params(), tr.optimizer(), force);
             tr.set_step(info.step);
             return info.step;
           },
           py::arg("path"), py::arg("force") = false, "returns the restored step");

  py::class_<TrainingRun>(m, "TrainingRun")
      .def_readonly("checkpoint_path", &TrainingRun::checkpoint_path)
      .def_readonly("log_path", &TrainingRun::log_path)
      .def_readonly("steps_done", &TrainingRun::steps_done)
      .def_readonly("aborted", &TrainingRun::aborted)
      .def_readonly("abort_reason", &TrainingRun::abort_reason);

  m.def("run_training",
        [](const ExperimentConfig& cfg, const std::string& out_dir, const std::string& resume,
           const py::object& on_log) {
          std::function<void(const StepStats&)> cb;
          if (!on_log.is_none()) cb = [on_log](const StepStats& st) { on_log(st); };
          return run_training(cfg, out_dir, resume, cb);
        },
        py::arg("config"), py::arg("out_dir"), py::arg("resume") = std::string(),
        py::arg("on_log") = py::none());

  // ---- datasets ----
  m.def("minishapes_labels",
        []() {
          FactorSpec spec = minishapes_factors();
          std::vector<std::pair<std::string, int64_t>> out;
          for (const Factor& f : spec.factors) out.emplace_back(f.name, f.cardinality);
          return out;
        },
        "factor names and cardinalities");
  m.def("render_minishapes",
        [](const std::vector<int>& labels, int64_t size) {
          return to_numpy(render_minishapes(labels, size));
        },
        py::arg("labels"), py::arg("size"));
  m.def("render_miniscene",
        [](uint64_t seed, int64_t index, int64_t size, int64_t min_objects, int64_t max_objects) {
          SceneStream stream(seed, size, min_objects, max_objects);
          SceneRender r = stream.render_at(index);
          return py::make_tuple(to_numpy(r.image), py::cast(r.instance));
        },
        py::arg("seed"), py::arg("index"), py::arg("size"), py::arg("min_objects") = 1,
        py::arg("max_objects") = 3, "returns (image, instance_map)");
  m.def("export_minishapes", &export_minishapes, py::arg("dir"), py::arg("image_size"));
  m.def("export_miniscene", &export_miniscene, py::arg("dir"), py::arg("image_size"),
        py::arg("seed"), py::arg("count"), py::arg("min_objects"), py::arg("max_objects"));

  // ---- evaluation ----
  py::class_<DisentanglementReport>(m, "DisentanglementReport")
      .def_readonly("factorvae", &DisentanglementReport::factorvae)
      .def_readonly("betavae", &DisentanglementReport::betavae)
      .def_readonly("mig", &DisentanglementReport::mig)
      .def_readonly("dci", &DisentanglementReport::dci)
      .def_readonly("swap_accuracy", &DisentanglementReport::swap_accuracy)
      .def_readonly("rec_loss", &DisentanglementReport::rec_loss)
      .def_readonly("dis_loss", &DisentanglementReport::dis_loss)
      .def_readonly("pca_warnings", &DisentanglementReport::pca_warnings)
      .def_readonly("dci_degenerate", &DisentanglementReport::dci_degenerate);

  m.def("evaluate_disentanglement",
        [](Trainer& tr, const std::string& pca, int64_t batch, int64_t swap_batches) {
          EvalOptions opt;
          opt.pca = pca;
          opt.batch = batch;
          opt.swap_batches = swap_batches;
          return evaluate_disentanglement(tr, opt);
        },
        py::arg("trainer"), py::arg("pca") = "per-slot", py::arg("batch") = 64,
        py::arg("swap_batches") = 50);

  py::class_<SceneReport>(m, "SceneReport")
      .def_readonly("ari", &SceneReport::ari)
      .def_readonly("msc", &SceneReport::msc)
      .def_readonly("scenes", &SceneReport::scenes)
      .def_readonly("otsu_fallbacks", &SceneReport::otsu_fallbacks)
      .def_readonly("per_scene_ari", &SceneReport::per_scene_ari)
      .def_readonly("per_scene_msc", &SceneReport::per_scene_msc);

  m.def("evaluate_scene",
        [](Trainer& tr, int64_t profile_images, int64_t scenes, double tau) {
          SceneEvalOptions opt;
          opt.profile_images = profile_images;
          opt.scenes = scenes;
          opt.tau = tau;
          return evaluate_scene(tr.model(), opt);
        },
        py::arg("trainer"), py::arg("profile_images") = 1024, py::arg("scenes") = 64,
        py::arg("tau") = 0.05);

  m.def("ari_foreground", &ari_foreground, py::arg("pred"), py::arg("gt"));
  m.def("msc_score", &msc_score, py::arg("pred"), py::arg("gt"));

  // ---- token surgery ----
  m.def("swap_and_decode",
        [](Trainer& tr, const py::array& ca, const py::array& cb, std::vector<int64_t> slots) {
          return to_numpy(swap_and_decode(tr.model(), from_numpy(ca), from_numpy(cb), slots));
        },
        py::arg("trainer"), py::arg("tokens_a"), py::arg("tokens_b"), py::arg("slots"));
  m.def("recombine",
        [](Trainer& tr, const std::vector<py::array>& sources, std::vector<int64_t> assignment) {
          std::vector<Tensor<float>> srcs;
          for (const py::array& s : sources) srcs.push_back(from_numpy(s));
          return to_numpy(recombine(tr.model(), srcs, assignment));
        },
        py::arg("trainer"), py::arg("sources"), py::arg("assignment"));
  m.def("interpolate_slot",
        [](Trainer& tr, const py::array& c, int64_t slot, const py::array& target, int64_t steps) {
          std::vector<py::array_t<float>> out;
          for (const Tensor<float>& f :
               interpolate_slot(tr.model(), from_numpy(c), slot, from_numpy(target), steps))
            out.push_back(to_numpy(f));
          return out;
        },
        py::arg("trainer"), py::arg("tokens"), py::arg("slot"), py::arg("target_row"),
        py::arg("steps"));

  // ---- gradient audit ----
  m.def("gradcheck",
        [](uint64_t seed, int probes) {
          ModelGradChecks checks = run_model_gradchecks(gradcheck_default_config(), seed, probes);
          py::dict out;
          out["max_rel_err"] = checks.max_rel_err();
          out["rec_max_rel_err"] = checks.rec.max_rel_err;
          out["dis_scoped_max_rel_err"] = checks.dis_scoped.max_rel_err;
          out["dis_nodetach_max_rel_err"] = checks.dis_nodetach.max_rel_err;
          out["decoder_zero_before_mask"] = checks.decoder_zero_before_mask;
          out["outside_zero_after_mask"] = checks.outside_zero_after_mask;
          out["nodetach_decoder_nonzero"] = checks.nodetach_decoder_nonzero;
          out["passed"] = checks.passed(1e-4);
          return out;
        },
        py::arg("seed") = 0, py::arg("probes") = 2);

  // ---- representation table (advanced) ----
  py::class_<RepresentationTable>(m, "RepresentationTable")
      .def_property_readonly("rep",
                             [](const RepresentationTable& t) { return to_numpy64(t.rep); })
      .def_property_readonly("rows", [](const RepresentationTable& t) { return t.rep.rows(); })
      .def_property_readonly("dims", &RepresentationTable::dims);

  m.def("build_representation_table",
        [](Trainer& tr, int64_t batch, const std::string& pca) {
          return build_representation_table(tr.model(), batch, pca);
        },
        py::arg("trainer"), py::arg("batch") = 64, py::arg("pca") = "per-slot");
}
