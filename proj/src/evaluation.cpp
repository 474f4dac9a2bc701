#include "vct/evaluation.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "vct/datasets.hpp"

namespace vct {

namespace {

// One full sweep over the factor product; hands each encoded token batch
// (shape {B*M, D}) to `consume` together with the first row index it covers.
template <typename Fn>
void sweep_product(VctModel<float>& model, const FactorSpec& spec, int64_t batch, Fn&& consume) {
  const int64_t rows = spec.count();
  const int64_t size = model.config().image_size;
  std::vector<std::vector<int>> labels;
  for (int64_t row = 0; row < rows; row += batch) {
    int64_t b = std::min(batch, rows - row);
    labels.clear();
    for (int64_t i = 0; i < b; ++i) labels.push_back(spec.labels_at(row + i));
    Tensor<float> images = render_label_batch(labels, size);
    Tensor<float> tokens = model.encode_tensor(images, b);
    consume(row, tokens, b);
  }
}

}  // namespace

RepresentationTable build_representation_table(VctModel<float>& model, int64_t batch,
                                               const std::string& pca_variant,
                                               int64_t* pca_warnings) {
  if (batch < 1) throw std::invalid_argument("representation table: batch must be >= 1");
  const bool concat = pca_variant == "concat";
  if (!concat && pca_variant != "per-slot")
    throw std::invalid_argument("representation table: unknown pca variant '" + pca_variant +
                                "' (expected per-slot or concat)");
  const int64_t m = model.concepts(), d = model.dim();
  FactorSpec spec = minishapes_factors();

  RepresentationTable table;
  table.spec = spec;
  table.rep = Tensor<double>::zeros({spec.count(), m});

  if (concat) {
    ConcatPcaAccumulator acc(m, d);
    sweep_product(model, spec, batch,
                  [&](int64_t, const Tensor<float>& tokens, int64_t b) { acc.add_batch(tokens, b); });
    ConcatPca pca = acc.finalize();
    if (pca_warnings) *pca_warnings = 0;
    sweep_product(model, spec, batch, [&](int64_t row, const Tensor<float>& tokens, int64_t b) {
      for (int64_t i = 0; i < b; ++i) {
        Tensor<float> one = Tensor<float>::zeros({m, d});
        std::copy_n(tokens.data.begin() + static_cast<size_t>(i * m * d),
                    static_cast<size_t>(m * d), one.data.begin());
        pca.project(one, &table.rep.at(row + i, 0));
      }
    });
    return table;
  }

  SlotPcaAccumulator acc(m, d);
  sweep_product(model, spec, batch,
                [&](int64_t, const Tensor<float>& tokens, int64_t b) { acc.add_batch(tokens, b); });
  SlotPca pca = acc.finalize();
  if (pca_warnings) *pca_warnings = pca.warnings;
  sweep_product(model, spec, batch, [&](int64_t row, const Tensor<float>& tokens, int64_t b) {
    for (int64_t i = 0; i < b; ++i) {
      Tensor<float> one = Tensor<float>::zeros({m, d});
      std::copy_n(tokens.data.begin() + static_cast<size_t>(i * m * d),
                  static_cast<size_t>(m * d), one.data.begin());
      pca.project(one, &table.rep.at(row + i, 0));
    }
  });
  return table;
}

StepStats held_out_stats(Trainer& trainer, int64_t batches) {
  if (batches < 1) throw std::invalid_argument("held-out evaluation: batches must be >= 1");
  const int64_t base = trainer.config().steps;
  StepStats mean;
  mean.step = base;
  for (int64_t i = 0; i < batches; ++i) {
    StepStats st = trainer.eval_step(base + i);
    mean.rec += st.rec;
    mean.dis += st.dis;
    mean.swap_acc += st.swap_acc;
  }
  mean.rec /= static_cast<double>(batches);
  mean.dis /= static_cast<double>(batches);
  mean.swap_acc /= static_cast<double>(batches);
  return mean;
}

DisentanglementReport evaluate_disentanglement(Trainer& trainer, const EvalOptions& opt) {
  const ExperimentConfig& cfg = trainer.config();
  int64_t warnings = 0;
  RepresentationTable table =
      build_representation_table(trainer.model(), opt.batch, opt.pca, &warnings);

  DisentanglementReport rep;
  rep.table_rows = table.rep.rows();
  rep.dims = table.dims();
  rep.pca_warnings = warnings;

  const uint64_t base = mix_seed(config_hash(cfg), "eval", static_cast<uint64_t>(cfg.seed));
  Rng fv_rng(mix_seed(base, "factorvae"));
  Rng bv_rng(mix_seed(base, "betavae"));
  Rng dci_rng(mix_seed(base, "dci"));

  rep.factorvae = factorvae_score(table, fv_rng, opt.factorvae);
  rep.betavae = betavae_score(table, bv_rng, opt.betavae);
  rep.mig = mig_score(table, opt.mig_bins);
  DciResult dci = dci_disentanglement(table, dci_rng, opt.dci);
  rep.dci = dci.disentanglement;
  rep.dci_degenerate = dci.degenerate;

  StepStats held = held_out_stats(trainer, opt.swap_batches);
  rep.swap_accuracy = held.swap_acc;
  rep.rec_loss = held.rec;
  rep.dis_loss = held.dis;
  return rep;
}

SceneReport evaluate_scene(VctModel<float>& model, const SceneEvalOptions& opt) {
  const ExperimentConfig& cfg = model.config();
  if (cfg.dataset != "miniscene")
    throw std::invalid_argument("scene evaluation: config dataset must be miniscene, got '" +
                                cfg.dataset + "'");
  const int64_t size = cfg.image_size;
  const uint64_t base = mix_seed(config_hash(cfg), "eval", static_cast<uint64_t>(cfg.seed));

  SlotProfileAccumulator acc(model.concepts(), model.dim());
  SceneStream profile_stream(mix_seed(base, "scene-profile"), size, cfg.scene_min_objects,
                             cfg.scene_max_objects);
  Tensor<float> images = Tensor<float>::zeros({opt.batch, model.pixels()});
  int64_t step = 0;
  while (acc.images() < opt.profile_images) {
    profile_stream.batch(step++, opt.batch, images);
    acc.add_batch(model.encode_tensor(images, opt.batch), opt.batch);
  }
  SlotProfile profile = acc.finalize(std::min<int64_t>(opt.profile_images, 1000));

  SceneStream eval_stream(mix_seed(base, "scene-eval"), size, cfg.scene_min_objects,
                          cfg.scene_max_objects);
  SceneReport rep;
  rep.scenes = opt.scenes;
  for (int64_t i = 0; i < opt.scenes; ++i) {
    SceneRender scene = eval_stream.render_at(i);
    MaskExtraction ext = extract_masks(model, scene.image, profile, opt.tau);
    rep.otsu_fallbacks += ext.otsu_fallback ? 1 : 0;
    rep.per_scene_ari.push_back(ari_foreground(ext.assignment, scene.instance));
    rep.per_scene_msc.push_back(msc_score(ext.assignment, scene.instance));
    rep.ari += rep.per_scene_ari.back();
    rep.msc += rep.per_scene_msc.back();
  }
  rep.ari /= static_cast<double>(opt.scenes);
  rep.msc /= static_cast<double>(opt.scenes);
  return rep;
}

ReportRows report_rows(const DisentanglementReport& r) {
  return {{"factorvae", r.factorvae},
          {"betavae", r.betavae},
          {"mig", r.mig},
          {"dci", r.dci},
          {"swap_accuracy", r.swap_accuracy},
          {"rec_loss", r.rec_loss},
          {"dis_loss", r.dis_loss},
          {"pca_warnings", static_cast<double>(r.pca_warnings)},
          {"dci_degenerate", r.dci_degenerate ? 1.0 : 0.0}};
}

ReportRows report_rows(const SceneReport& r) {
  return {{"ari", r.ari},
          {"msc", r.msc},
          {"scenes", static_cast<double>(r.scenes)},
          {"otsu_fallbacks", static_cast<double>(r.otsu_fallbacks)}};
}

void write_report_text(const std::string& path, const ReportRows& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  char line[128];
  for (const auto& [name, value] : rows) {
    std::snprintf(line, sizeof(line), " = %.17g\n", value);
    out << name << line;
  }
  if (!out.good()) throw std::runtime_error("report write failed: " + path);
}

void write_report_csv(const std::string& path, const ReportRows& rows, int64_t seed,
                      uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << "metric,value,seed,config_hash\n";
  char line[160];
  for (const auto& [name, value] : rows) {
    std::snprintf(line, sizeof(line), ",%.17g,%" PRId64 ",", value, seed);
    out << name << line << hex64(config_hash) << "\n";
  }
  if (!out.good()) throw std::runtime_error("report write failed: " + path);
}

}  // namespace vct
