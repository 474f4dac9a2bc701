#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vct/manipulation.hpp"
#include "vct/metrics.hpp"
#include "vct/trainer.hpp"

namespace vct {

// Disentanglement evaluation encodes the full MiniShapes factor product once
// into a row-indexed table of reduced representations; every metric protocol
// then samples factor combinations and looks rows up instead of re-rendering.

struct EvalOptions {
  int64_t batch = 64;            // render/encode batch size
  std::string pca = "per-slot";  // "per-slot" (default) or "concat"
  int64_t swap_batches = 50;     // held-out batches averaged for swap accuracy
  int64_t mig_bins = 20;
  FactorVaeOptions factorvae;
  BetaVaeOptions betavae;
  DciOptions dci;
};

struct DisentanglementReport {
  double factorvae = 0, betavae = 0, mig = 0, dci = 0;
  double swap_accuracy = 0;
  double rec_loss = 0, dis_loss = 0;  // held-out means
  int64_t pca_warnings = 0;           // slots that collapsed to a constant
  bool dci_degenerate = false;
  int64_t table_rows = 0, dims = 0;
};

// Encode every factor combination and project tokens to scalars with the
// chosen PCA variant (fitted on the same sweep in a first pass).
RepresentationTable build_representation_table(VctModel<float>& model, int64_t batch,
                                               const std::string& pca_variant,
                                               int64_t* pca_warnings = nullptr);

// Mean swap identification accuracy over fresh batches and swap plans drawn
// at step indices past the end of training.
StepStats held_out_stats(Trainer& trainer, int64_t batches);

// The full metric suite. Evaluation randomness is derived from
// (config hash, seed) only, so re-running on the same checkpoint reproduces
// the report bit for bit.
DisentanglementReport evaluate_disentanglement(Trainer& trainer, const EvalOptions& opt = {});

struct SceneEvalOptions {
  int64_t profile_images = 1024;  // slot-profile fitting set
  int64_t scenes = 64;            // scored scenes
  int64_t batch = 32;
  double tau = 0.05;              // saliency threshold (pixel units)
};

struct SceneReport {
  double ari = 0, msc = 0;  // means over scored scenes
  int64_t scenes = 0;
  int64_t otsu_fallbacks = 0;
  std::vector<double> per_scene_ari;
  std::vector<double> per_scene_msc;
};

// Object-discovery scoring on MiniScene: fit a SlotProfile on one stream,
// then extract masks on a disjoint stream and score the pixel assignment
// against the ground-truth instance maps.
SceneReport evaluate_scene(VctModel<float>& model, const SceneEvalOptions& opt = {});

// ---- report files ----

using ReportRows = std::vector<std::pair<std::string, double>>;

ReportRows report_rows(const DisentanglementReport& r);
ReportRows report_rows(const SceneReport& r);

// "name = value" lines, one per metric
void write_report_text(const std::string& path, const ReportRows& rows);
// machine-readable: header "metric,value,seed,config_hash" then one row each
void write_report_csv(const std::string& path, const ReportRows& rows, int64_t seed,
                      uint64_t config_hash);

}  // namespace vct
