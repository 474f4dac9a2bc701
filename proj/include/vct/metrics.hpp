#pragma once

#include <cstdint>
#include <vector>

#include "vct/datasets.hpp"
#include "vct/rng.hpp"
#include "vct/tensor.hpp"

namespace vct {

// Evaluation representation: one row of scalars per factor combination, row
// index = FactorSpec::index_of(labels). Built once; every metric protocol
// samples factor combinations and looks rows up instead of re-encoding.
struct RepresentationTable {
  FactorSpec spec;
  Tensor<double> rep;  // {spec.count(), dims}

  int64_t dims() const { return rep.cols(); }
};

// ---- slot-wise PCA reduction ----

// Top principal direction of each concept slot, fitted by streaming token
// batches twice (moments, then projection).
struct SlotPca {
  int64_t slots = 0, dim = 0;
  Tensor<double> mean;       // {M, D}
  Tensor<double> direction;  // {M, D} unit top eigenvectors
  std::vector<double> top_eigenvalue;
  std::vector<char> degenerate;  // constant slots project to 0
  int64_t warnings = 0;

  // tokens: {M, D} for one image -> M scalars
  void project(const Tensor<float>& tokens, double* out) const;
};

class SlotPcaAccumulator {
 public:
  SlotPcaAccumulator(int64_t slots, int64_t dim);
  // tokens: {B*M, D} stacked per image
  void add_batch(const Tensor<float>& tokens, int64_t batch);
  SlotPca finalize() const;
  int64_t samples() const { return n_; }

 private:
  int64_t slots_, dim_, n_ = 0;
  Tensor<double> sum_;                  // {M, D}
  std::vector<Tensor<double>> second_;  // per slot {D, D} accumulated outer products
};

// Concatenated alternative: PCA over the flattened M*D vector, top M scores.
struct ConcatPca {
  int64_t slots = 0, dim = 0;
  Tensor<double> mean;        // {1, M*D}
  Tensor<double> directions;  // {M, M*D}
  void project(const Tensor<float>& tokens, double* out) const;
};

class ConcatPcaAccumulator {
 public:
  ConcatPcaAccumulator(int64_t slots, int64_t dim);
  void add_batch(const Tensor<float>& tokens, int64_t batch);
  ConcatPca finalize() const;

 private:
  int64_t slots_, dim_, n_ = 0;
  Tensor<double> sum_;     // {1, M*D}
  Tensor<double> second_;  // {M*D, M*D}
};

// ---- disentanglement metrics ----

struct FactorVaeOptions {
  int64_t train_votes = 800;
  int64_t eval_votes = 400;
  int64_t vote_batch = 64;
  double collapse_threshold = 0.05;  // of the median std
};
double factorvae_score(const RepresentationTable& table, Rng& rng,
                       const FactorVaeOptions& opt = {});

struct BetaVaeOptions {
  int64_t train_points = 10000;
  int64_t eval_points = 5000;
  int64_t pairs_per_point = 64;
};
double betavae_score(const RepresentationTable& table, Rng& rng, const BetaVaeOptions& opt = {});

double mig_score(const RepresentationTable& table, int64_t bins = 20);

struct DciOptions {
  double test_fraction = 0.2;
  double l1_penalty = 0.02;
  int iterations = 400;
};
struct DciResult {
  Tensor<double> importance;  // {dims, factors}
  double disentanglement = 0;
  double mean_test_accuracy = 0;
  bool degenerate = false;  // negligible total importance mass; score forced to 0
};
DciResult dci_disentanglement(const RepresentationTable& table, Rng& rng,
                              const DciOptions& opt = {});

// The aggregation formula alone (weights, per-row entropy), separately
// testable against hand-derived cases.
double dci_from_importance(const Tensor<double>& importance);

// ---- scene decomposition metrics ----

// Adjusted Rand index restricted to ground-truth foreground pixels
// (gt label > 0); predicted labels are taken as-is.
double ari_foreground(const std::vector<int>& pred, const std::vector<int>& gt);

// Mean over ground-truth regions (background id 0 included) of the best IoU
// achieved by any predicted region. Predicted label -1 means "no mask".
double msc_score(const std::vector<int>& pred, const std::vector<int>& gt);

}  // namespace vct
