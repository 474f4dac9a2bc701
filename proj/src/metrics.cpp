#include "vct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace vct {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const double* table_row(const RepresentationTable& t, int64_t i) {
  return t.rep.data.data() + i * t.dims();
}

void check_table(const RepresentationTable& t) {
  if (t.rep.rows() != t.spec.count())
    throw std::invalid_argument("representation table: rows != factor combinations");
  if (t.dims() < 1) throw std::invalid_argument("representation table: no dims");
  if (t.spec.size() < 1) throw std::invalid_argument("representation table: no factors");
}

// Row index of a uniform factor draw, optionally with one factor pinned.
int64_t sample_row(const FactorSpec& spec, Rng& rng, int fixed_factor = -1,
                   int fixed_value = 0) {
  std::vector<int> labels(static_cast<size_t>(spec.size()));
  for (int64_t f = 0; f < spec.size(); ++f) {
    int64_t c = spec.factors[static_cast<size_t>(f)].cardinality;
    labels[static_cast<size_t>(f)] =
        (f == fixed_factor) ? fixed_value : static_cast<int>(rng.uniform_int(c));
  }
  return spec.index_of(labels);
}

// Largest-magnitude entry made positive so eigenvector signs are pinned.
void fix_sign(VectorXd& v) {
  int64_t best = 0;
  for (int64_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (v[best] < 0) v = -v;
}

// Per-column mean and population std of the table.
void column_stats(const RepresentationTable& t, VectorXd& mean, VectorXd& stddev) {
  int64_t n = t.rep.rows(), m = t.dims();
  mean = VectorXd::Zero(m);
  VectorXd sq = VectorXd::Zero(m);
  for (int64_t i = 0; i < n; ++i) {
    const double* r = table_row(t, i);
    for (int64_t j = 0; j < m; ++j) {
      mean[j] += r[j];
      sq[j] += r[j] * r[j];
    }
  }
  mean /= static_cast<double>(n);
  stddev = VectorXd(m);
  for (int64_t j = 0; j < m; ++j) {
    double var = sq[j] / static_cast<double>(n) - mean[j] * mean[j];
    stddev[j] = std::sqrt(std::max(var, 0.0));
  }
}

// Standardize columns in place with train-set stats; dead columns become 0.
void standardize(MatrixXd& x, VectorXd& mu, VectorXd& sd) {
  mu = x.colwise().mean();
  sd = VectorXd(x.cols());
  for (int64_t j = 0; j < x.cols(); ++j) {
    double var = (x.col(j).array() - mu[j]).square().mean();
    sd[j] = std::sqrt(std::max(var, 0.0));
    if (sd[j] < 1e-12) {
      x.col(j).setZero();
      sd[j] = 0.0;
    } else {
      x.col(j) = (x.col(j).array() - mu[j]) / sd[j];
    }
  }
}

double largest_gram_eigenvalue(const MatrixXd& x) {
  MatrixXd g = x.transpose() * x / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(g);
  return std::max(es.eigenvalues().maxCoeff(), 1e-8);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// L1-penalized binary logistic regression by proximal gradient from zero
// init, so uninformative coefficients stay exactly zero. x must be
// standardized. Returns {w, bias}.
std::pair<VectorXd, double> fit_l1_logistic(const MatrixXd& x, const VectorXd& y,
                                            double lambda, int iters, double step) {
  int64_t n = x.rows(), m = x.cols();
  VectorXd w = VectorXd::Zero(m);
  double b = 0.0;
  VectorXd z(n), p(n);
  for (int it = 0; it < iters; ++it) {
    z = x * w;
    z.array() += b;
    for (int64_t i = 0; i < n; ++i) p[i] = sigmoid(z[i]) - y[i];
    VectorXd g = x.transpose() * p / static_cast<double>(n);
    double gb = p.mean();
    double thr = step * lambda;
    for (int64_t j = 0; j < m; ++j) {
      double wj = w[j] - step * g[j];
      w[j] = (wj > thr) ? wj - thr : (wj < -thr ? wj + thr : 0.0);
    }
    b -= step * gb;
  }
  return {w, b};
}

// Multinomial logistic regression (softmax, full-batch gradient descent).
struct SoftmaxModel {
  MatrixXd w;  // {m, classes}
  VectorXd b;  // {classes}
  VectorXd mu, sd;

  int predict(const VectorXd& raw) const {
    VectorXd f(raw.size());
    for (int64_t j = 0; j < raw.size(); ++j)
      f[j] = sd[j] > 0 ? (raw[j] - mu[j]) / sd[j] : 0.0;
    VectorXd s = w.transpose() * f + b;
    int best = 0;
    for (int c = 1; c < s.size(); ++c)
      if (s[c] > s[best]) best = c;
    return best;
  }
};

SoftmaxModel fit_softmax(MatrixXd x, const std::vector<int>& y, int classes, int iters) {
  SoftmaxModel model;
  standardize(x, model.mu, model.sd);
  int64_t n = x.rows(), m = x.cols();
  double step = 1.8 / largest_gram_eigenvalue(x);
  model.w = MatrixXd::Zero(m, classes);
  model.b = VectorXd::Zero(classes);
  MatrixXd onehot = MatrixXd::Zero(n, classes);
  for (int64_t i = 0; i < n; ++i) onehot(i, y[static_cast<size_t>(i)]) = 1.0;
  MatrixXd logits(n, classes), probs(n, classes);
  for (int it = 0; it < iters; ++it) {
    logits = x * model.w;
    logits.rowwise() += model.b.transpose();
    for (int64_t i = 0; i < n; ++i) {
      double mx = logits.row(i).maxCoeff();
      probs.row(i) = (logits.row(i).array() - mx).exp();
      probs.row(i) /= probs.row(i).sum();
    }
    MatrixXd diff = probs - onehot;
    MatrixXd gw = x.transpose() * diff / static_cast<double>(n);
    VectorXd gb = diff.colwise().mean();
    model.w -= step * gw;
    model.b -= step * gb;
  }
  return model;
}

// Tie-preserving equal-occupancy discretization by rank: position i of the
// sorted order lands in bin floor(i*bins/n), and a run of equal values is
// forced into the bin of its first position so ties never split.
std::vector<int> quantile_bins(const std::vector<double>& values, int64_t bins) {
  int64_t n = static_cast<int64_t>(values.size());
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
    return values[static_cast<size_t>(a)] < values[static_cast<size_t>(b)];
  });
  std::vector<int> out(values.size());
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j < n &&
           values[static_cast<size_t>(idx[static_cast<size_t>(j)])] ==
               values[static_cast<size_t>(idx[static_cast<size_t>(i)])])
      ++j;
    int b = static_cast<int>(i * bins / n);
    for (int64_t k = i; k < j; ++k) out[static_cast<size_t>(idx[static_cast<size_t>(k)])] = b;
    i = j;
  }
  return out;
}

double entropy_nats(const std::vector<double>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

// id -> dense index, insertion-ordered
int dense_id(std::map<int, int>& ids, int raw) {
  auto it = ids.find(raw);
  if (it != ids.end()) return it->second;
  int next = static_cast<int>(ids.size());
  ids.emplace(raw, next);
  return next;
}

}  // namespace

// ---- slot-wise PCA ----

SlotPcaAccumulator::SlotPcaAccumulator(int64_t slots, int64_t dim)
    : slots_(slots), dim_(dim), sum_(Tensor<double>::zeros({slots, dim})) {
  if (slots < 1 || dim < 1) throw std::invalid_argument("pca: bad sizes");
  second_.reserve(static_cast<size_t>(slots));
  for (int64_t m = 0; m < slots; ++m) second_.push_back(Tensor<double>::zeros({dim, dim}));
}

void SlotPcaAccumulator::add_batch(const Tensor<float>& tokens, int64_t batch) {
  if (tokens.rows() != batch * slots_ || tokens.cols() != dim_)
    throw std::invalid_argument("pca: tokens shape mismatch");
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t m = 0; m < slots_; ++m) {
      const float* t = tokens.data.data() + (b * slots_ + m) * dim_;
      double* s = sum_.data.data() + m * dim_;
      auto cov = mat(second_[static_cast<size_t>(m)]);
      VectorXd x(dim_);
      for (int64_t d = 0; d < dim_; ++d) {
        x[d] = t[d];
        s[d] += x[d];
      }
      cov += x * x.transpose();
    }
  }
  n_ += batch;
}

SlotPca SlotPcaAccumulator::finalize() const {
  if (n_ < dim_) throw std::invalid_argument("pca: need at least dim samples");
  SlotPca out;
  out.slots = slots_;
  out.dim = dim_;
  out.mean = Tensor<double>::zeros({slots_, dim_});
  out.direction = Tensor<double>::zeros({slots_, dim_});
  out.top_eigenvalue.assign(static_cast<size_t>(slots_), 0.0);
  out.degenerate.assign(static_cast<size_t>(slots_), 0);
  double n = static_cast<double>(n_);
  for (int64_t m = 0; m < slots_; ++m) {
    VectorXd mu(dim_);
    for (int64_t d = 0; d < dim_; ++d) mu[d] = sum_.at(m, d) / n;
    MatrixXd cov = MatrixXd(mat(second_[static_cast<size_t>(m)])) / n - mu * mu.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
    double ev = es.eigenvalues()[dim_ - 1];
    for (int64_t d = 0; d < dim_; ++d) out.mean.at(m, d) = mu[d];
    if (ev < 1e-12) {
      out.degenerate[static_cast<size_t>(m)] = 1;
      ++out.warnings;
      continue;
    }
    VectorXd v = es.eigenvectors().col(dim_ - 1);
    fix_sign(v);
    out.top_eigenvalue[static_cast<size_t>(m)] = ev;
    for (int64_t d = 0; d < dim_; ++d) out.direction.at(m, d) = v[d];
  }
  return out;
}

void SlotPca::project(const Tensor<float>& tokens, double* out) const {
  if (tokens.rows() != slots || tokens.cols() != dim)
    throw std::invalid_argument("pca project: tokens shape mismatch");
  for (int64_t m = 0; m < slots; ++m) {
    double acc = 0;
    const float* t = tokens.data.data() + m * dim;
    const double* mu = mean.data.data() + m * dim;
    const double* dir = direction.data.data() + m * dim;
    for (int64_t d = 0; d < dim; ++d) acc += (static_cast<double>(t[d]) - mu[d]) * dir[d];
    out[m] = acc;
  }
}

ConcatPcaAccumulator::ConcatPcaAccumulator(int64_t slots, int64_t dim)
    : slots_(slots),
      dim_(dim),
      sum_(Tensor<double>::zeros({1, slots * dim})),
      second_(Tensor<double>::zeros({slots * dim, slots * dim})) {
  if (slots < 1 || dim < 1) throw std::invalid_argument("pca: bad sizes");
}

void ConcatPcaAccumulator::add_batch(const Tensor<float>& tokens, int64_t batch) {
  int64_t md = slots_ * dim_;
  if (tokens.rows() != batch * slots_ || tokens.cols() != dim_)
    throw std::invalid_argument("pca: tokens shape mismatch");
  auto cov = mat(second_);
  for (int64_t b = 0; b < batch; ++b) {
    const float* t = tokens.data.data() + b * md;
    VectorXd x(md);
    for (int64_t d = 0; d < md; ++d) {
      x[d] = t[d];
      sum_[d] += x[d];
    }
    cov += x * x.transpose();
  }
  n_ += batch;
}

ConcatPca ConcatPcaAccumulator::finalize() const {
  int64_t md = slots_ * dim_;
  if (n_ < md) throw std::invalid_argument("pca: need at least slots*dim samples");
  ConcatPca out;
  out.slots = slots_;
  out.dim = dim_;
  out.mean = Tensor<double>::zeros({1, md});
  out.directions = Tensor<double>::zeros({slots_, md});
  double n = static_cast<double>(n_);
  VectorXd mu(md);
  for (int64_t d = 0; d < md; ++d) mu[d] = sum_[d] / n;
  MatrixXd cov = MatrixXd(mat(second_)) / n - mu * mu.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  for (int64_t d = 0; d < md; ++d) out.mean[d] = mu[d];
  for (int64_t m = 0; m < slots_; ++m) {
    VectorXd v = es.eigenvectors().col(md - 1 - m);  // descending eigenvalue order
    fix_sign(v);
    for (int64_t d = 0; d < md; ++d) out.directions.at(m, d) = v[d];
  }
  return out;
}

void ConcatPca::project(const Tensor<float>& tokens, double* out) const {
  int64_t md = slots * dim;
  if (tokens.rows() != slots || tokens.cols() != dim)
    throw std::invalid_argument("pca project: tokens shape mismatch");
  VectorXd x(md);
  for (int64_t d = 0; d < md; ++d) x[d] = static_cast<double>(tokens.data[static_cast<size_t>(d)]) - mean[d];
  for (int64_t m = 0; m < slots; ++m) {
    double acc = 0;
    const double* dir = directions.data.data() + m * md;
    for (int64_t d = 0; d < md; ++d) acc += x[d] * dir[d];
    out[m] = acc;
  }
}

// ---- FactorVAE score ----

double factorvae_score(const RepresentationTable& table, Rng& rng,
                       const FactorVaeOptions& opt) {
  check_table(table);
  int64_t m = table.dims();
  int64_t nf = table.spec.size();
  VectorXd mean, stddev;
  column_stats(table, mean, stddev);

  // drop collapsed dims: std below a fraction of the median std
  std::vector<double> sorted_std(stddev.data(), stddev.data() + m);
  std::sort(sorted_std.begin(), sorted_std.end());
  double median = sorted_std[static_cast<size_t>(m / 2)];
  std::vector<int64_t> kept;
  for (int64_t j = 0; j < m; ++j)
    if (stddev[j] >= opt.collapse_threshold * median && stddev[j] > 0) kept.push_back(j);
  if (kept.empty()) return 0.0;
  int64_t km = static_cast<int64_t>(kept.size());

  auto vote = [&](int64_t& dim_out, int64_t& factor_out) {
    int64_t k = rng.uniform_int(nf);
    int64_t c = table.spec.factors[static_cast<size_t>(k)].cardinality;
    int val = static_cast<int>(rng.uniform_int(c));
    VectorXd s = VectorXd::Zero(km), sq = VectorXd::Zero(km);
    for (int64_t i = 0; i < opt.vote_batch; ++i) {
      const double* r = table_row(table, sample_row(table.spec, rng, static_cast<int>(k), val));
      for (int64_t j = 0; j < km; ++j) {
        double v = r[kept[static_cast<size_t>(j)]] / stddev[kept[static_cast<size_t>(j)]];
        s[j] += v;
        sq[j] += v * v;
      }
    }
    double nb = static_cast<double>(opt.vote_batch);
    int64_t best = 0;
    double best_var = 0;
    for (int64_t j = 0; j < km; ++j) {
      double mu = s[j] / nb;
      double var = sq[j] / nb - mu * mu;
      if (j == 0 || var < best_var) {
        best = j;
        best_var = var;
      }
    }
    dim_out = best;
    factor_out = k;
  };

  // majority classifier from training votes
  std::vector<std::vector<int64_t>> counts(static_cast<size_t>(km),
                                           std::vector<int64_t>(static_cast<size_t>(nf), 0));
  for (int64_t t = 0; t < opt.train_votes; ++t) {
    int64_t d, k;
    vote(d, k);
    ++counts[static_cast<size_t>(d)][static_cast<size_t>(k)];
  }
  std::vector<int64_t> assign(static_cast<size_t>(km), 0);
  for (int64_t j = 0; j < km; ++j) {
    const auto& row = counts[static_cast<size_t>(j)];
    assign[static_cast<size_t>(j)] =
        std::distance(row.begin(), std::max_element(row.begin(), row.end()));
  }

  int64_t correct = 0;
  for (int64_t t = 0; t < opt.eval_votes; ++t) {
    int64_t d, k;
    vote(d, k);
    if (assign[static_cast<size_t>(d)] == k) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(opt.eval_votes);
}

// ---- beta-VAE score ----

double betavae_score(const RepresentationTable& table, Rng& rng, const BetaVaeOptions& opt) {
  check_table(table);
  int64_t m = table.dims();
  int64_t nf = table.spec.size();

  auto make_point = [&](double* feature, int& label) {
    int64_t k = rng.uniform_int(nf);
    int64_t c = table.spec.factors[static_cast<size_t>(k)].cardinality;
    for (int64_t j = 0; j < m; ++j) feature[j] = 0;
    for (int64_t p = 0; p < opt.pairs_per_point; ++p) {
      int val = static_cast<int>(rng.uniform_int(c));
      const double* r1 = table_row(table, sample_row(table.spec, rng, static_cast<int>(k), val));
      const double* r2 = table_row(table, sample_row(table.spec, rng, static_cast<int>(k), val));
      for (int64_t j = 0; j < m; ++j) feature[j] += std::abs(r1[j] - r2[j]);
    }
    for (int64_t j = 0; j < m; ++j) feature[j] /= static_cast<double>(opt.pairs_per_point);
    label = static_cast<int>(k);
  };

  MatrixXd xtrain(opt.train_points, m), xeval(opt.eval_points, m);
  std::vector<int> ytrain(static_cast<size_t>(opt.train_points));
  std::vector<int> yeval(static_cast<size_t>(opt.eval_points));
  VectorXd f(m);
  for (int64_t i = 0; i < opt.train_points; ++i) {
    make_point(f.data(), ytrain[static_cast<size_t>(i)]);
    xtrain.row(i) = f;
  }
  for (int64_t i = 0; i < opt.eval_points; ++i) {
    make_point(f.data(), yeval[static_cast<size_t>(i)]);
    xeval.row(i) = f;
  }

  SoftmaxModel model = fit_softmax(xtrain, ytrain, static_cast<int>(nf), 400);
  int64_t correct = 0;
  for (int64_t i = 0; i < opt.eval_points; ++i)
    if (model.predict(xeval.row(i)) == yeval[static_cast<size_t>(i)]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(opt.eval_points);
}

// ---- mutual information gap ----

double mig_score(const RepresentationTable& table, int64_t bins) {
  check_table(table);
  if (bins < 2) throw std::invalid_argument("mig: bins must be >= 2");
  int64_t n = table.rep.rows(), m = table.dims(), nf = table.spec.size();

  // discretize each dim once
  std::vector<std::vector<int>> dim_bins(static_cast<size_t>(m));
  std::vector<double> col(static_cast<size_t>(n));
  for (int64_t j = 0; j < m; ++j) {
    for (int64_t i = 0; i < n; ++i) col[static_cast<size_t>(i)] = table_row(table, i)[j];
    dim_bins[static_cast<size_t>(j)] = quantile_bins(col, bins);
  }
  std::vector<std::vector<int>> labels(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = table.spec.labels_at(i);

  double total = 0;
  int64_t used = 0;
  for (int64_t k = 0; k < nf; ++k) {
    int64_t card = table.spec.factors[static_cast<size_t>(k)].cardinality;
    if (card < 2) continue;
    double hv = std::log(static_cast<double>(card));  // factors are exactly uniform
    double top1 = 0, top2 = 0;
    for (int64_t j = 0; j < m; ++j) {
      // joint histogram of (bin, factor value)
      MatrixXd joint = MatrixXd::Zero(bins, card);
      for (int64_t i = 0; i < n; ++i)
        joint(dim_bins[static_cast<size_t>(j)][static_cast<size_t>(i)],
              labels[static_cast<size_t>(i)][static_cast<size_t>(k)]) += 1.0;
      joint /= static_cast<double>(n);
      VectorXd pb = joint.rowwise().sum(), pv = joint.colwise().sum();
      double mi = 0;
      for (int64_t b = 0; b < bins; ++b)
        for (int64_t v = 0; v < card; ++v) {
          double p = joint(b, v);
          if (p > 0) mi += p * std::log(p / (pb[b] * pv[v]));
        }
      if (mi > top1) {
        top2 = top1;
        top1 = mi;
      } else if (mi > top2) {
        top2 = mi;
      }
    }
    total += (top1 - top2) / hv;
    ++used;
  }
  if (used == 0) throw std::invalid_argument("mig: no informative factors");
  return total / static_cast<double>(used);
}

// ---- DCI disentanglement ----

double dci_from_importance(const Tensor<double>& importance) {
  int64_t m = importance.rows(), nf = importance.cols();
  if (nf < 2) throw std::invalid_argument("dci: need at least two factors");
  double total = 0;
  for (double v : importance.data) {
    if (v < 0) throw std::invalid_argument("dci: importance must be non-negative");
    total += v;
  }
  if (total <= 0) return 0.0;
  double log_f = std::log(static_cast<double>(nf));
  double score = 0;
  for (int64_t j = 0; j < m; ++j) {
    double row_sum = 0;
    for (int64_t k = 0; k < nf; ++k) row_sum += importance.at(j, k);
    if (row_sum <= 0) continue;
    std::vector<double> p(static_cast<size_t>(nf));
    for (int64_t k = 0; k < nf; ++k) p[static_cast<size_t>(k)] = importance.at(j, k) / row_sum;
    double dj = 1.0 - entropy_nats(p) / log_f;
    score += (row_sum / total) * dj;
  }
  return score;
}

DciResult dci_disentanglement(const RepresentationTable& table, Rng& rng,
                              const DciOptions& opt) {
  check_table(table);
  int64_t n = table.rep.rows(), m = table.dims(), nf = table.spec.size();
  if (nf < 2) throw std::invalid_argument("dci: need at least two factors");

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  int64_t n_test = static_cast<int64_t>(std::llround(opt.test_fraction * static_cast<double>(n)));
  n_test = std::max<int64_t>(1, std::min(n - 1, n_test));
  int64_t n_train = n - n_test;

  MatrixXd xtrain(n_train, m), xtest(n_test, m);
  std::vector<std::vector<int>> ltrain(static_cast<size_t>(n_train)),
      ltest(static_cast<size_t>(n_test));
  for (int64_t i = 0; i < n_train; ++i) {
    int64_t rowi = order[static_cast<size_t>(i)];
    const double* r = table_row(table, rowi);
    for (int64_t j = 0; j < m; ++j) xtrain(i, j) = r[j];
    ltrain[static_cast<size_t>(i)] = table.spec.labels_at(rowi);
  }
  for (int64_t i = 0; i < n_test; ++i) {
    int64_t rowi = order[static_cast<size_t>(n_train + i)];
    const double* r = table_row(table, rowi);
    for (int64_t j = 0; j < m; ++j) xtest(i, j) = r[j];
    ltest[static_cast<size_t>(i)] = table.spec.labels_at(rowi);
  }

  VectorXd mu, sd;
  standardize(xtrain, mu, sd);
  for (int64_t j = 0; j < m; ++j) {
    if (sd[j] > 0)
      xtest.col(j) = (xtest.col(j).array() - mu[j]) / sd[j];
    else
      xtest.col(j).setZero();
  }
  double step = 3.6 / largest_gram_eigenvalue(xtrain);

  DciResult out;
  out.importance = Tensor<double>::zeros({m, nf});
  double acc_sum = 0;
  for (int64_t k = 0; k < nf; ++k) {
    int64_t card = table.spec.factors[static_cast<size_t>(k)].cardinality;
    MatrixXd ws(m, card);
    VectorXd bs(card);
    for (int64_t c = 0; c < card; ++c) {
      VectorXd y(n_train);
      for (int64_t i = 0; i < n_train; ++i)
        y[i] = ltrain[static_cast<size_t>(i)][static_cast<size_t>(k)] == c ? 1.0 : 0.0;
      auto [w, b] = fit_l1_logistic(xtrain, y, opt.l1_penalty, opt.iterations, step);
      ws.col(c) = w;
      bs[c] = b;
    }
    for (int64_t j = 0; j < m; ++j)
      out.importance.at(j, k) = ws.row(j).cwiseAbs().mean();
    // one-vs-rest prediction accuracy on held-out rows
    int64_t correct = 0;
    for (int64_t i = 0; i < n_test; ++i) {
      VectorXd s = ws.transpose() * xtest.row(i).transpose() + bs;
      int64_t best = 0;
      for (int64_t c = 1; c < card; ++c)
        if (s[c] > s[best]) best = c;
      if (best == ltest[static_cast<size_t>(i)][static_cast<size_t>(k)]) ++correct;
    }
    acc_sum += static_cast<double>(correct) / static_cast<double>(n_test);
  }
  out.mean_test_accuracy = acc_sum / static_cast<double>(nf);
  // Total importance mass below the floor means the probes found nothing but
  // stray near-zero coefficients; scoring those would let a single speck of
  // weight masquerade as perfect sparsity.
  double total = 0;
  for (double v : out.importance.data) total += v;
  out.degenerate = total < 1e-2;
  out.disentanglement = out.degenerate ? 0.0 : dci_from_importance(out.importance);
  return out;
}

// ---- scene decomposition metrics ----

double ari_foreground(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("ari: length mismatch");
  std::map<int, int> gids, pids;
  std::map<std::pair<int, int>, int64_t> joint;
  std::vector<int64_t> ga, pb;
  int64_t n = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] <= 0) continue;  // foreground pixels only
    int g = dense_id(gids, gt[i]);
    int p = dense_id(pids, pred[i]);
    if (static_cast<size_t>(g) >= ga.size()) ga.push_back(0);
    if (static_cast<size_t>(p) >= pb.size()) pb.push_back(0);
    ++ga[static_cast<size_t>(g)];
    ++pb[static_cast<size_t>(p)];
    ++joint[{g, p}];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("ari: no foreground pixels");
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (const auto& [key, c] : joint) sum_ij += comb2(static_cast<double>(c));
  for (int64_t a : ga) sum_a += comb2(static_cast<double>(a));
  for (int64_t b : pb) sum_b += comb2(static_cast<double>(b));
  double expected = sum_a * sum_b / comb2(static_cast<double>(n));
  double max_index = 0.5 * (sum_a + sum_b);
  double denom = max_index - expected;
  if (denom == 0) return 1.0;  // both partitions trivial and identical
  return (sum_ij - expected) / denom;
}

double msc_score(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("msc: length mismatch");
  if (gt.empty()) throw std::invalid_argument("msc: empty labels");
  std::map<int, int> gids, pids;
  std::map<std::pair<int, int>, int64_t> joint;
  std::vector<int64_t> gsize, psize;
  for (size_t i = 0; i < gt.size(); ++i) {
    int g = dense_id(gids, gt[i]);
    if (static_cast<size_t>(g) >= gsize.size()) gsize.push_back(0);
    ++gsize[static_cast<size_t>(g)];
    if (pred[i] < 0) continue;  // -1 = pixel not covered by any predicted mask
    int p = dense_id(pids, pred[i]);
    if (static_cast<size_t>(p) >= psize.size()) psize.push_back(0);
    ++psize[static_cast<size_t>(p)];
    ++joint[{g, p}];
  }
  double acc = 0;
  for (const auto& [graw, g] : gids) {
    (void)graw;
    double best = 0;
    for (const auto& [praw, p] : pids) {
      (void)praw;
      auto it = joint.find({g, p});
      if (it == joint.end()) continue;
      double inter = static_cast<double>(it->second);
      double uni = static_cast<double>(gsize[static_cast<size_t>(g)] +
                                       psize[static_cast<size_t>(p)]) -
                   inter;
      best = std::max(best, inter / uni);
    }
    acc += best;
  }
  return acc / static_cast<double>(gids.size());
}

}  // namespace vct
