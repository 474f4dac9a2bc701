#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "vct/metrics.hpp"

using namespace vct;

namespace {

FactorSpec make_spec(const std::vector<int64_t>& cards) {
  FactorSpec s;
  for (size_t i = 0; i < cards.size(); ++i)
    s.factors.push_back({"f" + std::to_string(i), cards[i]});
  return s;
}

template <typename F>
RepresentationTable make_table(const FactorSpec& spec, int64_t dims, F fill_row) {
  RepresentationTable t;
  t.spec = spec;
  t.rep = Tensor<double>::zeros({spec.count(), dims});
  for (int64_t i = 0; i < spec.count(); ++i) {
    std::vector<int> labels = spec.labels_at(i);
    fill_row(labels, t.rep.data.data() + i * dims);
  }
  return t;
}

// dim j carries factor j verbatim; any extra dims are constant
RepresentationTable copy_table(const FactorSpec& spec, int64_t extra_constant = 0) {
  int64_t nf = spec.size();
  return make_table(spec, nf + extra_constant, [&](const std::vector<int>& labels, double* row) {
    for (int64_t j = 0; j < nf; ++j) row[j] = static_cast<double>(labels[static_cast<size_t>(j)]);
    for (int64_t j = nf; j < nf + extra_constant; ++j) row[j] = 0.75;
  });
}

RepresentationTable noise_table(const FactorSpec& spec, int64_t dims, uint64_t seed) {
  Rng rng(seed);
  return make_table(spec, dims, [&](const std::vector<int>&, double* row) {
    for (int64_t j = 0; j < dims; ++j) row[j] = rng.normal();
  });
}

RepresentationTable permute_columns(const RepresentationTable& t, const std::vector<int64_t>& perm) {
  RepresentationTable out;
  out.spec = t.spec;
  out.rep = Tensor<double>::zeros(t.rep.shape);
  for (int64_t i = 0; i < t.rep.rows(); ++i)
    for (int64_t j = 0; j < t.dims(); ++j)
      out.rep.at(i, j) = t.rep.at(i, perm[static_cast<size_t>(j)]);
  return out;
}

RepresentationTable affine_columns(const RepresentationTable& t, const std::vector<double>& scale,
                                   const std::vector<double>& shift) {
  RepresentationTable out;
  out.spec = t.spec;
  out.rep = t.rep;
  for (int64_t i = 0; i < t.rep.rows(); ++i)
    for (int64_t j = 0; j < t.dims(); ++j)
      out.rep.at(i, j) = scale[static_cast<size_t>(j)] * t.rep.at(i, j) + shift[static_cast<size_t>(j)];
  return out;
}

}  // namespace

TEST_CASE("slot pca recovers a planted direction and flags constant slots") {
  const int64_t slots = 3, dim = 4, n = 500;
  Rng rng(41);
  std::vector<double> planted = {0.5, -0.5, 0.5, -0.5};  // unit vector
  std::vector<double> coeffs;
  SlotPcaAccumulator acc(slots, dim);
  std::vector<Tensor<float>> batches;
  const int64_t bs = 10;
  std::vector<Eigen::VectorXd> slot2;
  for (int64_t s = 0; s < n / bs; ++s) {
    Tensor<float> tok = Tensor<float>::zeros({bs * slots, dim});
    for (int64_t b = 0; b < bs; ++b) {
      double a = 2.0 * rng.normal();
      coeffs.push_back(a);
      for (int64_t d = 0; d < dim; ++d) {
        tok.at(b * slots + 0, d) = static_cast<float>(1.0 + a * planted[static_cast<size_t>(d)]);
        tok.at(b * slots + 1, d) = 3.25f;  // constant slot
        tok.at(b * slots + 2, d) = static_cast<float>(rng.normal());
      }
      Eigen::VectorXd v(dim);
      for (int64_t d = 0; d < dim; ++d) v[d] = tok.at(b * slots + 2, d);
      slot2.push_back(v);
    }
    acc.add_batch(tok, bs);
    batches.push_back(tok);
  }
  SlotPca pca = acc.finalize();

  CHECK(pca.warnings == 1);
  CHECK(pca.degenerate[1] == 1);
  CHECK(pca.degenerate[0] == 0);

  // slot 0: recovered direction is the planted one up to sign
  double dot = 0;
  for (int64_t d = 0; d < dim; ++d) dot += pca.direction.at(0, d) * planted[static_cast<size_t>(d)];
  CHECK(std::abs(std::abs(dot) - 1.0) < 1e-4);

  // projections equal centered coefficients up to one global sign
  double mean_a = 0;
  for (double a : coeffs) mean_a += a;
  mean_a /= static_cast<double>(coeffs.size());
  double sign = dot > 0 ? 1.0 : -1.0;
  size_t idx = 0;
  double worst = 0;
  for (const Tensor<float>& tok : batches) {
    for (int64_t b = 0; b < bs; ++b) {
      Tensor<float> one = Tensor<float>::zeros({slots, dim});
      for (int64_t r = 0; r < slots; ++r)
        for (int64_t d = 0; d < dim; ++d) one.at(r, d) = tok.at(b * slots + r, d);
      double out[3];
      pca.project(one, out);
      worst = std::max(worst, std::abs(out[0] - sign * (coeffs[idx] - mean_a)));
      CHECK(out[1] == 0.0);  // degenerate slot projects to zero
      ++idx;
    }
  }
  CHECK(worst < 1e-3);  // float tokens limit agreement

  // slot 2: top eigenvalue matches an independently assembled covariance
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(dim);
  for (const auto& v : slot2) mu += v;
  mu /= static_cast<double>(slot2.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& v : slot2) cov += (v - mu) * (v - mu).transpose();
  cov /= static_cast<double>(slot2.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  double oracle = es.eigenvalues()[dim - 1];
  CHECK(pca.top_eigenvalue[2] == doctest::Approx(oracle).epsilon(1e-6));

  // projection variance along the top direction equals the top eigenvalue
  double var = 0;
  idx = 0;
  for (const Tensor<float>& tok : batches) {
    for (int64_t b = 0; b < bs; ++b) {
      Tensor<float> one = Tensor<float>::zeros({slots, dim});
      for (int64_t r = 0; r < slots; ++r)
        for (int64_t d = 0; d < dim; ++d) one.at(r, d) = tok.at(b * slots + r, d);
      double out[3];
      pca.project(one, out);
      var += out[2] * out[2];
    }
  }
  var /= static_cast<double>(n);  // projections are centered by construction
  CHECK(var == doctest::Approx(oracle).epsilon(1e-5));
}

TEST_CASE("slot pca is exactly invariant to batch chunking") {
  const int64_t slots = 2, dim = 3, n = 60;
  Rng rng(7);
  Tensor<float> all = Tensor<float>::zeros({n * slots, dim});
  for (auto& v : all.data) v = static_cast<float>(rng.normal());

  SlotPcaAccumulator one(slots, dim), many(slots, dim);
  one.add_batch(all, n);
  for (int64_t i = 0; i < n; ++i) {
    Tensor<float> t = Tensor<float>::zeros({slots, dim});
    for (int64_t r = 0; r < slots; ++r)
      for (int64_t d = 0; d < dim; ++d) t.at(r, d) = all.at(i * slots + r, d);
    many.add_batch(t, 1);
  }
  SlotPca a = one.finalize(), b = many.finalize();
  for (size_t i = 0; i < a.mean.data.size(); ++i) CHECK(a.mean.data[i] == b.mean.data[i]);
  for (size_t i = 0; i < a.direction.data.size(); ++i)
    CHECK(a.direction.data[i] == b.direction.data[i]);
  for (int64_t m = 0; m < slots; ++m)
    CHECK(a.top_eigenvalue[static_cast<size_t>(m)] == b.top_eigenvalue[static_cast<size_t>(m)]);
}

TEST_CASE("concatenated pca recovers a planted two-direction structure") {
  const int64_t slots = 2, dim = 3, md = 6, n = 400;
  Eigen::VectorXd u0(md), u1(md);
  u0 << 0.5, 0.5, 0.5, 0.5, 0, 0;
  u1 << 0.5, -0.5, 0.5, -0.5, 0, 0;
  Rng rng(11);
  ConcatPcaAccumulator acc(slots, dim);
  std::vector<double> a0s, a1s;
  std::vector<Tensor<float>> images;
  for (int64_t i = 0; i < n; ++i) {
    double a0 = 3.0 * rng.normal(), a1 = 1.0 * rng.normal();
    a0s.push_back(a0);
    a1s.push_back(a1);
    Tensor<float> tok = Tensor<float>::zeros({slots, dim});
    for (int64_t d = 0; d < md; ++d)
      tok.data[static_cast<size_t>(d)] = static_cast<float>(0.2 + a0 * u0[d] + a1 * u1[d]);
    acc.add_batch(tok, 1);
    images.push_back(tok);
  }
  ConcatPca pca = acc.finalize();
  (void)a0s;
  (void)a1s;
  // sample covariance mixes the planted directions slightly, so alignment is
  // checked loosely and exactness against a directly assembled oracle
  double d0 = 0, d1 = 0;
  for (int64_t d = 0; d < md; ++d) {
    d0 += pca.directions.at(0, d) * u0[d];
    d1 += pca.directions.at(1, d) * u1[d];
  }
  CHECK(std::abs(d0) > 0.995);
  CHECK(std::abs(d1) > 0.995);

  Eigen::MatrixXd x(n, md);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t d = 0; d < md; ++d)
      x(i, d) = static_cast<double>(images[static_cast<size_t>(i)].data[static_cast<size_t>(d)]);
  Eigen::VectorXd mu = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  for (int64_t m = 0; m < slots; ++m) {
    Eigen::VectorXd oracle = es.eigenvectors().col(md - 1 - m);
    double dot = 0;
    for (int64_t d = 0; d < md; ++d) dot += oracle[d] * pca.directions.at(m, d);
    CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-8));
  }
  // projections equal the oracle's principal scores up to the fixed sign
  double worst = 0;
  for (int64_t i = 0; i < n; ++i) {
    double out[2];
    pca.project(images[static_cast<size_t>(i)], out);
    for (int64_t m = 0; m < slots; ++m) {
      Eigen::VectorXd dir = es.eigenvectors().col(md - 1 - m);
      double ref = centered.row(i).dot(dir);
      worst = std::max(worst, std::min(std::abs(out[m] - ref), std::abs(out[m] + ref)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("factorvae score: factor-copy table scores exactly 1") {
  FactorSpec spec = make_spec({3, 8, 4, 8, 8, 4});
  RepresentationTable t = copy_table(spec);
  Rng rng(101);
  CHECK(factorvae_score(t, rng) == 1.0);

  // constant dims are dropped by the collapse filter and change nothing
  RepresentationTable tc = copy_table(spec, 2);
  Rng rng2(101);
  CHECK(factorvae_score(tc, rng2) == 1.0);
}

TEST_CASE("factorvae score: noise representation scores near chance") {
  FactorSpec spec = make_spec({8, 8, 5, 8});
  RepresentationTable t = noise_table(spec, 6, 55);
  Rng rng(202);
  double s = factorvae_score(t, rng);
  CHECK(std::abs(s - 0.25) < 0.1);
}

TEST_CASE("factorvae score is invariant to permuting representation dims") {
  FactorSpec spec = make_spec({4, 5, 3});
  RepresentationTable t = noise_table(spec, 5, 9);
  RepresentationTable p = permute_columns(t, {3, 0, 4, 1, 2});
  Rng r1(77), r2(77);
  CHECK(factorvae_score(t, r1) == factorvae_score(p, r2));
}

TEST_CASE("betavae score: factor-copy table scores exactly 1") {
  FactorSpec spec = make_spec({3, 8, 4, 8, 8, 4});
  RepresentationTable t = copy_table(spec);
  Rng rng(303);
  CHECK(betavae_score(t, rng) == 1.0);
}

TEST_CASE("betavae score: noise representation scores near chance") {
  FactorSpec spec = make_spec({8, 8, 5, 8});
  RepresentationTable t = noise_table(spec, 6, 56);
  Rng rng(404);
  double s = betavae_score(t, rng);
  CHECK(std::abs(s - 0.25) < 0.1);
}

TEST_CASE("betavae score is invariant to permuting representation dims") {
  FactorSpec spec = make_spec({4, 5, 3});
  RepresentationTable t = noise_table(spec, 5, 10);
  RepresentationTable p = permute_columns(t, {2, 4, 0, 3, 1});
  Rng r1(88), r2(88);
  double a = betavae_score(t, r1), b = betavae_score(p, r2);
  CHECK(std::abs(a - b) <= 1e-3);  // summation-order ulps can flip rare argmax ties
}

TEST_CASE("mig: factor-copy table scores 1, duplicated dims score 0") {
  FactorSpec spec = make_spec({3, 8, 4, 8, 8, 4});
  CHECK(mig_score(copy_table(spec)) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(mig_score(copy_table(spec, 2)) == doctest::Approx(1.0).epsilon(1e-6));

  // every informative dim duplicated: top-two MI tie, gap collapses to zero
  FactorSpec small = make_spec({4, 5});
  RepresentationTable dup = make_table(small, 4, [&](const std::vector<int>& l, double* row) {
    row[0] = l[0];
    row[1] = l[0];
    row[2] = l[1];
    row[3] = l[1];
  });
  CHECK(mig_score(dup) == 0.0);

  // all-constant representation carries no information at all
  RepresentationTable flat = make_table(small, 3, [&](const std::vector<int>&, double* row) {
    row[0] = 1.0;
    row[1] = -2.0;
    row[2] = 0.0;
  });
  CHECK(mig_score(flat) == 0.0);
}

TEST_CASE("mig: noise representation scores near zero") {
  FactorSpec spec = make_spec({8, 8, 5, 8});
  CHECK(mig_score(noise_table(spec, 6, 57)) < 0.05);
}

TEST_CASE("mig is invariant to dim permutation and per-dim affine maps") {
  FactorSpec spec = make_spec({4, 5, 3});
  RepresentationTable t = noise_table(spec, 5, 12);
  double base = mig_score(t);

  RepresentationTable p = permute_columns(t, {4, 2, 0, 1, 3});
  CHECK(mig_score(p) == base);

  RepresentationTable a =
      affine_columns(t, {2.5, -1.75, 0.001, -3.0, 10.0}, {1.0, -4.0, 0.25, 0.0, 100.0});
  CHECK(mig_score(a) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("dci aggregation formula on hand importance matrices") {
  Tensor<double> identity({2, 2}, {1.0, 0.0, 0.0, 1.0});
  CHECK(dci_from_importance(identity) == 1.0);

  Tensor<double> uniform({2, 2}, {1.0, 1.0, 1.0, 1.0});
  CHECK(std::abs(dci_from_importance(uniform)) <= 1e-12);

  // one perfectly factor-specific dim with weight 1/3 of the mass
  Tensor<double> block({2, 2}, {1.0, 1.0, 0.0, 1.0});
  CHECK(dci_from_importance(block) == 1.0 / 3.0);

  Tensor<double> zeros = Tensor<double>::zeros({3, 2});
  CHECK(dci_from_importance(zeros) == 0.0);

  // scale invariance of the formula itself
  Tensor<double> scaled({2, 2}, {5.0, 5.0, 0.0, 5.0});
  CHECK(dci_from_importance(scaled) == 1.0 / 3.0);

  Tensor<double> negative({2, 2}, {1.0, -0.5, 0.0, 1.0});
  CHECK_THROWS_AS(dci_from_importance(negative), std::invalid_argument);
}

TEST_CASE("dci: factor-copy table scores 1 with exactly sparse importance") {
  FactorSpec spec = make_spec({3, 8, 4, 8, 8, 4});
  RepresentationTable t = copy_table(spec);
  Rng rng(505);
  DciResult r = dci_disentanglement(t, rng);
  CHECK(r.disentanglement == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(!r.degenerate);
  for (int64_t j = 0; j < 6; ++j)
    for (int64_t k = 0; k < 6; ++k) {
      if (j == k) {
        CHECK(r.importance.at(j, k) > 0.0);
      } else {
        CHECK(r.importance.at(j, k) == 0.0);  // L1 keeps uninformative dims at zero
      }
    }
  CHECK(r.mean_test_accuracy > 0.3);
}

TEST_CASE("dci: noise representation is degenerate and scores below 0.1") {
  FactorSpec spec = make_spec({8, 8, 5, 8});
  RepresentationTable t = noise_table(spec, 6, 58);
  Rng rng(606);
  DciResult r = dci_disentanglement(t, rng);
  CHECK(r.degenerate);
  CHECK(r.disentanglement == 0.0);
  CHECK(r.disentanglement < 0.1);
}

TEST_CASE("dci is invariant to dim permutation and per-dim affine maps") {
  FactorSpec spec = make_spec({4, 3, 4});
  RepresentationTable t = noise_table(spec, 4, 13);
  Rng r1(909);
  double base = dci_disentanglement(t, r1).disentanglement;

  RepresentationTable p = permute_columns(t, {3, 1, 0, 2});
  Rng r2(909);
  CHECK(dci_disentanglement(p, r2).disentanglement == doctest::Approx(base).epsilon(1e-9));

  RepresentationTable a = affine_columns(t, {3.0, -0.5, 12.0, 0.01}, {2.0, 0.0, -7.0, 1.0});
  Rng r3(909);
  CHECK(dci_disentanglement(a, r3).disentanglement == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("ari: foreground-restricted adjusted Rand index") {
  // identical partitions up to label names
  std::vector<int> gt = {0, 1, 1, 2, 2, 0};
  std::vector<int> pred = {9, 5, 5, 7, 7, 3};
  CHECK(ari_foreground(pred, gt) == 1.0);

  // background pixels are excluded: disagreement there changes nothing
  std::vector<int> pred_bg = {1, 5, 5, 7, 7, 2};
  CHECK(ari_foreground(pred_bg, gt) == 1.0);

  // one predicted cluster against two equal ground-truth objects
  std::vector<int> gt2 = {1, 1, 1, 1, 2, 2, 2, 2};
  std::vector<int> one(8, 4);
  CHECK(ari_foreground(one, gt2) == 0.0);

  CHECK_THROWS_AS(ari_foreground({1, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(ari_foreground({1, 2}, {0, 0}), std::invalid_argument);
}

TEST_CASE("ari: random labels score near zero on average") {
  const int64_t n = 100;
  std::vector<int> gt(n);
  for (int64_t i = 0; i < n; ++i) gt[static_cast<size_t>(i)] = 1 + static_cast<int>(i / 50);
  double acc = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(900 + seed);
    std::vector<int> pred(n);
    for (auto& v : pred) v = static_cast<int>(rng.uniform_int(4));
    acc += ari_foreground(pred, gt);
  }
  CHECK(std::abs(acc / 5.0) < 0.05);
}

TEST_CASE("msc: mask coverage oracle cases") {
  // identical partitions, background included as a region
  std::vector<int> gt = {0, 0, 1, 1, 2};
  std::vector<int> same = {5, 5, 8, 8, 9};
  CHECK(msc_score(same, gt) == 1.0);

  // two equal masks with half overlap: both regions reach IoU exactly 1/3
  std::vector<int> gt2 = {1, 1, 0, 0};
  std::vector<int> half = {-1, 2, 2, -1};
  CHECK(msc_score(half, gt2) == 1.0 / 3.0);

  // no predicted masks at all
  std::vector<int> none(4, -1);
  CHECK(msc_score(none, gt2) == 0.0);

  // a single region split evenly in two scores 1/2
  std::vector<int> gt3 = {3, 3, 3, 3};
  std::vector<int> split = {0, 0, 1, 1};
  CHECK(msc_score(split, gt3) == 0.5);

  CHECK_THROWS_AS(msc_score({1}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(msc_score({}, {}), std::invalid_argument);
}
