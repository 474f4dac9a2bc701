#include "vct/manipulation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vct {

namespace {

void check_tokens(const VctModel<float>& model, const Tensor<float>& c, const char* what) {
  const ExperimentConfig& cfg = model.config();
  if (c.rows() != cfg.concepts || c.cols() != cfg.dim)
    throw std::invalid_argument(std::string(what) + ": expected a {M, D} token set, got " +
                                shape_str(c.shape));
}

// Otsu's threshold over values bucketed into 256 bins.
double otsu_threshold(const std::vector<float>& values) {
  float lo = values[0], hi = values[0];
  for (float v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) return lo;
  const int bins = 256;
  std::vector<int64_t> hist(bins, 0);
  double scale = (bins - 1) / static_cast<double>(hi - lo);
  for (float v : values) ++hist[static_cast<size_t>((v - lo) * scale)];
  int64_t total = static_cast<int64_t>(values.size());
  double sum_all = 0;
  for (int b = 0; b < bins; ++b) sum_all += b * static_cast<double>(hist[static_cast<size_t>(b)]);
  double sum_bg = 0, best_var = -1;
  int64_t w_bg = 0;
  int best_bin = 0;
  for (int b = 0; b < bins; ++b) {
    w_bg += hist[static_cast<size_t>(b)];
    if (w_bg == 0) continue;
    int64_t w_fg = total - w_bg;
    if (w_fg == 0) break;
    sum_bg += b * static_cast<double>(hist[static_cast<size_t>(b)]);
    double mu_bg = sum_bg / static_cast<double>(w_bg);
    double mu_fg = (sum_all - sum_bg) / static_cast<double>(w_fg);
    double var = static_cast<double>(w_bg) * static_cast<double>(w_fg) * (mu_bg - mu_fg) *
                 (mu_bg - mu_fg);
    if (var > best_var) {
      best_var = var;
      best_bin = b;
    }
  }
  return lo + (best_bin + 0.5) / scale;
}

}  // namespace

SlotProfileAccumulator::SlotProfileAccumulator(int64_t slots, int64_t dim)
    : slots_(slots),
      dim_(dim),
      sum_(Tensor<double>::zeros({slots, dim})),
      sum_sq_(Tensor<double>::zeros({slots, dim})) {
  if (slots < 1 || dim < 1) throw std::invalid_argument("slot profile: bad sizes");
}

void SlotProfileAccumulator::add_batch(const Tensor<float>& tokens, int64_t batch) {
  if (tokens.rows() != batch * slots_ || tokens.cols() != dim_)
    throw std::invalid_argument("slot profile: tokens shape mismatch");
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t m = 0; m < slots_; ++m) {
      const float* t = tokens.data.data() + (b * slots_ + m) * dim_;
      for (int64_t d = 0; d < dim_; ++d) {
        double v = t[d];
        sum_.at(m, d) += v;
        sum_sq_.at(m, d) += v * v;
      }
    }
  n_ += batch;
}

SlotProfile SlotProfileAccumulator::finalize(int64_t min_images) const {
  if (n_ < min_images)
    throw std::invalid_argument("slot profile: needs at least " + std::to_string(min_images) +
                                " images, saw " + std::to_string(n_));
  SlotProfile out;
  out.slots = slots_;
  out.dim = dim_;
  out.images = n_;
  out.mean = Tensor<float>::zeros({slots_, dim_});
  out.activity.assign(static_cast<size_t>(slots_), 0.0);
  double n = static_cast<double>(n_);
  for (int64_t m = 0; m < slots_; ++m) {
    double var_sum = 0;
    for (int64_t d = 0; d < dim_; ++d) {
      double mu = sum_.at(m, d) / n;
      out.mean.at(m, d) = static_cast<float>(mu);
      var_sum += std::max(0.0, sum_sq_.at(m, d) / n - mu * mu);
    }
    out.activity[static_cast<size_t>(m)] = std::sqrt(var_sum);
  }
  return out;
}

Tensor<float> swap_and_decode(VctModel<float>& model, const Tensor<float>& ca,
                              const Tensor<float>& cb, const std::vector<int64_t>& slots) {
  check_tokens(model, ca, "swap_and_decode");
  check_tokens(model, cb, "swap_and_decode");
  int64_t m = ca.rows(), d = ca.cols();
  Tensor<float> c = ca;
  for (int64_t l : slots) {
    if (l < 0 || l >= m) throw std::invalid_argument("swap_and_decode: slot out of range");
    for (int64_t j = 0; j < d; ++j) c.at(l, j) = cb.at(l, j);
  }
  return model.decode_tensor(c, 1);
}

Tensor<float> recombine(VctModel<float>& model, const std::vector<Tensor<float>>& sources,
                        const std::vector<int64_t>& assignment) {
  const ExperimentConfig& cfg = model.config();
  int64_t m = cfg.concepts, d = cfg.dim;
  if (sources.empty()) throw std::invalid_argument("recombine: no sources");
  for (const Tensor<float>& s : sources) check_tokens(model, s, "recombine");
  if (static_cast<int64_t>(assignment.size()) != m)
    throw std::invalid_argument("recombine: assignment must name a source for every slot");
  Tensor<float> c = Tensor<float>::zeros({m, d});
  for (int64_t slot = 0; slot < m; ++slot) {
    int64_t src = assignment[static_cast<size_t>(slot)];
    if (src < 0 || src >= static_cast<int64_t>(sources.size()))
      throw std::invalid_argument("recombine: source index out of range");
    for (int64_t j = 0; j < d; ++j)
      c.at(slot, j) = sources[static_cast<size_t>(src)].at(slot, j);
  }
  return model.decode_tensor(c, 1);
}

std::vector<Tensor<float>> interpolate_slot(VctModel<float>& model, const Tensor<float>& c,
                                            int64_t slot, const Tensor<float>& target_row,
                                            int64_t steps) {
  check_tokens(model, c, "interpolate_slot");
  const ExperimentConfig& cfg = model.config();
  if (slot < 0 || slot >= cfg.concepts)
    throw std::invalid_argument("interpolate_slot: slot out of range");
  if (target_row.numel() != cfg.dim)
    throw std::invalid_argument("interpolate_slot: target row must have D entries");
  if (steps < 2) throw std::invalid_argument("interpolate_slot: needs at least 2 steps");
  std::vector<Tensor<float>> out;
  out.reserve(static_cast<size_t>(steps));
  for (int64_t s = 0; s < steps; ++s) {
    float t = static_cast<float>(s) / static_cast<float>(steps - 1);
    Tensor<float> ci = c;
    for (int64_t j = 0; j < cfg.dim; ++j)
      ci.at(slot, j) = (1.0f - t) * c.at(slot, j) + t * target_row[j];
    out.push_back(model.decode_tensor(ci, 1));
  }
  return out;
}

MaskExtraction extract_masks(VctModel<float>& model, const Tensor<float>& image,
                             const SlotProfile& profile, double tau) {
  const ExperimentConfig& cfg = model.config();
  if (!profile.fitted()) throw std::invalid_argument("extract_masks: unfitted slot profile");
  if (profile.slots != cfg.concepts || profile.dim != cfg.dim)
    throw std::invalid_argument("extract_masks: profile does not match the model");
  int64_t s = cfg.image_size, m = cfg.concepts;
  int64_t pixels = s * s;
  if (image.numel() != pixels * 3)
    throw std::invalid_argument("extract_masks: image pixel count mismatch");

  Tensor<float> flat = image.reshaped({1, pixels * 3});
  Tensor<float> c = model.encode_tensor(flat, 1);
  Tensor<float> base = model.decode_tensor(c, 1);

  MaskExtraction out;
  out.saliency.reserve(static_cast<size_t>(m));
  for (int64_t k = 0; k < m; ++k) {
    Tensor<float> ck = c;
    for (int64_t j = 0; j < cfg.dim; ++j) ck.at(k, j) = profile.mean.at(k, j);
    Tensor<float> dec = model.decode_tensor(ck, 1);
    Tensor<float> sal = Tensor<float>::zeros({s, s});
    for (int64_t p = 0; p < pixels; ++p) {
      float acc = 0;
      for (int64_t ch = 0; ch < 3; ++ch)
        acc += std::abs(base[p * 3 + ch] - dec[p * 3 + ch]);
      sal[p] = acc;
    }
    out.saliency.push_back(std::move(sal));
  }

  std::vector<float> peak(static_cast<size_t>(pixels), 0.0f);
  std::vector<int> arg(static_cast<size_t>(pixels), 0);
  for (int64_t p = 0; p < pixels; ++p) {
    float best = out.saliency[0][p];
    int best_k = 0;
    for (int64_t k = 1; k < m; ++k)
      if (out.saliency[static_cast<size_t>(k)][p] > best) {
        best = out.saliency[static_cast<size_t>(k)][p];
        best_k = static_cast<int>(k);
      }
    peak[static_cast<size_t>(p)] = best;
    arg[static_cast<size_t>(p)] = best_k;
  }

  double thr = tau;
  bool all_foreground = true;
  for (float v : peak)
    if (!(v > thr)) {
      all_foreground = false;
      break;
    }
  if (all_foreground) {
    // tau separates nothing; split the saliency peaks where Otsu puts the gap
    thr = otsu_threshold(peak);
    out.otsu_fallback = true;
  }
  out.threshold_used = thr;

  out.assignment.assign(static_cast<size_t>(pixels), -1);
  out.masks.assign(static_cast<size_t>(m), std::vector<uint8_t>(static_cast<size_t>(pixels), 0));
  for (int64_t p = 0; p < pixels; ++p) {
    if (peak[static_cast<size_t>(p)] > thr) {
      int k = arg[static_cast<size_t>(p)];
      out.assignment[static_cast<size_t>(p)] = k;
      out.masks[static_cast<size_t>(k)][static_cast<size_t>(p)] = 1;
    }
  }
  return out;
}

}  // namespace vct
