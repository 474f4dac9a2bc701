#include "vct/datasets.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "vct/image_io.hpp"

namespace vct {

int64_t FactorSpec::count() const {
  int64_t n = 1;
  for (const Factor& f : factors) n *= f.cardinality;
  return n;
}

std::vector<int> FactorSpec::labels_at(int64_t index) const {
  if (index < 0 || index >= count()) throw std::out_of_range("factor index out of range");
  std::vector<int> out(factors.size());
  for (int64_t k = size() - 1; k >= 0; --k) {
    out[static_cast<size_t>(k)] = static_cast<int>(index % factors[static_cast<size_t>(k)].cardinality);
    index /= factors[static_cast<size_t>(k)].cardinality;
  }
  return out;
}

int64_t FactorSpec::index_of(const std::vector<int>& labels) const {
  validate(labels);
  int64_t idx = 0;
  for (int64_t k = 0; k < size(); ++k)
    idx = idx * factors[static_cast<size_t>(k)].cardinality + labels[static_cast<size_t>(k)];
  return idx;
}

void FactorSpec::validate(const std::vector<int>& labels) const {
  if (static_cast<int64_t>(labels.size()) != size())
    throw std::invalid_argument("label vector length does not match factor count");
  for (int64_t k = 0; k < size(); ++k) {
    int v = labels[static_cast<size_t>(k)];
    if (v < 0 || v >= factors[static_cast<size_t>(k)].cardinality)
      throw std::invalid_argument("label out of range for factor " + factors[static_cast<size_t>(k)].name);
  }
}

FactorSpec minishapes_factors() {
  return FactorSpec{{{"shape", 3},
                     {"object-hue", 8},
                     {"scale", 4},
                     {"pos-x", 8},
                     {"pos-y", 8},
                     {"background-hue", 4}}};
}

namespace {

struct Rgb {
  float r, g, b;
};

Rgb hsv_to_rgb(float h, float s, float v) {
  h = h - std::floor(h);
  float f6 = h * 6.0f;
  int i = static_cast<int>(f6);
  float f = f6 - static_cast<float>(i);
  float p = v * (1.0f - s);
  float q = v * (1.0f - s * f);
  float t = v * (1.0f - s * (1.0f - f));
  switch (i % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// vivid object palette, pastel background palette (never identical colors)
Rgb object_color(int hue) { return hsv_to_rgb(static_cast<float>(hue) / 8.0f, 0.95f, 0.90f); }
Rgb background_color(int hue) {
  return hsv_to_rgb((static_cast<float>(hue) + 0.25f) / 4.0f, 0.30f, 0.95f);
}

// point-in-shape test, coordinates relative to the center in pixel units
bool inside_shape(int shape, float dx, float dy, float r) {
  switch (shape) {
    case 0: {  // square
      float a = 0.886f * r;
      return std::abs(dx) <= a && std::abs(dy) <= a;
    }
    case 1:  // circle
      return dx * dx + dy * dy <= r * r;
    default: {  // upward equilateral triangle, circumradius 1.15 r
      float R = 1.15f * r;
      // vertices (0,-R), (+R*sqrt(3)/2, R/2), (-R*sqrt(3)/2, R/2); inside =
      // left of every directed edge
      const float sx = R * 0.8660254037844386f, sy = R * 0.5f;
      float e0 = (sx - 0.0f) * (dy + R) - (sy + R) * dx;          // (0,-R) -> (sx, sy)
      float e1 = (-sx - sx) * (dy - sy) - 0.0f * (dx - sx);       // (sx, sy) -> (-sx, sy)
      float e2 = (0.0f + sx) * (dy - sy) - (-R - sy) * (dx + sx); // (-sx, sy) -> (0,-R)
      return e0 >= 0 && e1 >= 0 && e2 >= 0;
    }
  }
}

constexpr int kAA = 4;  // 4x4 subsamples per pixel

float pixel_coverage(int shape, float cx, float cy, float r, int64_t px, int64_t py) {
  int hits = 0;
  for (int sy = 0; sy < kAA; ++sy)
    for (int sx = 0; sx < kAA; ++sx) {
      float x = static_cast<float>(px) + (static_cast<float>(sx) + 0.5f) / kAA;
      float y = static_cast<float>(py) + (static_cast<float>(sy) + 0.5f) / kAA;
      if (inside_shape(shape, x - cx, y - cy, r)) ++hits;
    }
  return static_cast<float>(hits) / static_cast<float>(kAA * kAA);
}

}  // namespace

Tensor<float> render_minishapes(const std::vector<int>& labels, int64_t size,
                                Tensor<float>* coverage) {
  minishapes_factors().validate(labels);
  if (size < 8) throw std::invalid_argument("render size too small");
  const int shape = labels[0], ohue = labels[1], scale = labels[2];
  const int posx = labels[3], posy = labels[4], bhue = labels[5];

  const float S = static_cast<float>(size);
  const float r = S * (0.08f + 0.03f * static_cast<float>(scale));
  const float cx = S * (0.22f + 0.56f * static_cast<float>(posx) / 7.0f);
  const float cy = S * (0.22f + 0.56f * static_cast<float>(posy) / 7.0f);
  const Rgb fg = object_color(ohue);
  const Rgb bg = background_color(bhue);

  Tensor<float> img = Tensor<float>::zeros({size, size, 3});
  if (coverage) *coverage = Tensor<float>::zeros({size, size});
  // the shape fits in a disc of radius 1.2 r; skip pixels clearly outside
  const int64_t reach = static_cast<int64_t>(1.2f * r) + 2;
  const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy) - reach);
  const int64_t y1 = std::min<int64_t>(size, static_cast<int64_t>(cy) + reach + 1);
  const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx) - reach);
  const int64_t x1 = std::min<int64_t>(size, static_cast<int64_t>(cx) + reach + 1);

  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      float cov = 0.0f;
      if (y >= y0 && y < y1 && x >= x0 && x < x1)
        cov = pixel_coverage(shape, cx, cy, r, x, y);
      float* px = &img.data[static_cast<size_t>((y * size + x) * 3)];
      px[0] = bg.r + cov * (fg.r - bg.r);
      px[1] = bg.g + cov * (fg.g - bg.g);
      px[2] = bg.b + cov * (fg.b - bg.b);
      if (coverage) coverage->data[static_cast<size_t>(y * size + x)] = cov;
    }
  return img;
}

SceneSpec sample_scene(Rng& rng, int64_t min_objects, int64_t max_objects) {
  if (min_objects < 0 || max_objects > 4 || min_objects > max_objects)
    throw std::invalid_argument("scene object count range must satisfy 0 <= min <= max <= 4");
  SceneSpec spec;
  spec.background_hue = static_cast<int>(rng.uniform_int(4));
  const int64_t k = min_objects + rng.uniform_int(max_objects - min_objects + 1);
  for (int64_t i = 0; i < k; ++i) {
    SceneObject o;
    o.shape = static_cast<int>(rng.uniform_int(3));
    o.hue = static_cast<int>(rng.uniform_int(8));
    o.x = 0.18 + 0.64 * rng.uniform();
    o.y = 0.18 + 0.64 * rng.uniform();
    spec.objects.push_back(o);
  }
  return spec;
}

SceneRender render_miniscene(const SceneSpec& spec, int64_t size) {
  if (size < 8) throw std::invalid_argument("render size too small");
  if (spec.objects.size() > 4) throw std::invalid_argument("at most 4 scene objects");
  if (spec.background_hue < 0 || spec.background_hue >= 4)
    throw std::invalid_argument("background hue out of range");

  SceneRender out;
  out.image = Tensor<float>::zeros({size, size, 3});
  out.instance.assign(static_cast<size_t>(size * size), 0);
  const Rgb bg = background_color(spec.background_hue);
  for (int64_t p = 0; p < size * size; ++p) {
    out.image.data[static_cast<size_t>(3 * p)] = bg.r;
    out.image.data[static_cast<size_t>(3 * p + 1)] = bg.g;
    out.image.data[static_cast<size_t>(3 * p + 2)] = bg.b;
  }

  const float S = static_cast<float>(size);
  const float r = 0.13f * S;
  for (size_t i = 0; i < spec.objects.size(); ++i) {
    const SceneObject& o = spec.objects[i];
    if (o.shape < 0 || o.shape >= 3 || o.hue < 0 || o.hue >= 8 || o.x < 0 || o.x > 1 ||
        o.y < 0 || o.y > 1)
      throw std::invalid_argument("scene object fields out of range");
    const float cx = static_cast<float>(o.x) * S, cy = static_cast<float>(o.y) * S;
    const Rgb fg = object_color(o.hue);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        // hard edge: the pixel belongs to the topmost shape covering its center
        float px = static_cast<float>(x) + 0.5f, py = static_cast<float>(y) + 0.5f;
        if (!inside_shape(o.shape, px - cx, py - cy, r)) continue;
        int64_t p = y * size + x;
        out.image.data[static_cast<size_t>(3 * p)] = fg.r;
        out.image.data[static_cast<size_t>(3 * p + 1)] = fg.g;
        out.image.data[static_cast<size_t>(3 * p + 2)] = fg.b;
        out.instance[static_cast<size_t>(p)] = static_cast<int>(i) + 1;
      }
  }
  return out;
}

std::vector<std::vector<int>> sample_fixed_factor_labels(const FactorSpec& spec,
                                                         int64_t fixed_factor, Rng& rng,
                                                         int64_t n) {
  if (fixed_factor < 0 || fixed_factor >= spec.size())
    throw std::out_of_range("fixed factor index out of range");
  const int fixed_value =
      static_cast<int>(rng.uniform_int(spec.factors[static_cast<size_t>(fixed_factor)].cardinality));
  std::vector<std::vector<int>> labels(static_cast<size_t>(n));
  for (auto& row : labels) {
    row.resize(static_cast<size_t>(spec.size()));
    for (int64_t k = 0; k < spec.size(); ++k)
      row[static_cast<size_t>(k)] =
          k == fixed_factor
              ? fixed_value
              : static_cast<int>(rng.uniform_int(spec.factors[static_cast<size_t>(k)].cardinality));
  }
  return labels;
}

Tensor<float> render_label_batch(const std::vector<std::vector<int>>& labels, int64_t size) {
  const int64_t B = static_cast<int64_t>(labels.size());
  Tensor<float> out = Tensor<float>::zeros({B, size * size * 3});
  for (int64_t i = 0; i < B; ++i) {
    Tensor<float> img = render_minishapes(labels[static_cast<size_t>(i)], size);
    std::copy(img.data.begin(), img.data.end(),
              out.data.begin() + static_cast<int64_t>(i * size * size * 3));
  }
  return out;
}

ShapesStream::ShapesStream(uint64_t seed, int64_t image_size)
    : seed_(seed), size_(image_size), spec_(minishapes_factors()), total_(spec_.count()) {}

void ShapesStream::ensure_epoch(int64_t e) {
  if (epoch_ == e) return;
  perm_.resize(static_cast<size_t>(total_));
  for (int64_t i = 0; i < total_; ++i) perm_[static_cast<size_t>(i)] = i;
  Rng rng(mix_seed(seed_, "epoch", static_cast<uint64_t>(e)));
  rng.shuffle(perm_);
  epoch_ = e;
}

int64_t ShapesStream::label_index_at(int64_t pos) {
  if (pos < 0) throw std::out_of_range("negative stream position");
  ensure_epoch(pos / total_);
  return perm_[static_cast<size_t>(pos % total_)];
}

void ShapesStream::batch(int64_t step, int64_t batch_size, Tensor<float>& images,
                         std::vector<std::vector<int>>* labels) {
  images = Tensor<float>::zeros({batch_size, size_ * size_ * 3});
  if (labels) labels->assign(static_cast<size_t>(batch_size), {});
  for (int64_t i = 0; i < batch_size; ++i) {
    int64_t idx = label_index_at(step * batch_size + i);
    std::vector<int> lab = spec_.labels_at(idx);
    Tensor<float> img = render_minishapes(lab, size_);
    std::copy(img.data.begin(), img.data.end(),
              images.data.begin() + static_cast<int64_t>(i * size_ * size_ * 3));
    if (labels) (*labels)[static_cast<size_t>(i)] = std::move(lab);
  }
}

SceneStream::SceneStream(uint64_t seed, int64_t image_size, int64_t min_objects,
                         int64_t max_objects)
    : seed_(seed), size_(image_size), kmin_(min_objects), kmax_(max_objects) {
  if (min_objects < 0 || max_objects > 4 || min_objects > max_objects)
    throw std::invalid_argument("scene object count range must satisfy 0 <= min <= max <= 4");
}

SceneSpec SceneStream::spec_at(int64_t index) const {
  Rng rng(mix_seed(seed_, "scene", static_cast<uint64_t>(index)));
  return sample_scene(rng, kmin_, kmax_);
}

SceneRender SceneStream::render_at(int64_t index) const {
  return render_miniscene(spec_at(index), size_);
}

void SceneStream::batch(int64_t step, int64_t batch_size, Tensor<float>& images,
                        std::vector<SceneRender>* renders) {
  images = Tensor<float>::zeros({batch_size, size_ * size_ * 3});
  if (renders) renders->clear();
  for (int64_t i = 0; i < batch_size; ++i) {
    SceneRender r = render_at(step * batch_size + i);
    std::copy(r.image.data.begin(), r.image.data.end(),
              images.data.begin() + static_cast<int64_t>(i * size_ * size_ * 3));
    if (renders) renders->push_back(std::move(r));
  }
}

void export_minishapes(const std::string& dir, int64_t image_size) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  FactorSpec spec = minishapes_factors();

  std::ofstream manifest(dir + "/manifest.txt");
  manifest << "dataset minishapes\n"
           << "image_size " << image_size << "\n"
           << "count " << spec.count() << "\n"
           << "order canonical\n";
  for (const Factor& f : spec.factors) manifest << "factor " << f.name << " " << f.cardinality << "\n";

  std::ofstream images(dir + "/images.u8", std::ios::binary);
  std::ofstream labels(dir + "/labels.txt");
  for (int64_t i = 0; i < spec.count(); ++i) {
    std::vector<int> lab = spec.labels_at(i);
    Tensor<float> img = render_minishapes(lab, image_size);
    std::vector<uint8_t> bytes = quantize_u8(img);
    images.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
    for (size_t k = 0; k < lab.size(); ++k) labels << (k ? " " : "") << lab[k];
    labels << "\n";
  }
}

void export_miniscene(const std::string& dir, int64_t image_size, uint64_t seed, int64_t count,
                      int64_t min_objects, int64_t max_objects) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  SceneStream stream(seed, image_size, min_objects, max_objects);

  std::ofstream manifest(dir + "/manifest.txt");
  manifest << "dataset miniscene\n"
           << "image_size " << image_size << "\n"
           << "count " << count << "\n"
           << "seed " << seed << "\n"
           << "min_objects " << min_objects << "\n"
           << "max_objects " << max_objects << "\n";

  std::ofstream images(dir + "/images.u8", std::ios::binary);
  std::ofstream masks(dir + "/masks.u8", std::ios::binary);
  std::ofstream labels(dir + "/labels.txt");
  for (int64_t i = 0; i < count; ++i) {
    SceneRender r = stream.render_at(i);
    SceneSpec spec = stream.spec_at(i);
    std::vector<uint8_t> bytes = quantize_u8(r.image);
    images.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
    std::vector<uint8_t> mk(r.instance.begin(), r.instance.end());
    masks.write(reinterpret_cast<const char*>(mk.data()), static_cast<std::streamsize>(mk.size()));
    labels << spec.objects.size() << " " << spec.background_hue;
    for (const SceneObject& o : spec.objects)
      labels << " " << o.shape << " " << o.hue << " " << static_cast<int>(o.x * 1000) << " "
             << static_cast<int>(o.y * 1000);
    labels << "\n";
  }
}

}  // namespace vct
