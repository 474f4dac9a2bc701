#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vct/rng.hpp"
#include "vct/tensor.hpp"

namespace vct {

struct Factor {
  std::string name;
  int64_t cardinality = 0;
};

// Ordered factor list with mixed-radix index <-> label conversion (factor 0
// varies slowest).
struct FactorSpec {
  std::vector<Factor> factors;

  int64_t count() const;
  int64_t size() const { return static_cast<int64_t>(factors.size()); }
  std::vector<int> labels_at(int64_t index) const;
  int64_t index_of(const std::vector<int>& labels) const;
  void validate(const std::vector<int>& labels) const;
};

// shape(3) x object-hue(8) x scale(4) x pos-x(8) x pos-y(8) x background-hue(4)
FactorSpec minishapes_factors();

// Deterministic anti-aliased render of one factor combination; image is
// {size, size, 3} RGB in [0,1]. When `coverage` is given it receives the
// {size, size} object-coverage map (1 = fully object, 0 = background).
Tensor<float> render_minishapes(const std::vector<int>& labels, int64_t size,
                                Tensor<float>* coverage = nullptr);

struct SceneObject {
  int shape = 0;  // same three shapes as MiniShapes
  int hue = 0;    // object palette index
  double x = 0, y = 0;  // center in [0,1] canvas units
};

struct SceneSpec {
  int background_hue = 0;
  std::vector<SceneObject> objects;  // drawn in order, later objects on top
};

struct SceneRender {
  Tensor<float> image;        // {size, size, 3}
  std::vector<int> instance;  // {size*size}, 0 = background, i+1 = object i
};

// Uniform scene draw: object count in [min_objects, max_objects], discrete
// shape/hue, continuous positions away from the border.
SceneSpec sample_scene(Rng& rng, int64_t min_objects, int64_t max_objects);

// Hard-edged render with per-pixel instance ids; occlusion by draw order.
SceneRender render_miniscene(const SceneSpec& spec, int64_t size);

// All labels share a single uniformly drawn value at `fixed_factor`; the
// other columns are i.i.d. uniform.
std::vector<std::vector<int>> sample_fixed_factor_labels(const FactorSpec& spec,
                                                         int64_t fixed_factor, Rng& rng,
                                                         int64_t n);

// Renders a label batch into {B, size*size*3} rows.
Tensor<float> render_label_batch(const std::vector<std::vector<int>>& labels, int64_t size);

// Seeded stream over the full MiniShapes product: each epoch is a fresh
// Fisher-Yates permutation derived from (seed, epoch), and any step can be
// recomputed from scratch.
class ShapesStream {
 public:
  ShapesStream(uint64_t seed, int64_t image_size);

  const FactorSpec& spec() const { return spec_; }
  int64_t total() const { return total_; }
  // dataset index served at global position pos (pos / total() = epoch)
  int64_t label_index_at(int64_t pos);
  void batch(int64_t step, int64_t batch_size, Tensor<float>& images,
             std::vector<std::vector<int>>* labels = nullptr);

 private:
  void ensure_epoch(int64_t e);

  uint64_t seed_;
  int64_t size_;
  FactorSpec spec_;
  int64_t total_;
  int64_t epoch_ = -1;
  std::vector<int64_t> perm_;
};

// I.i.d. scene stream; scene i is derived from (seed, i) alone.
class SceneStream {
 public:
  SceneStream(uint64_t seed, int64_t image_size, int64_t min_objects, int64_t max_objects);

  SceneSpec spec_at(int64_t index) const;
  SceneRender render_at(int64_t index) const;
  void batch(int64_t step, int64_t batch_size, Tensor<float>& images,
             std::vector<SceneRender>* renders = nullptr);

 private:
  uint64_t seed_;
  int64_t size_, kmin_, kmax_;
};

// Flat-file export: manifest.txt, images.u8 (8-bit RGB records), labels.txt,
// and masks.u8 for scenes.
void export_minishapes(const std::string& dir, int64_t image_size);
void export_miniscene(const std::string& dir, int64_t image_size, uint64_t seed, int64_t count,
                      int64_t min_objects, int64_t max_objects);

}  // namespace vct
