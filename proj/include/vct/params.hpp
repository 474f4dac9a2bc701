#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vct/rng.hpp"
#include "vct/tensor.hpp"

namespace vct {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;  // persistent sink; zeroed by the optimizer, not the graph
};

// Flat, registration-ordered collection of named parameters. Order is part of
// the model contract: checkpoints and optimizer state are matched by it.
template <typename T>
class ParameterStore {
 public:
  int add(std::string name, Tensor<T> value);
  int add_trunc_normal(std::string name, std::vector<int64_t> shape, Rng& rng, T stddev);
  int add_zeros(std::string name, std::vector<int64_t> shape);
  int add_ones(std::string name, std::vector<int64_t> shape);

  Parameter<T>& at(size_t i) { return params_[i]; }
  const Parameter<T>& at(size_t i) const { return params_[i]; }
  int index_of(const std::string& name) const;
  Parameter<T>& by_name(const std::string& name);
  size_t size() const { return params_.size(); }
  int64_t total_scalars() const;

  void zero_grads();
  // Zeroes gradients of every parameter whose name starts with none of the
  // prefixes. Scopes an already-backpropagated loss to a parameter subset.
  void keep_grads_with_prefix(const std::vector<std::string>& prefixes);
  static bool name_has_prefix(const std::string& name, const std::vector<std::string>& prefixes);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, int> index_;
};

template <typename T>
struct AdamConfig {
  T lr = static_cast<T>(3e-4);
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);
};

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterStore<T>& store, AdamConfig<T> cfg);

  // One update from the grads currently in the store; grads are zeroed after.
  // lr is the post-schedule learning rate for this step. Throws (naming the
  // parameter) if a non-finite gradient is encountered.
  void step(ParameterStore<T>& store, T lr);

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  const AdamConfig<T>& config() const { return cfg_; }
  std::vector<Tensor<T>>& moment1() { return m_; }
  std::vector<Tensor<T>>& moment2() { return v_; }
  const std::vector<Tensor<T>>& moment1() const { return m_; }
  const std::vector<Tensor<T>>& moment2() const { return v_; }

 private:
  AdamConfig<T> cfg_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

// Cosine decay from base_lr at step 0 to 0 at total_steps.
template <typename T>
T cosine_lr(T base_lr, int64_t step, int64_t total_steps);

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class Adam<float>;
extern template class Adam<double>;
extern template float cosine_lr<float>(float, int64_t, int64_t);
extern template double cosine_lr<double>(double, int64_t, int64_t);

}  // namespace vct
