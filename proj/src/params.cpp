#include "vct/params.hpp"

#include <cmath>
#include <stdexcept>

namespace vct {

template <typename T>
int ParameterStore<T>::add(std::string name, Tensor<T> value) {
  if (index_.count(name))
    throw std::invalid_argument("parameter registered twice: " + name);
  int idx = static_cast<int>(params_.size());
  Parameter<T> p;
  p.name = name;
  p.grad = Tensor<T>::zeros(value.shape);
  p.value = std::move(value);
  index_.emplace(std::move(name), idx);
  params_.push_back(std::move(p));
  return idx;
}

template <typename T>
int ParameterStore<T>::add_trunc_normal(std::string name, std::vector<int64_t> shape,
                                        Rng& rng, T stddev) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.trunc_normal(static_cast<double>(stddev)));
  return add(std::move(name), std::move(t));
}

template <typename T>
int ParameterStore<T>::add_zeros(std::string name, std::vector<int64_t> shape) {
  return add(std::move(name), Tensor<T>::zeros(std::move(shape)));
}

template <typename T>
int ParameterStore<T>::add_ones(std::string name, std::vector<int64_t> shape) {
  return add(std::move(name), Tensor<T>::full(std::move(shape), T(1)));
}

template <typename T>
int ParameterStore<T>::index_of(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

template <typename T>
Parameter<T>& ParameterStore<T>::by_name(const std::string& name) {
  int idx = index_of(name);
  if (idx < 0) throw std::out_of_range("no such parameter: " + name);
  return params_[static_cast<size_t>(idx)];
}

template <typename T>
int64_t ParameterStore<T>::total_scalars() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grads() {
  for (auto& p : params_) p.grad.fill(T(0));
}

template <typename T>
bool ParameterStore<T>::name_has_prefix(const std::string& name,
                                        const std::vector<std::string>& prefixes) {
  for (const auto& pre : prefixes)
    if (name.size() >= pre.size() && name.compare(0, pre.size(), pre) == 0) return true;
  return false;
}

template <typename T>
void ParameterStore<T>::keep_grads_with_prefix(const std::vector<std::string>& prefixes) {
  for (auto& p : params_)
    if (!name_has_prefix(p.name, prefixes)) p.grad.fill(T(0));
}

template <typename T>
Adam<T>::Adam(const ParameterStore<T>& store, AdamConfig<T> cfg) : cfg_(cfg) {
  m_.reserve(store.size());
  v_.reserve(store.size());
  for (const auto& p : store) {
    m_.push_back(Tensor<T>::zeros(p.value.shape));
    v_.push_back(Tensor<T>::zeros(p.value.shape));
  }
}

template <typename T>
void Adam<T>::step(ParameterStore<T>& store, T lr) {
  if (m_.size() != store.size())
    throw std::logic_error("optimizer state does not match parameter store");
  ++t_;
  const T c1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
  const T c2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
  for (size_t i = 0; i < store.size(); ++i) {
    Parameter<T>& p = store.at(i);
    if (!p.grad.all_finite())
      throw std::runtime_error("non-finite gradient in parameter " + p.name);
    auto g = mat(p.grad);
    auto m = mat(m_[i]);
    auto v = mat(v_[i]);
    m = cfg_.beta1 * m + (T(1) - cfg_.beta1) * g;
    v = cfg_.beta2 * v.array().matrix() + (T(1) - cfg_.beta2) * g.array().square().matrix();
    mat(p.value).array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
    p.grad.fill(T(0));
  }
}

template <typename T>
T cosine_lr(T base_lr, int64_t step, int64_t total_steps) {
  if (total_steps <= 0 || step >= total_steps) return T(0);
  if (step < 0) step = 0;
  double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * static_cast<T>(0.5 * (1.0 + std::cos(frac * 3.14159265358979323846)));
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Adam<float>;
template class Adam<double>;
template float cosine_lr<float>(float, int64_t, int64_t);
template double cosine_lr<double>(double, int64_t, int64_t);

}  // namespace vct
