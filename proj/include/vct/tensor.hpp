#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace vct {

// 64-byte aligned storage so every buffer starts a SIMD lane the same way:
// vectorized reductions then group identically across allocations, which
// keeps repeated forward passes bitwise reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(64)));
  }
  void deallocate(T* p, size_t) noexcept { ::operator delete(p, std::align_val_t(64)); }
  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

// Dense row-major n-d array. Most of the codebase treats tensors as 2-D
// matrices: shape[0] rows by (numel / shape[0]) columns, with any trailing
// dims folded into the columns.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  AlignedVec<T> data;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, AlignedVec<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel() != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: data length does not match shape");
  }
  Tensor(std::vector<int64_t> s, std::initializer_list<T> d)
      : shape(std::move(s)), data(d.begin(), d.end()) {
    if (numel() != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: data length does not match shape");
  }

  static Tensor zeros(std::vector<int64_t> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<size_t>(t.numel()), T(0));
    return t;
  }
  static Tensor full(std::vector<int64_t> s, T v) {
    Tensor t = zeros(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.empty() ? 0 : numel() / shape[0]; }

  T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  const T& at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }
  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  Tensor reshaped(std::vector<int64_t> s) const {
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    if (t.numel() != numel()) throw std::invalid_argument("reshape: numel mismatch");
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t;
    t.shape = shape;
    t.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<U>(data[i]);
    return t;
  }
};

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 2-D Eigen views over tensor storage.
template <typename T>
inline Eigen::Map<EMat<T>> mat(Tensor<T>& t) {
  return Eigen::Map<EMat<T>>(t.data.data(), t.rows(), t.cols());
}
template <typename T>
inline Eigen::Map<const EMat<T>> mat(const Tensor<T>& t) {
  return Eigen::Map<const EMat<T>>(t.data.data(), t.rows(), t.cols());
}

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

}  // namespace vct
