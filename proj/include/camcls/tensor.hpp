#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "camcls/error.hpp"

namespace camcls {

inline size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

// Dense row-major n-d array. float is the training scalar, double the
// verification scalar for finite-difference checks.
template <typename T>
struct Tensor {
  std::vector<size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s, T fill = T(0))
      : shape(std::move(s)), data(shape_numel(shape), fill) {}
  Tensor(std::vector<size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      throw DimensionError("tensor: shape does not match data size");
  }

  static Tensor zeros(std::vector<size_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<size_t> s, T v) { return Tensor(std::move(s), v); }

  size_t numel() const { return data.size(); }
  size_t rank() const { return shape.size(); }
  size_t dim(size_t i) const {
    if (i >= shape.size()) throw DimensionError("tensor: dim index out of range");
    return shape[i];
  }

  T& operator()(size_t i) { return data[i]; }
  const T& operator()(size_t i) const { return data[i]; }
  T& operator()(size_t i, size_t j) { return data[i * shape[1] + j]; }
  const T& operator()(size_t i, size_t j) const { return data[i * shape[1] + j]; }
  T& operator()(size_t i, size_t j, size_t k) { return data[(i * shape[1] + j) * shape[2] + k]; }
  const T& operator()(size_t i, size_t j, size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  T& operator()(size_t i, size_t j, size_t k, size_t l) {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  const T& operator()(size_t i, size_t j, size_t k, size_t l) const {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // Same storage reinterpreted under a new shape.
  Tensor reshaped(std::vector<size_t> s) const {
    if (shape_numel(s) != numel()) throw DimensionError("tensor: reshape changes element count");
    return Tensor(std::move(s), data);
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <typename T>
T min_value(const Tensor<T>& t) {
  T m = std::numeric_limits<T>::max();
  for (T v : t.data) m = v < m ? v : m;
  return m;
}

template <typename T>
T max_value(const Tensor<T>& t) {
  T m = std::numeric_limits<T>::lowest();
  for (T v : t.data) m = v > m ? v : m;
  return m;
}

template <typename T>
double mean_value(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.data) s += static_cast<double>(v);
  return t.numel() ? s / static_cast<double>(t.numel()) : 0.0;
}

}  // namespace camcls
