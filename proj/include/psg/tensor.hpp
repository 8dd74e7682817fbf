// Copyright 2026 The PSG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PSG_TENSOR_HPP_
#define PSG_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "psg/dual.hpp"
#include "psg/error.hpp"

namespace psg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

// Dense row-major tensor.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {
    // A zero leading extent is allowed (empty batch); others must be > 0.
    for (std::size_t i = 1; i < shape_.size(); ++i) {
      if (shape_[i] == 0) throw ShapeError("tensor extent must be positive");
    }
  }
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  // Same as the (shape, data) constructor but also rejects NaN/Inf.
  static Tensor checked(Shape shape, std::vector<T> data) {
    Tensor t(std::move(shape), std::move(data));
    if (!t.all_finite()) throw NonFiniteError("tensor contains NaN or Inf");
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  // Contiguous slice of the leading axis.
  std::span<T> row(std::size_t i) {
    const std::size_t n = row_size();
    return std::span<T>(data_).subspan(i * n, n);
  }
  std::span<const T> row(std::size_t i) const {
    const std::size_t n = row_size();
    return std::span<const T>(data_).subspan(i * n, n);
  }
  std::size_t row_size() const {
    if (shape_.empty()) return 0;
    if (shape_[0] != 0) return data_.size() / shape_[0];
    return shape_numel(Shape(shape_.begin() + 1, shape_.end()));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    using std::isfinite;
    for (const T& v : data_) {
      if (!isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Ordered list of per-layer tensors: network parameters, or gradients shaped
// exactly like them.
template <typename T>
using TensorList = std::vector<Tensor<T>>;

template <typename T>
using NetworkParams = TensorList<T>;

template <typename T>
using LayerGradients = TensorList<T>;

template <typename T>
TensorList<T> zeros_like(const TensorList<T>& list) {
  TensorList<T> out;
  out.reserve(list.size());
  for (const auto& t : list) out.emplace_back(t.shape());
  return out;
}

template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
  std::vector<U> data(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    data[i] = static_cast<U>(value_of(t[i]));
  }
  return Tensor<U>(t.shape(), std::move(data));
}

template <typename U, typename T>
TensorList<U> list_cast(const TensorList<T>& list) {
  TensorList<U> out;
  out.reserve(list.size());
  for (const auto& t : list) out.push_back(tensor_cast<U>(t));
  return out;
}

template <typename T>
void check_same_shapes(const TensorList<T>& a, const TensorList<T>& b,
                       const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": tensor count mismatch (" +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) {
      throw ShapeError(std::string(what) + ": shape mismatch at tensor " +
                       std::to_string(i) + " " + shape_str(a[i].shape()) +
                       " vs " + shape_str(b[i].shape()));
    }
  }
}

// acc += scale * x, elementwise over the whole list.
template <typename T>
void list_axpy(TensorList<T>& acc, const TensorList<T>& x, T scale) {
  for (std::size_t l = 0; l < acc.size(); ++l) {
    auto& a = acc[l].data();
    const auto& b = x[l].data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  }
}

template <typename T>
void list_scale(TensorList<T>& list, T scale) {
  for (auto& t : list) {
    for (auto& v : t.data()) v *= scale;
  }
}

// L2 norm of all tensors concatenated, accumulated in double.
template <typename T>
double global_norm(const TensorList<T>& list) {
  double s = 0.0;
  for (const auto& t : list) {
    for (const auto& v : t.data()) {
      const double d = value_of(v);
      s += d * d;
    }
  }
  return std::sqrt(s);
}

template <typename T>
std::size_t list_numel(const TensorList<T>& list) {
  std::size_t n = 0;
  for (const auto& t : list) n += t.size();
  return n;
}

template <typename T>
bool list_all_finite(const TensorList<T>& list) {
  for (const auto& t : list) {
    if (!t.all_finite()) return false;
  }
  return true;
}

}  // namespace psg

#endif  // PSG_TENSOR_HPP_
