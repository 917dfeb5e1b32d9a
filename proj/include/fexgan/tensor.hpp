// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fexgan/error.hpp"

namespace fexgan {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major tensor. Images are stored channel-last: a batch is
/// N x H x W x C and a single image is H x W x C.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}
  Tensor(Shape shape, const std::vector<T>& values)
      : Tensor(std::move(shape), Storage(values.begin(), values.end())) {}
  Tensor(Shape shape, Storage values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_volume(shape_))
      throw ShapeError("Tensor: " + std::to_string(data_.size()) + " values for shape " +
                       shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Same storage, new shape of equal volume.
  Tensor reshaped(Shape shape) const {
    if (shape_volume(shape) != size())
      throw ShapeError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    typename Tensor<U>::Storage out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  /// Row `i` of the leading axis as a view.
  std::span<T> slice(std::size_t i) {
    const std::size_t stride = size() / shape_.at(0);
    return std::span<T>(data_).subspan(i * stride, stride);
  }
  std::span<const T> slice(std::size_t i) const {
    const std::size_t stride = size() / shape_.at(0);
    return std::span<const T>(data_).subspan(i * stride, stride);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Storage data_;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Views a tensor as rows x cols, where cols is the trailing extent.
template <typename T>
MatrixMap<T> as_matrix(Tensor<T>& t, std::size_t cols) {
  return MatrixMap<T>(t.data(), static_cast<Eigen::Index>(t.size() / cols),
                      static_cast<Eigen::Index>(cols));
}
template <typename T>
ConstMatrixMap<T> as_matrix(const Tensor<T>& t, std::size_t cols) {
  return ConstMatrixMap<T>(t.data(), static_cast<Eigen::Index>(t.size() / cols),
                           static_cast<Eigen::Index>(cols));
}

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want)
    throw ShapeError(std::string(what) + ": expected " + shape_string(want) + ", got " +
                     shape_string(got));
}

/// Stacks equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  Shape shape = items.front().shape();
  shape.insert(shape.begin(), items.size());
  Tensor<T> out(shape);
  const std::size_t stride = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_shape(items[i].shape(), items.front().shape(), "stack");
    std::copy(items[i].values().begin(), items[i].values().end(), out.data() + i * stride);
  }
  return out;
}

/// Inverse of `stack`.
template <typename T>
std::vector<Tensor<T>> unstack(const Tensor<T>& batch) {
  Shape item_shape(batch.shape().begin() + 1, batch.shape().end());
  std::vector<Tensor<T>> out;
  out.reserve(batch.dim(0));
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    auto row = batch.slice(i);
    out.emplace_back(item_shape, typename Tensor<T>::Storage(row.begin(), row.end()));
  }
  return out;
}

}  // namespace fexgan
