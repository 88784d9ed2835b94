#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "egc/error.hpp"

namespace egc {

// Up to four positive extents. For rank 4 the order is N, C, H, W.
// A default-constructed shape has rank 0 and describes an empty tensor.
class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<int> dims);
  explicit Shape(std::span<const int> dims);

  int rank() const noexcept { return rank_; }
  int operator[](int axis) const;
  std::size_t numel() const noexcept;
  std::span<const int> dims() const noexcept { return {dims_.data(), static_cast<std::size_t>(rank_)}; }
  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    if (a.rank_ != b.rank_) return false;
    for (int i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

 private:
  std::array<int, kMaxRank> dims_{};
  int rank_ = 0;
};

// Dense row-major array. Values are owned; copies are deep.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{});
  BasicTensor(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  int dim(int axis) const { return shape_[axis]; }
  int rank() const noexcept { return shape_.rank(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Flat offset of (n, c, h, w) in a rank-4 tensor.
  std::size_t offset(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }
  T& at(int n, int c, int h, int w) noexcept { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const noexcept { return data_[offset(n, c, h, w)]; }

  T& at(int r, int c) noexcept { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  const T& at(int r, int c) const noexcept { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  BasicTensor reshaped(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  void fill(T value);

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Throws ShapeError("invalid shape ...") for extents < 1 or rank outside [1, 4].
Shape validated_shape(std::span<const int> dims);

template <typename T>
BasicTensor<T> create(const Shape& shape, T fill);

template <typename T>
BasicTensor<T> elementwise_add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T k);

// [M,K] x [K,P] -> [M,P]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Zero padding of the two spatial axes of an NCHW tensor.
template <typename T>
BasicTensor<T> pad_nchw(const BasicTensor<T>& a, int top, int bottom, int left, int right);

template <typename T>
T sum(const BasicTensor<T>& a);

// Row-major GEMM on raw buffers: c (+)= a[m,k] * b[k,p], with optional transposes.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int p, int k, const T* a, const T* b, T* c, bool accumulate);

}  // namespace egc
