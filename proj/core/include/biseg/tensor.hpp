#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "biseg/errors.hpp"

namespace biseg {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major tensor. A tensor with an empty shape is a scalar holding one
// element. Stored values are float in production; the double instantiation
// exists so gradient checks can run the same kernels in 64-bit.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : data_(1, T{0}) {}
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 2-D and 3-D element access; no bounds checks beyond the vector's own.
  T& at(int y, int x) { return data_[static_cast<std::size_t>(y) * shape_[1] + x]; }
  const T& at(int y, int x) const { return data_[static_cast<std::size_t>(y) * shape_[1] + x]; }
  T& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  // Pointer to plane c of a [C, H, W] tensor.
  T* plane(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_[1] * shape_[2]; }
  const T* plane(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * shape_[1] * shape_[2];
  }

  void fill(T value);

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool operator==(const BasicTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Value plus a same-shaped zero-initialized gradient buffer.
template <typename T>
struct BasicGradPair {
  BasicTensor<T> value;
  BasicTensor<T> grad;

  explicit BasicGradPair(BasicTensor<T> v) : value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(T{0}); }
};

using GradPair = BasicGradPair<float>;

// Throws ShapeError naming `what` unless the shapes are equal.
void require_same_shape(const Shape& a, const Shape& b, const std::string& what);
// Throws ShapeError unless the tensor has `ndim` dimensions.
void require_ndim(const Shape& shape, std::size_t ndim, const std::string& what);

template <typename T>
bool all_finite(const BasicTensor<T>& t);

// Elementwise helpers. Shapes must match exactly; there is no broadcasting.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src);
template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace biseg
