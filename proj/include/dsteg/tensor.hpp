#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "dsteg/error.hpp"

namespace dsteg {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major n-d array. Storage is a flat Eigen array so elementwise
/// work can use Eigen expressions directly.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(Array::Zero(shape_size(shape_))) {
    for (Index d : shape_)
      if (d < 0) fail(ErrorKind::ShapeMismatch, "negative dimension in " + shape_string(shape_));
  }
  Tensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_))
      fail(ErrorKind::ShapeMismatch, "value count does not match shape " + shape_string(shape_));
  }

  static Tensor constant(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    t.values_.setConstant(v);
    return t;
  }
  static Tensor scalar(Scalar v) { return constant({1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(std::size_t i) const { return shape_.at(i); }
  Index size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return shape_.empty(); }

  Array& array() noexcept { return values_; }
  const Array& array() const noexcept { return values_; }
  Scalar* data() noexcept { return values_.data(); }
  const Scalar* data() const noexcept { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  Scalar item() const {
    if (size() != 1) fail(ErrorKind::ShapeMismatch, "item() on tensor of shape " + shape_string(shape_));
    return values_[0];
  }

  /// View the storage as a rows x cols row-major matrix.
  MatrixMap matrix(Index rows, Index cols) { return MatrixMap(data(), rows, cols); }
  ConstMatrixMap matrix(Index rows, Index cols) const { return ConstMatrixMap(data(), rows, cols); }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      fail(ErrorKind::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), values_);
  }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape_, values_.template cast<To>());
  }

  bool all_finite() const {
    // A finite sum implies finite terms; fall back to the exact test otherwise.
    return std::isfinite(values_.sum()) || values_.isFinite().all();
  }

  void set_zero() { values_.setZero(); }

 private:
  Shape shape_;
  Array values_;
};

template <typename Scalar>
bool same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return a.shape() == b.shape();
}

/// Bitwise equality of shape and contents.
template <typename Scalar>
bool bitwise_equal(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.data(), a.data() + a.size(), b.data(), [](Scalar x, Scalar y) {
    return std::memcmp(&x, &y, sizeof(Scalar)) == 0;
  });
}

}  // namespace dsteg
