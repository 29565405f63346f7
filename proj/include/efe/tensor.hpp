#pragma once

// Dense n-dimensional tensor over a flat Eigen array, row-major.
// The scalar type is a template parameter: float for training,
// double for oracle and gradient-check tests.

#include <Eigen/Dense>

#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace efe {

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index shape_size(const Shape& s) {
  Eigen::Index n = 1;
  for (Eigen::Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Contract violations (shape mismatches, bad arguments) throw.
#define EFE_CHECK(cond, msg)                         \
  do {                                               \
    if (!(cond)) throw std::invalid_argument((msg)); \
  } while (0)

template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Array::Zero(shape_size(shape_))) {}
  Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    EFE_CHECK(data_.size() == shape_size(shape_), "tensor data size does not match shape " + shape_str(shape_));
  }
  Tensor(Shape shape, std::initializer_list<Scalar> vals) : shape_(std::move(shape)) {
    EFE_CHECK(static_cast<Eigen::Index>(vals.size()) == shape_size(shape_),
              "tensor init list size does not match shape " + shape_str(shape_));
    data_ = Array(vals.size());
    Eigen::Index i = 0;
    for (Scalar v : vals) data_[i++] = v;
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return constant(std::move(shape), Scalar(1)); }
  static Tensor constant(Shape shape, Scalar v) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = Array::Constant(shape_size(t.shape_), v);
    return t;
  }
  static Tensor scalar(Scalar v) { return constant({1}, v); }

  const Shape& shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }
  Eigen::Index ndim() const { return static_cast<Eigen::Index>(shape_.size()); }
  Eigen::Index dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

  // 2-D accessors; valid only for matrix-shaped tensors.
  Eigen::Index rows() const {
    EFE_CHECK(shape_.size() == 2, "tensor is not 2-D");
    return shape_[0];
  }
  Eigen::Index cols() const {
    EFE_CHECK(shape_.size() == 2, "tensor is not 2-D");
    return shape_[1];
  }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Array& array() { return data_; }
  const Array& array() const { return data_; }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }
  Scalar item() const {
    EFE_CHECK(data_.size() == 1, "item() on non-scalar tensor");
    return data_[0];
  }

  Eigen::Map<Matrix> matrix() {
    EFE_CHECK(shape_.size() == 2, "matrix view requires a 2-D tensor");
    return Eigen::Map<Matrix>(data_.data(), shape_[0], shape_[1]);
  }
  Eigen::Map<const Matrix> matrix() const {
    EFE_CHECK(shape_.size() == 2, "matrix view requires a 2-D tensor");
    return Eigen::Map<const Matrix>(data_.data(), shape_[0], shape_[1]);
  }
  // Arbitrary 2-D view of the flat data (rows*cols must equal size()).
  Eigen::Map<Matrix> matrix_view(Eigen::Index rows, Eigen::Index cols) {
    EFE_CHECK(rows * cols == data_.size(), "matrix_view size mismatch");
    return Eigen::Map<Matrix>(data_.data(), rows, cols);
  }
  Eigen::Map<const Matrix> matrix_view(Eigen::Index rows, Eigen::Index cols) const {
    EFE_CHECK(rows * cols == data_.size(), "matrix_view size mismatch");
    return Eigen::Map<const Matrix>(data_.data(), rows, cols);
  }

  Tensor reshaped(Shape shape) const {
    EFE_CHECK(shape_size(shape) == data_.size(), "reshape to incompatible shape " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const { return data_.isFinite().all(); }

  template <typename T>
  Tensor<T> cast() const {
    return Tensor<T>(shape_, data_.template cast<T>());
  }

 private:
  Shape shape_;
  Array data_;
};

}  // namespace efe
