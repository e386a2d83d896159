#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace glsseq {

/// Non-owning column-major view with a leading dimension.
template <typename T>
struct BasicMatrixView {
  T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t ld = 0;

  T& operator()(std::size_t i, std::size_t j) const { return data[i + j * ld]; }
  T* col(std::size_t j) const { return data + j * ld; }

  BasicMatrixView columns(std::size_t first, std::size_t count) const {
    assert(first + count <= cols);
    return {data + first * ld, rows, count, ld};
  }

  operator BasicMatrixView<const T>() const { return {data, rows, cols, ld}; }
};

using MatrixView = BasicMatrixView<double>;
using ConstMatrixView = BasicMatrixView<const double>;

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i + j * rows_]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i + j * rows_]; }

  std::span<double> col(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(std::size_t j) const {
    return {data_.data() + j * rows_, rows_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  MatrixView view() noexcept { return {data_.data(), rows_, cols_, rows_}; }
  ConstMatrixView view() const noexcept { return {data_.data(), rows_, cols_, rows_}; }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Square column-major storage whose lower triangle is authoritative.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(std::size_t dim) : dim_(dim), data_(dim * dim, 0.0) {}
  /// Takes a full square matrix; only its lower triangle is read.
  explicit SymmetricMatrix(DenseMatrix full);

  std::size_t dim() const noexcept { return dim_; }

  /// Reads through the lower triangle regardless of argument order.
  double operator()(std::size_t i, std::size_t j) const {
    return i >= j ? data_[i + j * dim_] : data_[j + i * dim_];
  }
  double& lower(std::size_t i, std::size_t j) {
    assert(i >= j);
    return data_[i + j * dim_];
  }

  /// Copies the lower triangle onto the upper one.
  void materialize_upper();
  DenseMatrix to_dense() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  MatrixView view() noexcept { return {data_.data(), dim_, dim_, dim_}; }
  ConstMatrixView view() const noexcept { return {data_.data(), dim_, dim_, dim_}; }

  /// Hands over the storage, leaving an empty matrix.
  std::vector<double> release() && {
    dim_ = 0;
    return std::move(data_);
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Cholesky factor L with L·Lᵀ = M. Only produced by `cholesky_lower` or
/// `LowerTriangular::from_dense`, both of which enforce a positive diagonal.
class LowerTriangular {
 public:
  LowerTriangular() = default;

  static LowerTriangular from_dense(DenseMatrix m);

  std::size_t dim() const noexcept { return dim_; }
  double operator()(std::size_t i, std::size_t j) const {
    return i >= j ? data_[i + j * dim_] : 0.0;
  }
  ConstMatrixView view() const noexcept { return {data_.data(), dim_, dim_, dim_}; }
  std::span<const double> data() const noexcept { return data_; }

  DenseMatrix to_dense() const;

 private:
  friend LowerTriangular make_lower_unchecked(std::size_t, std::vector<double>);
  LowerTriangular(std::size_t dim, std::vector<double> data)
      : dim_(dim), data_(std::move(data)) {}

  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Wraps a column-major factor whose diagonal is already known positive.
/// Used by the factorization kernels only.
LowerTriangular make_lower_unchecked(std::size_t dim, std::vector<double> data);

}  // namespace glsseq
