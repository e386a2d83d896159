#include "glsseq/matrix.hpp"

#include <string>

#include "glsseq/error.hpp"

namespace glsseq {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch,
                "matrix data holds " + std::to_string(data_.size()) + " entries, expected " +
                    std::to_string(rows * cols));
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

SymmetricMatrix::SymmetricMatrix(DenseMatrix full) : dim_(full.rows()) {
  if (full.rows() != full.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "symmetric matrix must be square");
  }
  auto d = full.data();
  data_.assign(d.begin(), d.end());
}

void SymmetricMatrix::materialize_upper() {
  for (std::size_t j = 0; j < dim_; ++j) {
    for (std::size_t i = j + 1; i < dim_; ++i) data_[j + i * dim_] = data_[i + j * dim_];
  }
}

DenseMatrix SymmetricMatrix::to_dense() const {
  DenseMatrix out(dim_, dim_);
  for (std::size_t j = 0; j < dim_; ++j) {
    for (std::size_t i = 0; i < dim_; ++i) out(i, j) = (*this)(i, j);
  }
  return out;
}

LowerTriangular make_lower_unchecked(std::size_t dim, std::vector<double> data) {
  return LowerTriangular(dim, std::move(data));
}

LowerTriangular LowerTriangular::from_dense(DenseMatrix m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "triangular factor must be square and non-empty");
  }
  const std::size_t n = m.rows();
  for (std::size_t j = 0; j < n; ++j) {
    if (!(m(j, j) > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "diagonal entry is not positive", j);
    }
    for (std::size_t i = 0; i < j; ++i) m(i, j) = 0.0;
  }
  auto d = m.data();
  return LowerTriangular(n, std::vector<double>(d.begin(), d.end()));
}

DenseMatrix LowerTriangular::to_dense() const {
  return DenseMatrix(dim_, dim_, data_);
}

}  // namespace glsseq
