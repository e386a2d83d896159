#pragma once

// Test-side helpers. Random data comes from <random> distributions so it
// never shares a code path with the library's dataset generator.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "glsseq/matrix.hpp"

namespace testing {

inline glsseq::DenseMatrix random_matrix(std::mt19937_64& rng, std::size_t rows,
                                         std::size_t cols) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  glsseq::DenseMatrix a(rows, cols);
  for (auto& v : a.data()) v = u(rng);
  return a;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// A·Aᵀ + shift·I with A uniform in [-1, 1].
inline glsseq::SymmetricMatrix random_spd(std::mt19937_64& rng, std::size_t n, double shift) {
  const auto a = random_matrix(rng, n, n);
  glsseq::DenseMatrix m(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += a(i, k) * a(j, k);
      m(i, j) = s + (i == j ? shift : 0.0);
    }
  }
  return glsseq::SymmetricMatrix(std::move(m));
}

/// Plain triple loop Aᵀ·B.
inline glsseq::DenseMatrix naive_atb(const glsseq::DenseMatrix& a, const glsseq::DenseMatrix& b) {
  glsseq::DenseMatrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.rows(); ++k) s += a(k, i) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

inline glsseq::DenseMatrix naive_mul(const glsseq::DenseMatrix& a, const glsseq::DenseMatrix& b) {
  glsseq::DenseMatrix c(a.rows(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      for (std::size_t i = 0; i < a.rows(); ++i) c(i, j) += a(i, k) * b(k, j);
    }
  }
  return c;
}

inline double frobenius(const glsseq::DenseMatrix& a) {
  double s = 0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

inline double frobenius_diff(const glsseq::DenseMatrix& a, const glsseq::DenseMatrix& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Power iteration on a symmetric matrix; returns the dominant eigenvalue.
inline double dominant_eigenvalue(const glsseq::DenseMatrix& m, int iters = 500) {
  const std::size_t n = m.rows();
  std::vector<double> v(n, 1.0), w(n);
  double lambda = 0;
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += m(i, j) * v[j];
      w[i] = s;
    }
    double norm = 0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    double rq = 0;
    for (std::size_t i = 0; i < n; ++i) rq += v[i] * w[i];
    double vv = 0;
    for (double x : v) vv += x * x;
    lambda = rq / vv;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
  }
  return lambda;
}

}  // namespace testing
