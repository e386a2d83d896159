#include "glsseq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glsseq/error.hpp"
#include "glsseq/kernels.hpp"

namespace glsseq::oracle {

std::optional<std::vector<double>> solve_with_inverse(const DenseMatrix& m_inv,
                                                      const DenseMatrix& x,
                                                      std::span<const double> y) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  // W = M⁻¹·X, column by column.
  DenseMatrix w(n, p);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      const double xkj = x(k, j);
      for (std::size_t i = 0; i < n; ++i) w(i, j) += m_inv(i, k) * xkj;
    }
  }
  std::vector<double> m_inv_y(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) m_inv_y[i] += m_inv(i, k) * y[k];
  }
  DenseMatrix a(p, p);
  std::vector<double> rhs(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < n; ++k) rhs[i] += x(k, i) * m_inv_y[k];
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < n; ++k) a(i, j) += x(k, i) * w(k, j);
    }
  }
  FlopCounter scratch;
  DenseMatrix a_inv;
  try {
    a_inv = invert_general(std::move(a), scratch);
  } catch (const Error&) {
    return std::nullopt;
  }
  std::vector<double> b(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < p; ++i) b[i] += a_inv(i, j) * rhs[j];
  }
  return b;
}

std::optional<std::vector<double>> solve(const DenseMatrix& m, const DenseMatrix& x,
                                         std::span<const double> y) {
  FlopCounter scratch;
  DenseMatrix m_inv;
  try {
    m_inv = invert_general(m, scratch);
  } catch (const Error&) {
    return std::nullopt;
  }
  return solve_with_inverse(m_inv, x, y);
}

double relative_error(std::span<const double> b, std::span<const double> reference) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (!std::isfinite(b[i])) return std::numeric_limits<double>::infinity();
    diff = std::max(diff, std::abs(b[i] - reference[i]));
    scale = std::max(scale, std::abs(reference[i]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

}  // namespace glsseq::oracle
