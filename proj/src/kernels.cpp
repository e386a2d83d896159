#include "glsseq/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "glsseq/error.hpp"

namespace glsseq {

namespace {

constexpr double kEpsilon = 0x1p-52;

// Columns of the right-hand side processed together by the triangular solve,
// and rows of the factor consumed per sweep over that panel.
constexpr std::size_t kRhsPanel = kTile;
constexpr std::size_t kSolveStep = 8;

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

// b[i] -= x[t] * l_t[i] for t = 0..7 applied in order, i in [begin, end).
inline void update_8(double* b, const double* const* l, const double* x, std::size_t begin,
                     std::size_t end) {
  const double* l0 = l[0];
  const double* l1 = l[1];
  const double* l2 = l[2];
  const double* l3 = l[3];
  const double* l4 = l[4];
  const double* l5 = l[5];
  const double* l6 = l[6];
  const double* l7 = l[7];
  const double x0 = x[0], x1 = x[1], x2 = x[2], x3 = x[3];
  const double x4 = x[4], x5 = x[5], x6 = x[6], x7 = x[7];
  for (std::size_t i = begin; i < end; ++i) {
    double v = b[i];
    v = v - x0 * l0[i];
    v = v - x1 * l1[i];
    v = v - x2 * l2[i];
    v = v - x3 * l3[i];
    v = v - x4 * l4[i];
    v = v - x5 * l5[i];
    v = v - x6 * l6[i];
    v = v - x7 * l7[i];
    b[i] = v;
  }
}

// Same contract as update_8 for four factor columns.
inline void update_4(double* b, const double* const* l, const double* x, std::size_t begin,
                     std::size_t end) {
  const double* l0 = l[0];
  const double* l1 = l[1];
  const double* l2 = l[2];
  const double* l3 = l[3];
  const double x0 = x[0], x1 = x[1], x2 = x[2], x3 = x[3];
  for (std::size_t i = begin; i < end; ++i) {
    double v = b[i];
    v = v - x0 * l0[i];
    v = v - x1 * l1[i];
    v = v - x2 * l2[i];
    v = v - x3 * l3[i];
    b[i] = v;
  }
}

inline void axpy_sub(double* b, const double* l, double x, std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i) b[i] = b[i] - x * l[i];
}

// Unblocked Cholesky of the leading `p` block; returns the failing pivot.
std::optional<std::size_t> small_cholesky(MatrixView s, double tol) {
  const std::size_t p = s.rows;
  for (std::size_t j = 0; j < p; ++j) {
    double* cj = s.col(j);
    const double d = cj[j];
    if (!(d > tol)) return j;
    const double ljj = std::sqrt(d);
    cj[j] = ljj;
    for (std::size_t i = j + 1; i < p; ++i) cj[i] = cj[i] / ljj;
    for (std::size_t k = j + 1; k < p; ++k) axpy_sub(s.col(k), cj, cj[k], k, p);
  }
  return std::nullopt;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) noexcept {
  double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t t = 0; t < 8; ++t) acc[t] += a[i + t] * b[i + t];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))) +
         tail;
}

double spd_pivot_tolerance(ConstMatrixView a) noexcept {
  double max_diag = 0.0;
  for (std::size_t j = 0; j < a.rows && j < a.cols; ++j) max_diag = std::max(max_diag, a(j, j));
  return kEpsilon * max_diag;
}

LowerTriangular cholesky_lower(SymmetricMatrix m, FlopCounter& flops) {
  const std::size_t n = m.dim();
  require(n >= 1, "cholesky_lower: matrix must be non-empty");
  MatrixView a = m.view();
  const double tol = spd_pivot_tolerance(a);

  // Right-looking, blocked by panels of kTile columns.
  for (std::size_t jb = 0; jb < n; jb += kTile) {
    const std::size_t je = std::min(n, jb + kTile);
    for (std::size_t j = jb; j < je; ++j) {
      double* cj = a.col(j);
      const double d = cj[j];
      if (!(d > tol)) {
        throw Error(ErrorCode::NotSPD,
                    "non-positive pivot " + std::to_string(d) + " at index " + std::to_string(j),
                    j);
      }
      const double ljj = std::sqrt(d);
      cj[j] = ljj;
      for (std::size_t i = j + 1; i < n; ++i) cj[i] = cj[i] / ljj;
      for (std::size_t k = j + 1; k < je; ++k) axpy_sub(a.col(k), cj, cj[k], k, n);
    }
    // Trailing update A22 -= L21·L21ᵀ, lower triangle only.
    const double* panel[kTile];
    for (std::size_t c = je; c < n; ++c) {
      double* cc = a.col(c);
      std::size_t k = jb;
      for (; k + 4 <= je; k += 4) {
        const double x[4] = {a(c, k), a(c, k + 1), a(c, k + 2), a(c, k + 3)};
        for (std::size_t t = 0; t < 4; ++t) panel[t] = a.col(k + t);
        update_4(cc, panel, x, c, n);
      }
      for (; k < je; ++k) axpy_sub(cc, a.col(k), a(c, k), c, n);
    }
  }
  for (std::size_t j = 1; j < n; ++j) {
    for (std::size_t i = 0; i < j; ++i) a(i, j) = 0.0;
  }
  flops.add(Kernel::potrf, flops::cholesky(n));
  return make_lower_unchecked(n, std::move(m).release());
}

void tri_solve_forward_inplace(const LowerTriangular& l, MatrixView b, FlopCounter& flops) {
  const std::size_t n = l.dim();
  require(b.rows == n, "tri_solve_forward: factor and right-hand side row counts differ");
  const ConstMatrixView lv = l.view();

  for (std::size_t c0 = 0; c0 < b.cols; c0 += kRhsPanel) {
    const std::size_t ce = std::min(b.cols, c0 + kRhsPanel);
    for (std::size_t j0 = 0; j0 < n; j0 += kSolveStep) {
      const std::size_t jb = std::min(kSolveStep, n - j0);
      const double* lcols[kSolveStep];
      for (std::size_t t = 0; t < jb; ++t) lcols[t] = lv.col(j0 + t);
      for (std::size_t c = c0; c < ce; ++c) {
        double* x = b.col(c);
        for (std::size_t t = 0; t < jb; ++t) {
          const std::size_t j = j0 + t;
          x[j] = x[j] / lcols[t][j];
          axpy_sub(x, lcols[t], x[j], j + 1, j0 + jb);
        }
        if (jb == kSolveStep) {
          update_8(x, lcols, x + j0, j0 + jb, n);
        } else {
          for (std::size_t t = 0; t < jb; ++t) axpy_sub(x, lcols[t], x[j0 + t], j0 + jb, n);
        }
      }
    }
  }
  flops.add(b.cols > 1 ? Kernel::trsm : Kernel::trsv, flops::tri_solve(n, b.cols));
}

DenseMatrix tri_solve_forward(const LowerTriangular& l, DenseMatrix b, FlopCounter& flops) {
  tri_solve_forward_inplace(l, b.view(), flops);
  return b;
}

std::vector<double> tri_solve_forward(const LowerTriangular& l, std::vector<double> b,
                                      FlopCounter& flops) {
  tri_solve_forward_inplace(l, MatrixView{b.data(), b.size(), 1, b.size()}, flops);
  return b;
}

void syrk_lower_into(ConstMatrixView a, MatrixView c, FlopCounter& flops) {
  require(c.rows == a.cols && c.cols == a.cols, "syrk_lower: output must be cols x cols");
  const std::size_t k = a.cols;
  for (std::size_t jt = 0; jt < k; jt += kTile) {
    const std::size_t je = std::min(k, jt + kTile);
    for (std::size_t it = jt; it < k; it += kTile) {
      const std::size_t ie = std::min(k, it + kTile);
      for (std::size_t j = jt; j < je; ++j) {
        for (std::size_t i = std::max(it, j); i < ie; ++i) c(i, j) = dot(a.col(i), a.col(j), a.rows);
      }
    }
  }
  flops.add(k > 1 ? Kernel::syrk : Kernel::dot, flops::syrk(a.rows, k));
}

SymmetricMatrix syrk_lower(ConstMatrixView a, FlopCounter& flops) {
  require(a.rows >= 1, "syrk_lower: operand must have at least one row");
  SymmetricMatrix s(a.cols);
  syrk_lower_into(a, s.view(), flops);
  s.materialize_upper();
  return s;
}

void gemm_t_into(ConstMatrixView a, ConstMatrixView b, MatrixView c, FlopCounter& flops) {
  require(a.rows == b.rows, "gemm_t: operand row counts differ");
  require(c.rows == a.cols && c.cols == b.cols, "gemm_t: output shape mismatch");
  for (std::size_t jt = 0; jt < b.cols; jt += kTile) {
    const std::size_t je = std::min(b.cols, jt + kTile);
    for (std::size_t it = 0; it < a.cols; it += kTile) {
      const std::size_t ie = std::min(a.cols, it + kTile);
      for (std::size_t j = jt; j < je; ++j) {
        for (std::size_t i = it; i < ie; ++i) c(i, j) = dot(a.col(i), b.col(j), a.rows);
      }
    }
  }
  const bool vector_shaped = a.cols == 1 || b.cols == 1;
  flops.add(vector_shaped ? Kernel::gemv : Kernel::gemm, flops::gemm(a.rows, a.cols, b.cols));
}

DenseMatrix gemm_t(ConstMatrixView a, ConstMatrixView b, FlopCounter& flops) {
  require(a.rows == b.rows, "gemm_t: operand row counts differ");
  DenseMatrix c(a.cols, b.cols);
  gemm_t_into(a, b, c.view(), flops);
  return c;
}

void matvec_t_into(ConstMatrixView a, std::span<const double> v, std::span<double> out,
                   FlopCounter& flops) {
  require(a.rows == v.size(), "matvec_t: vector length differs from row count");
  require(out.size() == a.cols, "matvec_t: output length differs from column count");
  for (std::size_t j = 0; j < a.cols; ++j) out[j] = dot(a.col(j), v.data(), a.rows);
  flops.add(a.cols > 1 ? Kernel::gemv : Kernel::dot, flops::gemv(a.rows, a.cols));
}

std::vector<double> matvec_t(ConstMatrixView a, std::span<const double> v, FlopCounter& flops) {
  std::vector<double> out(a.cols);
  matvec_t_into(a, v, out, flops);
  return out;
}

std::optional<std::size_t> solve_spd_small_inplace(MatrixView s, std::span<double> x,
                                                   FlopCounter& flops) {
  const std::size_t p = s.rows;
  flops.add(Kernel::posv, flops::posv(p));
  if (auto failed = small_cholesky(s, spd_pivot_tolerance(s))) return failed;
  for (std::size_t j = 0; j < p; ++j) {
    x[j] = x[j] / s(j, j);
    axpy_sub(x.data(), s.col(j), x[j], j + 1, p);
  }
  for (std::size_t j = p; j-- > 0;) {
    double v = x[j];
    for (std::size_t i = j + 1; i < p; ++i) v = v - s(i, j) * x[i];
    x[j] = v / s(j, j);
  }
  return std::nullopt;
}

std::vector<double> solve_spd_small(SymmetricMatrix s, std::span<const double> rhs,
                                    FlopCounter& flops) {
  const std::size_t p = s.dim();
  require(p == rhs.size(), "solve_spd_small: right-hand side length mismatch");
  if (p == 0 || p > kMaxSmallDim) {
    throw Error(ErrorCode::InvalidArgument,
                "solve_spd_small: dimension " + std::to_string(p) + " outside [1, " +
                    std::to_string(kMaxSmallDim) + "]");
  }
  std::vector<double> x(rhs.begin(), rhs.end());
  if (auto failed = solve_spd_small_inplace(s.view(), x, flops)) {
    throw Error(ErrorCode::NotSPD, "small system is not positive definite", *failed);
  }
  return x;
}

std::optional<std::size_t> solve_general_small_inplace(MatrixView a, std::span<double> x,
                                                       FlopCounter& flops) {
  const std::size_t p = a.rows;
  flops.add(Kernel::gesv, flops::gesv(p));
  double max_abs = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < p; ++i) max_abs = std::max(max_abs, std::abs(a(i, j)));
  }
  const double tol = kEpsilon * max_abs * static_cast<double>(p);
  for (std::size_t k = 0; k < p; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < p; ++i) {
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    }
    if (!(std::abs(a(piv, k)) > tol)) return k;
    if (piv != k) {
      for (std::size_t j = 0; j < p; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(x[k], x[piv]);
    }
    const double pivot = a(k, k);
    for (std::size_t i = k + 1; i < p; ++i) a(i, k) = a(i, k) / pivot;
    for (std::size_t j = k + 1; j < p; ++j) axpy_sub(a.col(j), a.col(k), a(k, j), k + 1, p);
    axpy_sub(x.data(), a.col(k), x[k], k + 1, p);
  }
  for (std::size_t j = p; j-- > 0;) {
    x[j] = x[j] / a(j, j);
    axpy_sub(x.data(), a.col(j), x[j], 0, j);
  }
  return std::nullopt;
}

DenseMatrix invert_general(DenseMatrix m, FlopCounter& flops) {
  const std::size_t n = m.rows();
  require(n == m.cols() && n >= 1, "invert_general: matrix must be square and non-empty");
  MatrixView a = m.view();

  double max_abs = 0.0;
  for (double v : m.data()) max_abs = std::max(max_abs, std::abs(v));
  const double tol = kEpsilon * max_abs * static_cast<double>(n);

  // getrf: P·A = L·U with unit-lower L, row interchanges applied eagerly.
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    }
    if (!(std::abs(a(piv, k)) > tol)) {
      throw Error(ErrorCode::Singular, "pivot below tolerance at index " + std::to_string(k), k);
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(perm[k], perm[piv]);
    }
    const double pivot = a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) a(i, k) = a(i, k) / pivot;
    for (std::size_t j = k + 1; j < n; ++j) axpy_sub(a.col(j), a.col(k), a(k, j), k + 1, n);
  }

  // Column j of the inverse solves L·U·x = P·e_j.
  DenseMatrix inv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double* x = inv.col(j).data();
    for (std::size_t i = 0; i < n; ++i) x[i] = perm[i] == j ? 1.0 : 0.0;
    for (std::size_t k = 0; k < n; ++k) axpy_sub(x, a.col(k), x[k], k + 1, n);
    for (std::size_t k = n; k-- > 0;) {
      x[k] = x[k] / a(k, k);
      axpy_sub(x, a.col(k), x[k], 0, k);
    }
  }
  flops.add(Kernel::getri, flops::invert(n));
  return inv;
}

}  // namespace glsseq
