#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "glsseq/flops.hpp"
#include "glsseq/matrix.hpp"

namespace glsseq {

/// Register/cache tile used by the blocked kernels.
inline constexpr std::size_t kTile = 64;

/// Largest system accepted by the small dense solvers.
inline constexpr std::size_t kMaxSmallDim = 64;

// Analytic flop formulas, one per kernel. Every kernel call adds exactly the
// matching formula to the counter it is given.
namespace flops {
constexpr std::uint64_t cholesky(std::uint64_t n) { return n * (n + 1) * (2 * n + 1) / 6; }
constexpr std::uint64_t tri_solve(std::uint64_t n, std::uint64_t cols) { return n * n * cols; }
constexpr std::uint64_t syrk(std::uint64_t rows, std::uint64_t cols) { return rows * cols * cols; }
constexpr std::uint64_t gemm(std::uint64_t rows, std::uint64_t a_cols, std::uint64_t b_cols) {
  return 2 * rows * a_cols * b_cols;
}
constexpr std::uint64_t gemv(std::uint64_t rows, std::uint64_t cols) { return 2 * rows * cols; }
constexpr std::uint64_t posv(std::uint64_t p) { return p * p * p / 3 + 2 * p * p; }
constexpr std::uint64_t gesv(std::uint64_t p) { return 2 * p * p * p / 3 + 2 * p * p; }
constexpr std::uint64_t invert(std::uint64_t n) { return 2 * n * n * n; }
}  // namespace flops

/// Pivot tolerance shared by the SPD factorizations: 2^-52 times the largest
/// diagonal entry.
double spd_pivot_tolerance(ConstMatrixView a) noexcept;

/// Lower Cholesky factor of M (potrf). Throws Error{NotSPD} with the failing
/// pivot index.
LowerTriangular cholesky_lower(SymmetricMatrix m, FlopCounter& flops);

/// Solves L·Z = B in place, column by column (trsm; trsv for one column).
/// Every column is computed with the same operation sequence regardless of
/// how many other columns share the call.
void tri_solve_forward_inplace(const LowerTriangular& l, MatrixView b, FlopCounter& flops);
DenseMatrix tri_solve_forward(const LowerTriangular& l, DenseMatrix b, FlopCounter& flops);
std::vector<double> tri_solve_forward(const LowerTriangular& l, std::vector<double> b,
                                      FlopCounter& flops);

/// Aᵀ·A, lower triangle only (syrk; dot for a single column).
SymmetricMatrix syrk_lower(ConstMatrixView a, FlopCounter& flops);
void syrk_lower_into(ConstMatrixView a, MatrixView c, FlopCounter& flops);

/// Aᵀ·B (gemm; gemv when either operand is a single column).
DenseMatrix gemm_t(ConstMatrixView a, ConstMatrixView b, FlopCounter& flops);
void gemm_t_into(ConstMatrixView a, ConstMatrixView b, MatrixView c, FlopCounter& flops);

/// Aᵀ·v (gemv; dot for a single column).
std::vector<double> matvec_t(ConstMatrixView a, std::span<const double> v, FlopCounter& flops);
void matvec_t_into(ConstMatrixView a, std::span<const double> v, std::span<double> out,
                   FlopCounter& flops);

/// Solves S·x = rhs through a Cholesky factorization (posv). Throws
/// Error{NotSPD} when S is not numerically positive definite.
std::vector<double> solve_spd_small(SymmetricMatrix s, std::span<const double> rhs,
                                    FlopCounter& flops);

/// Non-throwing posv for the per-problem hot path. `s` (lower triangle) is
/// overwritten by its factor and `x` by the solution. Returns the failing
/// pivot index, or nullopt on success.
std::optional<std::size_t> solve_spd_small_inplace(MatrixView s, std::span<double> x,
                                                   FlopCounter& flops);

/// General small solve with partial pivoting (gesv). Same contract as
/// `solve_spd_small_inplace` but reads the full matrix.
std::optional<std::size_t> solve_general_small_inplace(MatrixView a, std::span<double> x,
                                                       FlopCounter& flops);

/// Explicit inverse through LU with partial pivoting (getrf + getri).
/// Throws Error{Singular} with the failing pivot index.
DenseMatrix invert_general(DenseMatrix m, FlopCounter& flops);

/// Dot product with a fixed accumulation order. Shared by gemm_t, syrk_lower
/// and matvec_t so that the three agree bitwise on identical inputs.
double dot(const double* a, const double* b, std::size_t n) noexcept;

}  // namespace glsseq
