#pragma once

#include <optional>
#include <span>
#include <vector>

#include "glsseq/matrix.hpp"

namespace glsseq::oracle {

/// b = (Xᵀ·M⁻¹·X)⁻¹·Xᵀ·M⁻¹·y through two explicit inverses and plain loops.
/// Shares no code with the solvers apart from `invert_general`. Returns
/// nullopt when either inverse fails.
std::optional<std::vector<double>> solve(const DenseMatrix& m, const DenseMatrix& x,
                                         std::span<const double> y);

/// Same, with M⁻¹ supplied by the caller so a sequence inverts M once.
std::optional<std::vector<double>> solve_with_inverse(const DenseMatrix& m_inv,
                                                      const DenseMatrix& x,
                                                      std::span<const double> y);

/// ‖b − reference‖∞ / ‖reference‖∞ (absolute error when the reference is zero).
double relative_error(std::span<const double> b, std::span<const double> reference);

}  // namespace glsseq::oracle
