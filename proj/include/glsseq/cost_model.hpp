#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "glsseq/solvers.hpp"

namespace glsseq {

enum class Algorithm { blackbox, seqgls, hpgwas, gwfgls };

std::string_view to_string(Algorithm a) noexcept;
std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept;

/// Closed-form flop count of each solver, built from the same per-kernel
/// formulas the kernels charge. Leading terms:
///   blackbox  m·n³/3
///   seqgls    n³/3 + m·(n²p + np²)
///   hpgwas    n³/3 + m·(n²r + 2nrl + nr²)
///   gwfgls    2n³  + m·(2n²r + 2np²)
struct CostModel {
  Algorithm algorithm;

  std::uint64_t flops(const ProblemDims& dims) const noexcept;
};

/// Prediction for p predictors split as l = p - 1 shared columns and r = 1.
/// m = 0 leaves only the shared setup terms.
std::uint64_t predicted_flops(CostModel model, std::uint64_t n, std::uint64_t p,
                              std::uint64_t m) noexcept;

}  // namespace glsseq
