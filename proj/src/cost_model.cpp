#include "glsseq/cost_model.hpp"

namespace glsseq {

std::string_view to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::blackbox: return "blackbox";
    case Algorithm::seqgls: return "seqgls";
    case Algorithm::hpgwas: return "hpgwas";
    case Algorithm::gwfgls: return "gwfgls";
  }
  return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept {
  for (auto a : {Algorithm::blackbox, Algorithm::seqgls, Algorithm::hpgwas, Algorithm::gwfgls}) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

std::uint64_t CostModel::flops(const ProblemDims& dims) const noexcept {
  const std::uint64_t n = dims.n;
  const std::uint64_t l = dims.l;
  const std::uint64_t r = dims.r;
  const std::uint64_t m = dims.m;
  const std::uint64_t p = l + r;
  switch (algorithm) {
    case Algorithm::blackbox:
      return m * (flops::cholesky(n) + flops::tri_solve(n, p) + flops::tri_solve(n, 1) +
                  flops::syrk(n, p) + flops::gemv(n, p) + flops::posv(p));
    case Algorithm::seqgls:
      return flops::cholesky(n) + flops::tri_solve(n, 1) +
             m * (flops::tri_solve(n, p) + flops::syrk(n, p) + flops::gemv(n, p) +
                  flops::posv(p));
    case Algorithm::hpgwas:
      return flops::cholesky(n) + flops::tri_solve(n, l) + flops::tri_solve(n, 1) +
             flops::syrk(n, l) + flops::gemv(n, l) +
             m * (flops::tri_solve(n, r) + flops::gemm(n, r, l) + flops::syrk(n, r) +
                  flops::gemv(n, r) + flops::posv(p));
    case Algorithm::gwfgls:
      return flops::invert(n) + flops::gemm(n, n, l) +
             m * (flops::gemm(n, n, r) + flops::gemm(n, p, p) + flops::gemv(n, p) +
                  flops::gesv(p));
  }
  return 0;
}

std::uint64_t predicted_flops(CostModel model, std::uint64_t n, std::uint64_t p,
                              std::uint64_t m) noexcept {
  const std::uint64_t l = p > 0 ? p - 1 : 0;
  return model.flops(ProblemDims{n, l, 1, m});
}

}  // namespace glsseq
