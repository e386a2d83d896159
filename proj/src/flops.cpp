#include "glsseq/flops.hpp"

#include <numeric>

namespace glsseq {

std::string_view kernel_name(Kernel k) noexcept {
  switch (k) {
    case Kernel::potrf: return "potrf";
    case Kernel::trsm: return "trsm";
    case Kernel::trsv: return "trsv";
    case Kernel::syrk: return "syrk";
    case Kernel::gemm: return "gemm";
    case Kernel::gemv: return "gemv";
    case Kernel::dot: return "dot";
    case Kernel::posv: return "posv";
    case Kernel::gesv: return "gesv";
    case Kernel::getri: return "getri";
    case Kernel::count_: break;
  }
  return "?";
}

bool is_matrix_matrix_class(Kernel k) noexcept {
  switch (k) {
    case Kernel::potrf:
    case Kernel::trsm:
    case Kernel::syrk:
    case Kernel::gemm:
    case Kernel::getri:
      return true;
    default:
      return false;
  }
}

std::uint64_t FlopCounter::total() const noexcept {
  return std::accumulate(per_kernel_.begin(), per_kernel_.end(), std::uint64_t{0});
}

std::uint64_t FlopCounter::matrix_matrix_flops() const noexcept {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < per_kernel_.size(); ++i) {
    if (is_matrix_matrix_class(static_cast<Kernel>(i))) sum += per_kernel_[i];
  }
  return sum;
}

std::map<std::string, std::uint64_t> FlopCounter::breakdown() const {
  std::map<std::string, std::uint64_t> out;
  for (std::size_t i = 0; i < per_kernel_.size(); ++i) {
    if (per_kernel_[i] != 0) out.emplace(kernel_name(static_cast<Kernel>(i)), per_kernel_[i]);
  }
  return out;
}

void FlopCounter::merge(const FlopCounter& other) noexcept {
  for (std::size_t i = 0; i < per_kernel_.size(); ++i) per_kernel_[i] += other.per_kernel_[i];
}

}  // namespace glsseq
