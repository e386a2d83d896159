#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace glsseq {

/// Kernel classes used for flop attribution. Names follow the BLAS/LAPACK
/// routine each kernel stands in for.
enum class Kernel : std::uint8_t {
  potrf,
  trsm,
  trsv,
  syrk,
  gemm,
  gemv,
  dot,
  posv,
  gesv,
  getri,
  count_
};

std::string_view kernel_name(Kernel k) noexcept;

/// True for matrix-matrix class kernels (work grows with a blocking dimension).
bool is_matrix_matrix_class(Kernel k) noexcept;

/// Analytic flop accumulator. Not thread-safe: give each worker its own and
/// `merge` at synchronization points.
class FlopCounter {
 public:
  void add(Kernel k, std::uint64_t flops) noexcept {
    per_kernel_[static_cast<std::size_t>(k)] += flops;
  }

  std::uint64_t total() const noexcept;
  std::uint64_t of(Kernel k) const noexcept {
    return per_kernel_[static_cast<std::size_t>(k)];
  }
  std::uint64_t matrix_matrix_flops() const noexcept;

  /// Nonzero entries keyed by kernel name.
  std::map<std::string, std::uint64_t> breakdown() const;

  void merge(const FlopCounter& other) noexcept;
  void reset() noexcept { per_kernel_.fill(0); }

 private:
  std::array<std::uint64_t, static_cast<std::size_t>(Kernel::count_)> per_kernel_{};
};

}  // namespace glsseq
