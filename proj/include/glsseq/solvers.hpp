#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "glsseq/flops.hpp"
#include "glsseq/kernels.hpp"
#include "glsseq/matrix.hpp"
#include "glsseq/thread_pool.hpp"

namespace glsseq {

/// Default cap on predictors per problem.
inline constexpr std::size_t kDefaultMaxPredictors = 20;

/// Sizes of a problem sequence: n observations, l shared columns, r columns
/// per streamed panel, m problems. Every problem has p = l + r predictors.
struct ProblemDims {
  std::size_t n = 0;
  std::size_t l = 0;
  std::size_t r = 1;
  std::size_t m = 0;

  constexpr std::size_t p() const noexcept { return l + r; }

  /// Throws Error{InvalidArgument} unless n > p >= 1, r >= 1, m >= 1 and
  /// p <= max_predictors.
  void validate(std::size_t max_predictors = kDefaultMaxPredictors) const;

  friend bool operator==(const ProblemDims&, const ProblemDims&) = default;
};

enum class SolveStatus : std::uint64_t { Ok = 0, RankDeficient = 1 };

/// Solution of one problem. Rank-deficient problems carry quiet-NaN entries.
struct SolutionRecord {
  std::size_t index = 0;
  SolveStatus status = SolveStatus::Ok;
  std::vector<double> b;

  friend bool operator==(const SolutionRecord&, const SolutionRecord&) = default;
};

/// Marks `rec` rank-deficient and fills its p entries with NaN.
void mark_rank_deficient(SolutionRecord& rec, std::size_t p);

/// A run of `count` consecutive panels starting at problem `first_index`.
/// Panel i occupies columns [i·r, (i+1)·r) of `panels`.
struct XrBlock {
  std::size_t first_index = 0;
  std::size_t count = 0;
  std::size_t r = 1;
  MatrixView panels;

  MatrixView panel(std::size_t i) const { return panels.columns(i * r, r); }
};

/// Yields successive blocks, or nullopt at the end of the stream.
using XrBlockSource = std::function<std::optional<XrBlock>()>;
/// Receives solved records in problem order.
using RecordSink = std::function<void(std::span<const SolutionRecord>)>;

/// Quantities shared by every problem of an hp-gwas sequence, computed once:
/// the Cholesky factor of M, the whitened X_L and y, S_TL = X_Lᵀ·X_L and
/// b_T = X_Lᵀ·y. Immutable after `setup`.
struct SharedDesign {
  LowerTriangular factor;
  DenseMatrix xl;
  std::vector<double> y;
  SymmetricMatrix s_tl;
  std::vector<double> b_t;

  std::size_t n() const noexcept { return factor.dim(); }
  std::size_t l() const noexcept { return xl.cols(); }

  static SharedDesign setup(SymmetricMatrix m, DenseMatrix xl, std::vector<double> y,
                            FlopCounter& flops);
};

/// Builds S_i and b_i for one whitened panel from the shared blocks and solves
/// the p×p system. Allocates; the engine below uses a scratch-reusing variant.
SolutionRecord assemble_problem(const SymmetricMatrix& s_tl, std::span<const double> b_t,
                                ConstMatrixView xl_w, ConstMatrixView xr_panel,
                                std::span<const double> y_w, std::size_t index,
                                FlopCounter& flops);

/// Per-block driver for the structured solver. Whitening of a block is split
/// into column tiles across the pool; assembly and small solves are split
/// across problems. Each worker accumulates flops into its own counter.
class HpGwasEngine {
 public:
  HpGwasEngine(const SharedDesign& design, std::size_t r, std::size_t workers);

  std::size_t workers() const noexcept { return pool_.size(); }

  /// Whitens `block.panels` in place and writes out[i] for each panel i.
  /// `out` must hold at least block.count records.
  void solve_block(const XrBlock& block, std::span<SolutionRecord> out);

  /// Per-worker counters merged in worker order.
  FlopCounter flops() const;

 private:
  struct Scratch {
    std::vector<double> s;
    std::vector<double> x;
  };

  void assemble_into(ConstMatrixView panel, std::size_t index, SolutionRecord& rec,
                     Scratch& scratch, FlopCounter& flops) const;

  const SharedDesign& design_;
  std::size_t r_;
  ThreadPool pool_;
  std::vector<FlopCounter> worker_flops_;
  std::vector<Scratch> scratch_;
};

/// One GLS problem solved from scratch: factor, whiten X and y, form the
/// normal equations, solve. Throws Error{NotSPD} if M is not SPD.
SolutionRecord solve_single_blackbox(const SymmetricMatrix& m, ConstMatrixView x,
                                     std::span<const double> y, FlopCounter& flops,
                                     std::size_t index = 0);

/// Runs `solve_single_blackbox` once per problem.
std::vector<SolutionRecord> solve_sequence_blackbox(const SymmetricMatrix& m,
                                                    std::span<const DenseMatrix> xs,
                                                    std::span<const double> y,
                                                    FlopCounter& flops);

/// Factors M and whitens y once, then whitens and solves each X_i.
std::vector<SolutionRecord> solve_sequence_seqgls(const SymmetricMatrix& m,
                                                  std::span<const DenseMatrix> xs,
                                                  std::span<const double> y,
                                                  FlopCounter& flops);

/// Structured solver over a stream of X_R blocks. The blocks' panels are
/// whitened in place.
void solve_sequence_hpgwas(const SymmetricMatrix& m, const DenseMatrix& xl,
                           const XrBlockSource& blocks, std::span<const double> y,
                           std::size_t r, std::size_t workers, const RecordSink& sink,
                           FlopCounter& flops);

/// In-core convenience: `xr` holds all m panels side by side (n × m·r) and is
/// whitened as a single block.
std::vector<SolutionRecord> solve_sequence_hpgwas(const SymmetricMatrix& m,
                                                  const DenseMatrix& xl, DenseMatrix xr,
                                                  std::span<const double> y, std::size_t r,
                                                  std::size_t workers, FlopCounter& flops);

/// Baseline with an explicit inverse of M and unsymmetric per-problem
/// products. Throws Error{Singular} if M cannot be inverted.
void solve_sequence_gwfgls(const SymmetricMatrix& m, const DenseMatrix& xl,
                           const XrBlockSource& blocks, std::span<const double> y,
                           std::size_t r, const RecordSink& sink, FlopCounter& flops);

std::vector<SolutionRecord> solve_sequence_gwfgls(const SymmetricMatrix& m,
                                                  const DenseMatrix& xl, DenseMatrix xr,
                                                  std::span<const double> y, std::size_t r,
                                                  FlopCounter& flops);

/// Concatenates (X_L | X_R panel i) into a full n×p design matrix.
DenseMatrix concat_design(const DenseMatrix& xl, const DenseMatrix& xr, std::size_t r,
                          std::size_t i);

}  // namespace glsseq
