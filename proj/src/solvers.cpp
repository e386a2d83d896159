#include "glsseq/solvers.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "glsseq/error.hpp"

namespace glsseq {

namespace {

// Problems per assembly task handed to a worker.
constexpr std::size_t kProblemsPerTask = 256;

void check_design(const SymmetricMatrix& m, std::size_t x_rows, std::size_t y_len) {
  if (m.dim() != x_rows || m.dim() != y_len) {
    throw Error(ErrorCode::DimensionMismatch,
                "covariance is " + std::to_string(m.dim()) + "x" + std::to_string(m.dim()) +
                    ", design has " + std::to_string(x_rows) + " rows, y has " +
                    std::to_string(y_len) + " entries");
  }
}

// Normal-equation tail shared by black-box and seq-gls: X and y already whitened.
SolutionRecord solve_whitened(ConstMatrixView x, std::span<const double> y, std::size_t index,
                              FlopCounter& flops) {
  const std::size_t p = x.cols;
  SolutionRecord rec{index, SolveStatus::Ok, {}};
  SymmetricMatrix s(p);
  syrk_lower_into(x, s.view(), flops);
  rec.b = matvec_t(x, y, flops);
  if (solve_spd_small_inplace(s.view(), rec.b, flops)) mark_rank_deficient(rec, p);
  return rec;
}

}  // namespace

void ProblemDims::validate(std::size_t max_predictors) const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (r < 1) fail("r must be at least 1");
  if (m < 1) fail("m must be at least 1");
  if (p() > max_predictors) {
    fail("p = " + std::to_string(p()) + " exceeds the cap of " + std::to_string(max_predictors));
  }
  if (n <= p()) fail("n = " + std::to_string(n) + " must exceed p = " + std::to_string(p()));
}

void mark_rank_deficient(SolutionRecord& rec, std::size_t p) {
  rec.status = SolveStatus::RankDeficient;
  rec.b.assign(p, std::numeric_limits<double>::quiet_NaN());
}

SharedDesign SharedDesign::setup(SymmetricMatrix m, DenseMatrix xl, std::vector<double> y,
                                 FlopCounter& flops) {
  check_design(m, xl.rows(), y.size());
  SharedDesign d;
  d.factor = cholesky_lower(std::move(m), flops);
  if (xl.cols() > 0) tri_solve_forward_inplace(d.factor, xl.view(), flops);
  d.y = tri_solve_forward(d.factor, std::move(y), flops);
  d.xl = std::move(xl);
  d.s_tl = SymmetricMatrix(d.xl.cols());
  if (d.xl.cols() > 0) {
    syrk_lower_into(d.xl.view(), d.s_tl.view(), flops);
    d.s_tl.materialize_upper();
  }
  d.b_t.assign(d.xl.cols(), 0.0);
  if (d.xl.cols() > 0) matvec_t_into(d.xl.view(), d.y, d.b_t, flops);
  return d;
}

SolutionRecord assemble_problem(const SymmetricMatrix& s_tl, std::span<const double> b_t,
                                ConstMatrixView xl_w, ConstMatrixView xr_panel,
                                std::span<const double> y_w, std::size_t index,
                                FlopCounter& flops) {
  const std::size_t l = xl_w.cols;
  const std::size_t r = xr_panel.cols;
  const std::size_t p = l + r;
  if (s_tl.dim() != l || b_t.size() != l || xr_panel.rows != xl_w.rows ||
      y_w.size() != xl_w.rows) {
    throw Error(ErrorCode::DimensionMismatch, "assemble_problem: inconsistent shared blocks");
  }
  if (p > kMaxSmallDim) throw Error(ErrorCode::InvalidArgument, "assemble_problem: p too large");

  DenseMatrix s(p, p);
  MatrixView sv = s.view();
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t i = j; i < l; ++i) sv(i, j) = s_tl(i, j);
  }
  gemm_t_into(xr_panel, xl_w, MatrixView{sv.data + l, r, l, p}, flops);
  syrk_lower_into(xr_panel, MatrixView{sv.data + l + l * p, r, r, p}, flops);

  SolutionRecord rec{index, SolveStatus::Ok, std::vector<double>(p)};
  std::copy(b_t.begin(), b_t.end(), rec.b.begin());
  matvec_t_into(xr_panel, y_w, std::span<double>(rec.b).subspan(l), flops);
  if (solve_spd_small_inplace(sv, rec.b, flops)) mark_rank_deficient(rec, p);
  return rec;
}

HpGwasEngine::HpGwasEngine(const SharedDesign& design, std::size_t r, std::size_t workers)
    : design_(design),
      r_(r),
      pool_(std::max<std::size_t>(workers, 1)),
      worker_flops_(pool_.size()),
      scratch_(pool_.size()) {
  const std::size_t p = design.l() + r;
  if (r < 1 || p > kMaxSmallDim) {
    throw Error(ErrorCode::InvalidArgument, "panel width gives unsupported p");
  }
  for (auto& s : scratch_) {
    s.s.assign(p * p, 0.0);
    s.x.assign(p, 0.0);
  }
}

void HpGwasEngine::assemble_into(ConstMatrixView panel, std::size_t index, SolutionRecord& rec,
                                 Scratch& scratch, FlopCounter& flops) const {
  const std::size_t l = design_.l();
  const std::size_t p = l + r_;
  MatrixView sv{scratch.s.data(), p, p, p};
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t i = j; i < l; ++i) sv(i, j) = design_.s_tl(i, j);
  }
  gemm_t_into(panel, design_.xl.view(), MatrixView{sv.data + l, r_, l, p}, flops);
  syrk_lower_into(panel, MatrixView{sv.data + l + l * p, r_, r_, p}, flops);

  std::span<double> x(scratch.x);
  std::copy(design_.b_t.begin(), design_.b_t.end(), x.begin());
  matvec_t_into(panel, design_.y, x.subspan(l), flops);

  rec.index = index;
  if (solve_spd_small_inplace(sv, x, flops)) {
    mark_rank_deficient(rec, p);
  } else {
    rec.status = SolveStatus::Ok;
    rec.b.assign(x.begin(), x.end());
  }
}

void HpGwasEngine::solve_block(const XrBlock& block, std::span<SolutionRecord> out) {
  if (block.r != r_ || block.panels.rows != design_.n() ||
      block.panels.cols < block.count * r_) {
    throw Error(ErrorCode::DimensionMismatch, "block shape does not match the shared design");
  }
  if (out.size() < block.count) {
    throw Error(ErrorCode::WorkspaceOverrun, "record buffer smaller than block");
  }

  // Phase 1: one multi-column triangular solve over the whole block, split
  // into column tiles. Columns are solved independently, so the split does
  // not change any bit of the result.
  const std::size_t cols = block.count * r_;
  const std::size_t tile = kTile;
  const std::size_t tiles = (cols + tile - 1) / tile;
  pool_.run(tiles, [&](std::size_t t, std::size_t w) {
    const std::size_t first = t * tile;
    const std::size_t count = std::min(tile, cols - first);
    tri_solve_forward_inplace(design_.factor, block.panels.columns(first, count),
                              worker_flops_[w]);
  });

  // Phase 2: independent per-problem assembly and small solves.
  const std::size_t tasks = (block.count + kProblemsPerTask - 1) / kProblemsPerTask;
  pool_.run(tasks, [&](std::size_t t, std::size_t w) {
    const std::size_t begin = t * kProblemsPerTask;
    const std::size_t end = std::min(block.count, begin + kProblemsPerTask);
    for (std::size_t i = begin; i < end; ++i) {
      assemble_into(block.panel(i), block.first_index + i, out[i], scratch_[w],
                    worker_flops_[w]);
    }
  });
}

FlopCounter HpGwasEngine::flops() const {
  FlopCounter total;
  for (const auto& f : worker_flops_) total.merge(f);
  return total;
}

SolutionRecord solve_single_blackbox(const SymmetricMatrix& m, ConstMatrixView x,
                                     std::span<const double> y, FlopCounter& flops,
                                     std::size_t index) {
  check_design(m, x.rows, y.size());
  const LowerTriangular factor = cholesky_lower(m, flops);
  DenseMatrix xw(x.rows, x.cols);
  for (std::size_t j = 0; j < x.cols; ++j) std::copy_n(x.col(j), x.rows, xw.col(j).data());
  tri_solve_forward_inplace(factor, xw.view(), flops);
  const auto yw = tri_solve_forward(factor, std::vector<double>(y.begin(), y.end()), flops);
  return solve_whitened(xw.view(), yw, index, flops);
}

std::vector<SolutionRecord> solve_sequence_blackbox(const SymmetricMatrix& m,
                                                    std::span<const DenseMatrix> xs,
                                                    std::span<const double> y,
                                                    FlopCounter& flops) {
  std::vector<SolutionRecord> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.push_back(solve_single_blackbox(m, xs[i].view(), y, flops, i));
  }
  return out;
}

std::vector<SolutionRecord> solve_sequence_seqgls(const SymmetricMatrix& m,
                                                  std::span<const DenseMatrix> xs,
                                                  std::span<const double> y,
                                                  FlopCounter& flops) {
  check_design(m, m.dim(), y.size());
  const LowerTriangular factor = cholesky_lower(m, flops);
  const auto yw = tri_solve_forward(factor, std::vector<double>(y.begin(), y.end()), flops);
  std::vector<SolutionRecord> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check_design(m, xs[i].rows(), y.size());
    DenseMatrix xw = tri_solve_forward(factor, xs[i], flops);
    out.push_back(solve_whitened(xw.view(), yw, i, flops));
  }
  return out;
}

void solve_sequence_hpgwas(const SymmetricMatrix& m, const DenseMatrix& xl,
                           const XrBlockSource& blocks, std::span<const double> y,
                           std::size_t r, std::size_t workers, const RecordSink& sink,
                           FlopCounter& flops) {
  const SharedDesign design =
      SharedDesign::setup(m, xl, std::vector<double>(y.begin(), y.end()), flops);
  HpGwasEngine engine(design, r, workers);
  std::vector<SolutionRecord> records;
  while (auto block = blocks()) {
    if (records.size() < block->count) records.resize(block->count);
    engine.solve_block(*block, records);
    sink(std::span<const SolutionRecord>(records.data(), block->count));
  }
  flops.merge(engine.flops());
}

std::vector<SolutionRecord> solve_sequence_hpgwas(const SymmetricMatrix& m,
                                                  const DenseMatrix& xl, DenseMatrix xr,
                                                  std::span<const double> y, std::size_t r,
                                                  std::size_t workers, FlopCounter& flops) {
  if (r == 0 || xr.cols() % r != 0) {
    throw Error(ErrorCode::DimensionMismatch, "X_R column count is not a multiple of r");
  }
  std::vector<SolutionRecord> out;
  bool served = false;
  const XrBlockSource source = [&]() -> std::optional<XrBlock> {
    if (served) return std::nullopt;
    served = true;
    return XrBlock{0, xr.cols() / r, r, xr.view()};
  };
  solve_sequence_hpgwas(
      m, xl, source, y, r, workers,
      [&](std::span<const SolutionRecord> recs) { out.insert(out.end(), recs.begin(), recs.end()); },
      flops);
  return out;
}

void solve_sequence_gwfgls(const SymmetricMatrix& m, const DenseMatrix& xl,
                           const XrBlockSource& blocks, std::span<const double> y,
                           std::size_t r, const RecordSink& sink, FlopCounter& flops) {
  check_design(m, xl.rows(), y.size());
  const std::size_t n = m.dim();
  const std::size_t l = xl.cols();
  const std::size_t p = l + r;

  const DenseMatrix m_inv = invert_general(m.to_dense(), flops);

  // W = (W_L | W_R) and X = (X_L | X_R) share their left l columns across
  // problems; only the right r columns are rewritten per problem.
  DenseMatrix w(n, p);
  DenseMatrix x(n, p);
  if (l > 0) {
    gemm_t_into(m_inv.view(), xl.view(), w.view().columns(0, l), flops);
    for (std::size_t j = 0; j < l; ++j) std::copy_n(xl.col(j).data(), n, x.col(j).data());
  }
  DenseMatrix s(p, p);
  std::vector<SolutionRecord> records;
  while (auto block = blocks()) {
    records.resize(block->count);
    for (std::size_t i = 0; i < block->count; ++i) {
      const ConstMatrixView panel = block->panel(i);
      for (std::size_t j = 0; j < r; ++j) std::copy_n(panel.col(j), n, x.col(l + j).data());
      gemm_t_into(m_inv.view(), panel, w.view().columns(l, r), flops);
      gemm_t_into(w.view(), x.view(), s.view(), flops);
      SolutionRecord& rec = records[i];
      rec.index = block->first_index + i;
      rec.status = SolveStatus::Ok;
      rec.b.resize(p);
      matvec_t_into(w.view(), y, rec.b, flops);
      if (solve_general_small_inplace(s.view(), rec.b, flops)) mark_rank_deficient(rec, p);
    }
    sink(records);
  }
}

std::vector<SolutionRecord> solve_sequence_gwfgls(const SymmetricMatrix& m,
                                                  const DenseMatrix& xl, DenseMatrix xr,
                                                  std::span<const double> y, std::size_t r,
                                                  FlopCounter& flops) {
  if (r == 0 || xr.cols() % r != 0) {
    throw Error(ErrorCode::DimensionMismatch, "X_R column count is not a multiple of r");
  }
  std::vector<SolutionRecord> out;
  bool served = false;
  const XrBlockSource source = [&]() -> std::optional<XrBlock> {
    if (served) return std::nullopt;
    served = true;
    return XrBlock{0, xr.cols() / r, r, xr.view()};
  };
  solve_sequence_gwfgls(
      m, xl, source, y, r,
      [&](std::span<const SolutionRecord> recs) { out.insert(out.end(), recs.begin(), recs.end()); },
      flops);
  return out;
}

DenseMatrix concat_design(const DenseMatrix& xl, const DenseMatrix& xr, std::size_t r,
                          std::size_t i) {
  const std::size_t n = xl.rows();
  DenseMatrix x(n, xl.cols() + r);
  for (std::size_t j = 0; j < xl.cols(); ++j) std::copy_n(xl.col(j).data(), n, x.col(j).data());
  for (std::size_t j = 0; j < r; ++j) {
    std::copy_n(xr.col(i * r + j).data(), n, x.col(xl.cols() + j).data());
  }
  return x;
}

}  // namespace glsseq
