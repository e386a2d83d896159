#include "glsseq/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "glsseq/error.hpp"

namespace glsseq {

namespace {

using Clock = std::chrono::steady_clock;

Seconds since(Clock::time_point t0) { return Clock::now() - t0; }

constexpr double kOverlapMargin = 1.1;

std::uint64_t record_memory_bytes(const ProblemDims& dims) {
  return sizeof(SolutionRecord) + 8 * dims.p();
}

void check_design(const SharedDesign& design, const ProblemDims& dims) {
  if (design.n() != dims.n || design.l() != dims.l) {
    throw Error(ErrorCode::DimMismatch, "shared design does not match the X_R stream");
  }
}

void check_schedule(const BlockSchedule& schedule, const ProblemDims& dims) {
  std::size_t next = 0;
  for (const auto& b : schedule.blocks) {
    if (b.first != next || b.count == 0) {
      throw Error(ErrorCode::InvalidBlockSize, "schedule is not a contiguous cover");
    }
    next += b.count;
  }
  if (next != dims.m) throw Error(ErrorCode::InvalidBlockSize, "schedule does not cover m");
}

/// Re-raises an error from the backend with the block id attached.
[[noreturn]] void rethrow_with_block(std::size_t block_id) {
  try {
    throw;
  } catch (const Error& e) {
    if (e.index()) throw;
    throw Error(e.code(), e.detail() + " (block " + std::to_string(block_id) + ")", block_id);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::IoFailed,
                std::string(e.what()) + " (block " + std::to_string(block_id) + ")", block_id);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Block planning

std::size_t BlockSchedule::max_count() const noexcept {
  std::size_t k = 0;
  for (const auto& b : blocks) k = std::max(k, b.count);
  return k;
}

std::uint64_t resident_bytes(const ProblemDims& dims) {
  return 8 * (dims.n * dims.n + dims.n * dims.l + dims.n);
}

std::uint64_t workspace_bytes(const ProblemDims& dims, std::size_t k) {
  return k * (layout::panel_bytes(dims) + record_memory_bytes(dims));
}

std::size_t default_warmup(std::size_t k) noexcept { return std::min<std::size_t>(k, 256); }

BlockSchedule plan_blocks(const ProblemDims& dims, std::size_t k, std::size_t warmup,
                          std::optional<std::uint64_t> mem_limit) {
  if (k == 0) throw Error(ErrorCode::InvalidBlockSize, "block size must be at least 1");
  if (warmup > k) throw Error(ErrorCode::InvalidBlockSize, "warm-up block larger than k");

  BlockSchedule s;
  s.block_size = k;
  s.warmup_size = warmup;
  std::size_t first = 0;
  if (warmup > 0 && dims.m > 0) {
    const std::size_t count = std::min(warmup, dims.m);
    s.blocks.push_back({0, count});
    first = count;
  }
  while (first < dims.m) {
    const std::size_t count = std::min(k, dims.m - first);
    s.blocks.push_back({first, count});
    first += count;
  }

  if (mem_limit) {
    const std::uint64_t need = resident_bytes(dims) + 2 * workspace_bytes(dims, s.max_count());
    if (need > *mem_limit) {
      throw Error(ErrorCode::InvalidBlockSize,
                  "two workspaces of " + std::to_string(s.max_count()) + " panels need " +
                      std::to_string(need) + " bytes, limit is " + std::to_string(*mem_limit));
    }
  }
  return s;
}

BlockTimePrediction predict_block_times(const ProblemDims& dims, std::size_t k,
                                        double compute_rate, double io_rate,
                                        Seconds io_latency) {
  const double kd = static_cast<double>(k);
  const double load_bytes = kd * static_cast<double>(layout::panel_bytes(dims));
  const double store_bytes = kd * static_cast<double>(layout::record_bytes(dims));
  return {Seconds{kd / compute_rate}, io_latency + Seconds{load_bytes / io_rate},
          io_latency + Seconds{store_bytes / io_rate}};
}

BlockSizeChoice select_block_size(std::uint64_t mem_limit, const ProblemDims& dims,
                                  double compute_rate, double io_rate, Seconds io_latency) {
  if (!(compute_rate > 0) || !(io_rate > 0) || io_latency.count() < 0) {
    throw Error(ErrorCode::InvalidArgument, "rates must be positive");
  }
  const std::uint64_t resident = resident_bytes(dims);
  const std::uint64_t per_problem = workspace_bytes(dims, 1);
  if (mem_limit < resident + 2 * per_problem) {
    throw Error(ErrorCode::InsufficientMemory,
                "memory limit " + std::to_string(mem_limit) + " cannot hold " +
                    std::to_string(resident + 2 * per_problem) + " bytes for k = 1");
  }
  std::size_t k = static_cast<std::size_t>((mem_limit - resident) / (2 * per_problem));
  k = std::min(k, std::max<std::size_t>(dims.m, 1));

  // Compute grows linearly in k while load and store carry a fixed latency,
  // so when the overlap condition holds for any k it holds for the largest.
  const auto t = predict_block_times(dims, k, compute_rate, io_rate, io_latency);
  const bool overlaps = t.compute.count() > kOverlapMargin * (t.load + t.store).count();
  return {k, !overlaps};
}

// ---------------------------------------------------------------------------
// Backends

FileBackend::FileBackend(const std::filesystem::path& xr_file,
                         const std::filesystem::path& b_file)
    : reader_(xr_file), writer_(b_file, reader_.dims()) {}

XrBlock FileBackend::read_block(std::size_t first, std::size_t count, std::span<double> dest,
                                std::size_t block_id) {
  return reader_.read_block(first, count, dest, block_id);
}

void FileBackend::write_records(std::span<const SolutionRecord> records, std::size_t block_id) {
  try {
    writer_.write_block(records);
  } catch (...) {
    rethrow_with_block(block_id);
  }
}

void FileBackend::finalize() { writer_.finalize(); }

MemoryBackend::MemoryBackend(ProblemDims dims, DenseMatrix xr)
    : dims_(dims), xr_(std::move(xr)), records_(dims.m) {
  if (xr_.rows() != dims_.n || xr_.cols() != dims_.m * dims_.r) {
    throw Error(ErrorCode::DimMismatch, "X_R matrix does not match dims");
  }
}

XrBlock MemoryBackend::read_block(std::size_t first, std::size_t count, std::span<double> dest,
                                  std::size_t block_id) {
  if (first + count > dims_.m) {
    throw Error(ErrorCode::OutOfRange, "panels past the end of the stream", block_id);
  }
  const std::size_t values = count * dims_.r * dims_.n;
  if (dest.size() < values) {
    throw Error(ErrorCode::WorkspaceOverrun, "destination smaller than block", block_id);
  }
  const auto src = xr_.data().subspan(first * dims_.r * dims_.n, values);
  std::copy(src.begin(), src.end(), dest.begin());
  return {first, count, dims_.r, MatrixView{dest.data(), dims_.n, count * dims_.r, dims_.n}};
}

void MemoryBackend::write_records(std::span<const SolutionRecord> records,
                                  std::size_t block_id) {
  for (const auto& rec : records) {
    if (rec.index >= dims_.m) {
      throw Error(ErrorCode::OutOfRange, "record index past m", block_id);
    }
    records_[rec.index] = rec;
  }
}

Seconds SimulatedIo::delay(std::uint64_t bytes) const noexcept {
  const double transfer = std::isinf(bandwidth) ? 0.0 : static_cast<double>(bytes) / bandwidth;
  return latency + Seconds{transfer};
}

SimulatedBackend::SimulatedBackend(std::unique_ptr<StorageBackend> inner, SimulatedIo io)
    : inner_(std::move(inner)), io_(io) {
  if (io_.latency.count() < 0 || !(io_.bandwidth > 0)) {
    throw Error(ErrorCode::InvalidArgument, "simulated latency and bandwidth must be positive");
  }
}

XrBlock SimulatedBackend::read_block(std::size_t first, std::size_t count,
                                     std::span<double> dest, std::size_t block_id) {
  const auto start = Clock::now();
  XrBlock block = inner_->read_block(first, count, dest, block_id);
  const Seconds d = io_.delay(count * layout::panel_bytes(inner_->dims()));
  std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(d));
  total_ += d;
  return block;
}

void SimulatedBackend::write_records(std::span<const SolutionRecord> records,
                                     std::size_t block_id) {
  const auto start = Clock::now();
  inner_->write_records(records, block_id);
  const Seconds d = io_.delay(records.size() * layout::record_bytes(inner_->dims()));
  std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(d));
  total_ += d;
}

std::unique_ptr<StorageBackend> storage_backend(std::unique_ptr<StorageBackend> real,
                                                std::optional<SimulatedIo> simulated) {
  if (!simulated) return real;
  return std::make_unique<SimulatedBackend>(std::move(real), *simulated);
}

// ---------------------------------------------------------------------------
// Workspaces and the transfer agent

Workspace::Workspace(const ProblemDims& dims, std::size_t capacity_panels)
    : capacity(capacity_panels), xr(capacity_panels * dims.n * dims.r), b(capacity_panels) {
  for (auto& rec : b) rec.b.reserve(dims.p());
}

TransferAgent::TransferAgent(StorageBackend& backend)
    : backend_(backend), thread_([this] { loop(); }) {}

TransferAgent::~TransferAgent() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  thread_.join();
}

void TransferAgent::log(Event::Type type, TransferKind kind, std::size_t block_id) {
  events_.push_back({type, kind, block_id});
}

TicketHandle TransferAgent::submit_read(std::size_t block_id, std::size_t first,
                                        std::size_t count, Workspace& dest) {
  auto ticket = std::make_shared<TransferTicket>(TransferKind::Read, block_id);
  {
    std::lock_guard lock(mutex_);
    if (outstanding_read_) {
      throw Error(ErrorCode::InvalidArgument, "a read is already outstanding", block_id);
    }
    outstanding_read_ = ticket;
    queue_.push_back({ticket, first, count, &dest, {}});
    log(Event::Type::Submitted, TransferKind::Read, block_id);
  }
  wake_.notify_one();
  return ticket;
}

TicketHandle TransferAgent::submit_write(std::size_t block_id,
                                         std::span<const SolutionRecord> records) {
  auto ticket = std::make_shared<TransferTicket>(TransferKind::Write, block_id);
  {
    std::lock_guard lock(mutex_);
    if (outstanding_write_) {
      throw Error(ErrorCode::InvalidArgument, "a write is already outstanding", block_id);
    }
    outstanding_write_ = ticket;
    queue_.push_back({ticket, 0, 0, nullptr, records});
    log(Event::Type::Submitted, TransferKind::Write, block_id);
  }
  wake_.notify_one();
  return ticket;
}

void TransferAgent::wait(const TicketHandle& ticket) {
  std::unique_lock lock(mutex_);
  done_.wait(lock, [&] { return ticket->state.load() != TicketState::Pending; });
  log(Event::Type::Waited, ticket->kind, ticket->block_id);
  if (outstanding_read_ == ticket) outstanding_read_.reset();
  if (outstanding_write_ == ticket) outstanding_write_.reset();
  if (ticket->state.load() == TicketState::Failed) std::rethrow_exception(ticket->error);
}

std::vector<TransferAgent::Event> TransferAgent::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

void TransferAgent::loop() {
  for (;;) {
    Request req;
    {
      std::unique_lock lock(mutex_);
      wake_.wait(lock, [&] { return stop_ || !queue_.empty(); });
      if (stop_) break;
      req = std::move(queue_.front());
      queue_.pop_front();
      log(Event::Type::Started, req.ticket->kind, req.ticket->block_id);
    }

    const auto t0 = Clock::now();
    TicketState state = TicketState::Done;
    try {
      if (req.ticket->kind == TransferKind::Read) {
        if (req.dest->role.load() != WorkspaceRole::IO) {
          throw Error(ErrorCode::WorkspaceOverrun, "read into a workspace in compute role",
                      req.ticket->block_id);
        }
        try {
          req.dest->block = backend_.read_block(req.first, req.count, req.dest->xr,
                                                req.ticket->block_id);
        } catch (...) {
          rethrow_with_block(req.ticket->block_id);
        }
      } else {
        try {
          backend_.write_records(req.records, req.ticket->block_id);
        } catch (...) {
          rethrow_with_block(req.ticket->block_id);
        }
      }
    } catch (...) {
      req.ticket->error = std::current_exception();
      state = TicketState::Failed;
    }
    req.ticket->service_time = since(t0);

    {
      std::lock_guard lock(mutex_);
      req.ticket->state.store(state);
      log(Event::Type::Completed, req.ticket->kind, req.ticket->block_id);
    }
    done_.notify_all();
  }

  // Abandoned requests fail so no waiter blocks forever.
  std::lock_guard lock(mutex_);
  for (auto& req : queue_) {
    req.ticket->error = std::make_exception_ptr(
        Error(ErrorCode::IoFailed, "transfer agent stopped", req.ticket->block_id));
    req.ticket->state.store(TicketState::Failed);
  }
  queue_.clear();
  done_.notify_all();
}

// ---------------------------------------------------------------------------
// Out-of-core runs

double OverlapReport::exposed_fraction_after_first_load() const noexcept {
  const double denom = (wall - initial_load_wait).count();
  if (denom <= 0) return 0.0;
  return (read_wait + write_wait).count() / denom;
}

OverlapReport run_ooc_sync(const SharedDesign& design, StorageBackend& backend,
                           const BlockSchedule& schedule, std::size_t workers,
                           FlopCounter& flops) {
  const auto t_start = Clock::now();
  const ProblemDims dims = backend.dims();
  check_design(design, dims);
  check_schedule(schedule, dims);

  OverlapReport rep;
  Workspace ws(dims, schedule.max_count());
  rep.peak_buffer_bytes = resident_bytes(dims) + workspace_bytes(dims, ws.capacity);
  HpGwasEngine engine(design, dims.r, workers);

  for (std::size_t j = 0; j < schedule.blocks.size(); ++j) {
    const auto& blk = schedule.blocks[j];
    BlockTiming bt{j, blk.first, blk.count};

    auto t0 = Clock::now();
    std::optional<XrBlock> block;
    try {
      block = backend.read_block(blk.first, blk.count, ws.xr, j);
    } catch (...) {
      rethrow_with_block(j);
    }
    bt.read_wait = since(t0);

    t0 = Clock::now();
    engine.solve_block(*block, ws.b);
    bt.compute = since(t0);

    t0 = Clock::now();
    try {
      backend.write_records(std::span<const SolutionRecord>(ws.b.data(), blk.count), j);
    } catch (...) {
      rethrow_with_block(j);
    }
    bt.write_wait = since(t0);

    (j == 0 ? rep.initial_load_wait : rep.read_wait) += bt.read_wait;
    rep.compute += bt.compute;
    rep.write_wait += bt.write_wait;
    for (std::size_t i = 0; i < blk.count; ++i) {
      if (ws.b[i].status == SolveStatus::RankDeficient) ++rep.rank_deficient;
    }
    rep.blocks.push_back(bt);
  }

  const auto t0 = Clock::now();
  backend.finalize();
  rep.write_wait += since(t0);
  flops.merge(engine.flops());
  rep.wall = since(t_start);
  return rep;
}

OverlapReport run_ooc_async(const SharedDesign& design, StorageBackend& backend,
                            const BlockSchedule& schedule, std::size_t workers,
                            FlopCounter& flops) {
  const auto t_start = Clock::now();
  const ProblemDims dims = backend.dims();
  check_design(design, dims);
  check_schedule(schedule, dims);

  OverlapReport rep;
  const std::size_t capacity = schedule.max_count();
  Workspace ws[2] = {Workspace(dims, capacity), Workspace(dims, capacity)};
  rep.peak_buffer_bytes = resident_bytes(dims) + 2 * workspace_bytes(dims, capacity);
  ws[0].role = WorkspaceRole::IO;
  ws[1].role = WorkspaceRole::Compute;
  HpGwasEngine engine(design, dims.r, workers);
  TransferAgent agent(backend);  // declared after the workspaces: joins first

  const auto& blocks = schedule.blocks;
  std::size_t cur = 0;
  TicketHandle read = agent.submit_read(0, blocks[0].first, blocks[0].count, ws[cur]);
  TicketHandle write;

  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const auto& blk = blocks[j];
    BlockTiming bt{j, blk.first, blk.count};
    Workspace& comp = ws[cur];
    Workspace& io = ws[1 - cur];

    auto t0 = Clock::now();
    agent.wait(read);
    bt.read_wait = since(t0);

    // Swap roles at the block boundary, then prefetch the next block.
    comp.role = WorkspaceRole::Compute;
    io.role = WorkspaceRole::IO;
    if (j + 1 < blocks.size()) {
      read = agent.submit_read(j + 1, blocks[j + 1].first, blocks[j + 1].count, io);
    }

    t0 = Clock::now();
    engine.solve_block(*comp.block, comp.b);
    bt.compute = since(t0);

    t0 = Clock::now();
    if (write) agent.wait(write);
    bt.write_wait = since(t0);
    write = agent.submit_write(j, std::span<const SolutionRecord>(comp.b.data(), blk.count));

    (j == 0 ? rep.initial_load_wait : rep.read_wait) += bt.read_wait;
    rep.compute += bt.compute;
    rep.write_wait += bt.write_wait;
    for (std::size_t i = 0; i < blk.count; ++i) {
      if (comp.b[i].status == SolveStatus::RankDeficient) ++rep.rank_deficient;
    }
    rep.blocks.push_back(bt);
    cur = 1 - cur;
  }

  auto t0 = Clock::now();
  agent.wait(write);
  backend.finalize();
  const Seconds tail = since(t0);
  rep.write_wait += tail;
  rep.blocks.back().write_wait += tail;
  flops.merge(engine.flops());
  rep.wall = since(t_start);
  return rep;
}

namespace {

template <typename Run>
OverlapReport with_setup(StaticOperands operands, FlopCounter& flops, Run run) {
  const auto t0 = Clock::now();
  const SharedDesign design = SharedDesign::setup(std::move(operands.m), std::move(operands.xl),
                                                  std::move(operands.y), flops);
  const Seconds setup = since(t0);
  OverlapReport rep = run(design);
  rep.setup = setup;
  rep.wall += setup;
  return rep;
}

}  // namespace

OverlapReport run_ooc_sync(StaticOperands operands, StorageBackend& backend,
                           const BlockSchedule& schedule, std::size_t workers,
                           FlopCounter& flops) {
  return with_setup(std::move(operands), flops, [&](const SharedDesign& d) {
    return run_ooc_sync(d, backend, schedule, workers, flops);
  });
}

OverlapReport run_ooc_async(StaticOperands operands, StorageBackend& backend,
                            const BlockSchedule& schedule, std::size_t workers,
                            FlopCounter& flops) {
  return with_setup(std::move(operands), flops, [&](const SharedDesign& d) {
    return run_ooc_async(d, backend, schedule, workers, flops);
  });
}

MeasuredRates calibrate_rates(const SharedDesign& design, StorageBackend& backend,
                              std::size_t workers, std::size_t burst) {
  const ProblemDims dims = backend.dims();
  check_design(design, dims);
  const std::size_t count = std::max<std::size_t>(1, std::min(burst, dims.m));
  Workspace ws(dims, count);
  HpGwasEngine engine(design, dims.r, workers);

  auto t0 = Clock::now();
  XrBlock block = backend.read_block(0, count, ws.xr, 0);
  const double read_s = std::max(since(t0).count(), 1e-9);

  t0 = Clock::now();
  engine.solve_block(block, ws.b);
  const double solve_s = std::max(since(t0).count(), 1e-9);

  return {static_cast<double>(count) / solve_s,
          static_cast<double>(count * layout::panel_bytes(dims)) / read_s};
}

}  // namespace glsseq
