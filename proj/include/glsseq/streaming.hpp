#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "glsseq/flops.hpp"
#include "glsseq/solvers.hpp"
#include "glsseq/storage.hpp"

namespace glsseq {

using Seconds = std::chrono::duration<double>;

// ---------------------------------------------------------------------------
// Block planning

/// Contiguous partition of [0, m) into blocks of at most `block_size` panels,
/// optionally preceded by a smaller warm-up block.
struct BlockSchedule {
  struct Block {
    std::size_t first = 0;
    std::size_t count = 0;
    friend bool operator==(const Block&, const Block&) = default;
  };

  std::size_t block_size = 0;
  std::size_t warmup_size = 0;
  std::vector<Block> blocks;

  std::size_t max_count() const noexcept;
};

/// Bytes that stay resident for a whole streamed run: L, whitened X_L, y.
std::uint64_t resident_bytes(const ProblemDims& dims);
/// Bytes of one workspace holding `k` panels and their records.
std::uint64_t workspace_bytes(const ProblemDims& dims, std::size_t k);

/// Throws InvalidArgument when k < 1 or warmup > k, and InvalidBlockSize when
/// `mem_limit` is given and two workspaces of k panels do not fit in it.
BlockSchedule plan_blocks(const ProblemDims& dims, std::size_t k, std::size_t warmup,
                          std::optional<std::uint64_t> mem_limit = std::nullopt);

/// Warm-up block size used when none is given: min(k, 256).
std::size_t default_warmup(std::size_t k) noexcept;

struct BlockSizeChoice {
  std::size_t k = 0;
  /// True when no memory-feasible k makes compute time exceed load + store
  /// time by the required 10% margin.
  bool io_bound = false;
};

/// Largest k such that two workspaces fit in `mem_limit` and the predicted
/// compute time per block exceeds 1.1 × (load + store). `io_latency` is a
/// fixed cost per transfer request. Throws InsufficientMemory if k = 1 does
/// not fit.
BlockSizeChoice select_block_size(std::uint64_t mem_limit, const ProblemDims& dims,
                                  double compute_rate, double io_rate,
                                  Seconds io_latency = Seconds{0});

/// Predicted per-block times used by `select_block_size`.
struct BlockTimePrediction {
  Seconds compute;
  Seconds load;
  Seconds store;
};
BlockTimePrediction predict_block_times(const ProblemDims& dims, std::size_t k,
                                        double compute_rate, double io_rate,
                                        Seconds io_latency = Seconds{0});

// ---------------------------------------------------------------------------
// Storage backends

/// Source of X_R panels and sink of b records for the streaming engine.
class StorageBackend {
 public:
  virtual ~StorageBackend() = default;
  virtual const ProblemDims& dims() const = 0;
  virtual XrBlock read_block(std::size_t first, std::size_t count, std::span<double> dest,
                             std::size_t block_id) = 0;
  virtual void write_records(std::span<const SolutionRecord> records, std::size_t block_id) = 0;
  /// Marks the output complete (sets the outputs-valid flag for files).
  virtual void finalize() = 0;
};

/// Reads an X_R stream file and writes a b stream file.
class FileBackend final : public StorageBackend {
 public:
  FileBackend(const std::filesystem::path& xr_file, const std::filesystem::path& b_file);

  const ProblemDims& dims() const override { return reader_.dims(); }
  XrBlock read_block(std::size_t first, std::size_t count, std::span<double> dest,
                     std::size_t block_id) override;
  void write_records(std::span<const SolutionRecord> records, std::size_t block_id) override;
  void finalize() override;

 private:
  XrStreamReader reader_;
  BStreamWriter writer_;
};

/// In-memory fixture: panels come from a matrix, records land in a vector.
class MemoryBackend final : public StorageBackend {
 public:
  MemoryBackend(ProblemDims dims, DenseMatrix xr);

  const ProblemDims& dims() const override { return dims_; }
  XrBlock read_block(std::size_t first, std::size_t count, std::span<double> dest,
                     std::size_t block_id) override;
  void write_records(std::span<const SolutionRecord> records, std::size_t block_id) override;
  void finalize() override { finalized_ = true; }

  const std::vector<SolutionRecord>& records() const noexcept { return records_; }
  bool finalized() const noexcept { return finalized_; }

 private:
  ProblemDims dims_;
  DenseMatrix xr_;
  std::vector<SolutionRecord> records_;
  bool finalized_ = false;
};

/// Per-request delay model: latency + bytes / bandwidth.
struct SimulatedIo {
  Seconds latency{0};
  double bandwidth = std::numeric_limits<double>::infinity();  // bytes per second

  Seconds delay(std::uint64_t bytes) const noexcept;
};

/// Wraps another backend and completes each request no earlier than its
/// simulated delay after the request started.
class SimulatedBackend final : public StorageBackend {
 public:
  SimulatedBackend(std::unique_ptr<StorageBackend> inner, SimulatedIo io);

  const ProblemDims& dims() const override { return inner_->dims(); }
  XrBlock read_block(std::size_t first, std::size_t count, std::span<double> dest,
                     std::size_t block_id) override;
  void write_records(std::span<const SolutionRecord> records, std::size_t block_id) override;
  void finalize() override { inner_->finalize(); }

  StorageBackend& inner() noexcept { return *inner_; }
  /// Sum of all simulated request delays so far.
  Seconds total_io_time() const noexcept { return total_; }

 private:
  std::unique_ptr<StorageBackend> inner_;
  SimulatedIo io_;
  Seconds total_{0};
};

/// Returns `real` unchanged, or wrapped in a SimulatedBackend.
std::unique_ptr<StorageBackend> storage_backend(std::unique_ptr<StorageBackend> real,
                                                std::optional<SimulatedIo> simulated = std::nullopt);

// ---------------------------------------------------------------------------
// Workspaces and the transfer agent

enum class WorkspaceRole { IO, Compute };

/// Buffers for one block: X_R panels and their solution records.
struct Workspace {
  Workspace(const ProblemDims& dims, std::size_t capacity_panels);

  std::size_t capacity = 0;
  std::vector<double> xr;
  std::vector<SolutionRecord> b;
  std::atomic<WorkspaceRole> role{WorkspaceRole::IO};
  /// Block currently held in `xr`, valid once its read completes.
  std::optional<XrBlock> block;
};

enum class TransferKind { Read, Write };
enum class TicketState { Pending, Done, Failed };

struct TransferTicket {
  TransferKind kind;
  std::size_t block_id;
  std::atomic<TicketState> state{TicketState::Pending};
  std::exception_ptr error;
  Seconds service_time{0};

  TransferTicket(TransferKind k, std::size_t id) : kind(k), block_id(id) {}
};
using TicketHandle = std::shared_ptr<TransferTicket>;

/// Background agent serving transfer requests in submission order. At most
/// one read and one write may be outstanding (submitted and not yet waited).
class TransferAgent {
 public:
  struct Event {
    enum class Type { Submitted, Started, Completed, Waited } type;
    TransferKind kind;
    std::size_t block_id;
  };

  explicit TransferAgent(StorageBackend& backend);
  ~TransferAgent();

  TransferAgent(const TransferAgent&) = delete;
  TransferAgent& operator=(const TransferAgent&) = delete;

  /// Non-blocking. The workspace must hold the IO role while the read is
  /// serviced; otherwise the ticket fails.
  TicketHandle submit_read(std::size_t block_id, std::size_t first, std::size_t count,
                           Workspace& dest);
  /// Non-blocking. `records` must stay alive and unmodified until waited.
  TicketHandle submit_write(std::size_t block_id, std::span<const SolutionRecord> records);

  /// Blocks the caller until the ticket completes; rethrows its failure.
  void wait(const TicketHandle& ticket);

  std::vector<Event> events() const;

 private:
  struct Request {
    TicketHandle ticket;
    std::size_t first = 0;
    std::size_t count = 0;
    Workspace* dest = nullptr;
    std::span<const SolutionRecord> records;
  };

  void loop();
  void log(Event::Type type, TransferKind kind, std::size_t block_id);

  StorageBackend& backend_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::deque<Request> queue_;
  TicketHandle outstanding_read_;
  TicketHandle outstanding_write_;
  std::vector<Event> events_;
  bool stop_ = false;
  std::thread thread_;
};

// ---------------------------------------------------------------------------
// Out-of-core runs

struct BlockTiming {
  std::size_t block_id = 0;
  std::size_t first = 0;
  std::size_t count = 0;
  Seconds read_wait{0};
  Seconds compute{0};
  Seconds write_wait{0};
};

/// Wall time split into compute and the waits the compute side was exposed to.
struct OverlapReport {
  Seconds wall{0};
  Seconds setup{0};
  Seconds compute{0};
  /// Wait for the first block, never overlapped with computation.
  Seconds initial_load_wait{0};
  /// Waits for blocks after the first.
  Seconds read_wait{0};
  Seconds write_wait{0};
  std::uint64_t peak_buffer_bytes = 0;
  std::size_t rank_deficient = 0;
  std::vector<BlockTiming> blocks;

  Seconds exposed_wait() const noexcept { return initial_load_wait + read_wait + write_wait; }
  /// (read + write wait excluding the first load) / (wall − first load).
  double exposed_fraction_after_first_load() const noexcept;
};

/// Static operands of a streamed run; the X_R stream lives in the backend.
struct StaticOperands {
  SymmetricMatrix m;
  DenseMatrix xl;
  std::vector<double> y;
};

/// Blocking read, whiten and solve, blocking write, one block at a time, then
/// finalize. On a backend error (IoFailed or TruncatedFile carrying the block
/// id) the run aborts and the output is never finalized.
OverlapReport run_ooc_sync(const SharedDesign& design, StorageBackend& backend,
                           const BlockSchedule& schedule, std::size_t workers,
                           FlopCounter& flops);

/// Double-buffered run: the next block loads and the previous records store
/// while the current block computes.
OverlapReport run_ooc_async(const SharedDesign& design, StorageBackend& backend,
                            const BlockSchedule& schedule, std::size_t workers,
                            FlopCounter& flops);

/// Same as above with the shared setup included in the run and in `setup`.
OverlapReport run_ooc_sync(StaticOperands operands, StorageBackend& backend,
                           const BlockSchedule& schedule, std::size_t workers,
                           FlopCounter& flops);
OverlapReport run_ooc_async(StaticOperands operands, StorageBackend& backend,
                            const BlockSchedule& schedule, std::size_t workers,
                            FlopCounter& flops);

/// Measured rates from a short burst: problems solved per second and bytes
/// read per second.
struct MeasuredRates {
  double compute_rate = 0;
  double io_rate = 0;
};

/// Reads and solves the first min(burst, m) panels without writing anything.
MeasuredRates calibrate_rates(const SharedDesign& design, StorageBackend& backend,
                              std::size_t workers, std::size_t burst = 256);

}  // namespace glsseq
