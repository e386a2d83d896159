#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "glsseq/cost_model.hpp"
#include "glsseq/flops.hpp"
#include "glsseq/solvers.hpp"
#include "glsseq/storage.hpp"
#include "glsseq/streaming.hpp"

namespace glsseq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitAbort = 3;

/// Version of the report layout; bump on any field change.
inline constexpr int kReportSchemaVersion = 1;

/// Largest n accepted by `verify`; the oracle costs O(m·n³).
inline constexpr std::size_t kVerifyMaxN = 512;
inline constexpr double kVerifyTolerance = 1e-8;

/// Environment variable holding the default memory limit in bytes.
inline constexpr const char* kMemLimitEnv = "GLSSEQ_MEM_LIMIT";

/// Bad flags or refused inputs; maps to kExitUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { incore, ooc_sync, ooc_async };
enum class ReportFormat { csv, json };

std::string_view to_string(Mode m) noexcept;
std::optional<Mode> parse_mode(std::string_view s) noexcept;

struct RunConfig {
  std::string command;

  // Dataset: <prefix>.static.bin, <prefix>.xr.bin, output <prefix>.b.bin.
  std::string prefix;
  std::string b_path;  // empty: derived from prefix

  // gen / bench
  ProblemDims dims;
  std::uint64_t seed = 42;
  double conditioning = 1.0;

  Algorithm algorithm = Algorithm::hpgwas;
  Mode mode = Mode::incore;
  std::size_t workers = 1;
  std::size_t block_size = 0;         // 0: chosen from a calibration burst
  std::optional<std::size_t> warmup;  // nullopt: min(k, 256)
  std::optional<std::uint64_t> mem_limit;
  std::optional<SimulatedIo> sim_io;

  std::string report_path;  // empty: stdout
  ReportFormat report_format = ReportFormat::json;

  // bench
  std::string sweep;  // workers | mode | m | algorithm
  std::vector<std::string> sweep_values;
  std::size_t repeats = 1;

  std::filesystem::path b_file() const;
  /// Throws UsageError on inconsistent settings.
  void validate() const;
};

struct SolveResult {
  RunConfig config;  // with block size and warm-up resolved
  ProblemDims dims;
  Seconds wall{0};
  Seconds setup{0};
  Seconds compute{0};
  Seconds initial_load_wait{0};
  Seconds read_wait{0};
  Seconds write_wait{0};
  FlopCounter flops;
  std::uint64_t predicted_flops = 0;
  std::size_t rank_deficient = 0;
  std::size_t blocks = 0;
  bool io_bound = false;
  std::uint64_t peak_buffer_bytes = 0;

  double gflops() const noexcept;
  double exposed_wait_fraction() const noexcept;
};

/// Writes the dataset files and an output file whose valid flag is clear.
DatasetHeader cmd_gen(const RunConfig& config);
SolveResult cmd_solve(const RunConfig& config);

struct VerifyResult {
  std::size_t checked = 0;
  std::size_t mismatches = 0;
  double max_rel_error = 0;
  bool outputs_valid = false;
  bool passed() const noexcept { return outputs_valid && mismatches == 0; }
};
/// Refuses n > kVerifyMaxN with UsageError.
VerifyResult cmd_verify(const RunConfig& config);

struct BenchRow {
  std::string value;
  SolveResult result;
  double speedup = 1.0;  // wall of the first row / this wall
};

struct AffineFit {
  double intercept = 0;
  double slope = 0;
  double r2 = 0;
};
AffineFit fit_affine(std::span<const double> x, std::span<const double> y);

struct BenchReport {
  RunConfig config;
  std::vector<BenchRow> rows;
  std::optional<AffineFit> wall_vs_m;
};
/// Generates each sweep point's data in memory and runs it `repeats` times,
/// keeping the fastest. Out-of-core points stream from an in-memory backend,
/// optionally behind simulated I/O.
BenchReport cmd_bench(const RunConfig& config);

std::string render(const SolveResult& r, ReportFormat format);
std::string render(const BenchReport& r, ReportFormat format);

/// Full command-line entry point; returns the process exit code.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace glsseq::cli
