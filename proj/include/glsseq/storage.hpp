#pragma once

// Binary dataset formats. Every file starts with the same 48-byte header:
//
//   offset  size  field
//        0     8  magic "GLSSEQ01"
//        8     8  n   (u64 little-endian)
//       16     8  l
//       24     8  r
//       32     8  m
//       40     8  flags (bit 0: outputs valid)
//
// followed by a payload of little-endian IEEE-754 doubles, column-major:
//
//   static file   M (n·n), X_L (n·l), y (n)
//   X_R stream    m panels of n·r; panel i at 48 + i·n·r·8
//   b stream      m records of (u64 status, p doubles); record i at 48 + i·(8 + 8p)

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glsseq/matrix.hpp"
#include "glsseq/solvers.hpp"

namespace glsseq {

inline constexpr std::array<char, 8> kMagic = {'G', 'L', 'S', 'S', 'E', 'Q', '0', '1'};
inline constexpr std::size_t kHeaderBytes = 48;
inline constexpr std::uint64_t kFlagOutputsValid = 1;

struct DatasetHeader {
  ProblemDims dims;
  std::uint64_t flags = 0;

  bool outputs_valid() const noexcept { return (flags & kFlagOutputsValid) != 0; }

  std::array<unsigned char, kHeaderBytes> encode() const;
  /// Throws BadMagic on a wrong magic and DimMismatch on invalid dimensions.
  static DatasetHeader decode(std::span<const unsigned char, kHeaderBytes> bytes);

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

/// Byte offsets of the seekable streams.
namespace layout {
constexpr std::uint64_t panel_bytes(const ProblemDims& d) { return d.n * d.r * 8; }
constexpr std::uint64_t record_bytes(const ProblemDims& d) { return 8 + d.p() * 8; }
constexpr std::uint64_t panel_offset(const ProblemDims& d, std::uint64_t i) {
  return kHeaderBytes + i * panel_bytes(d);
}
constexpr std::uint64_t record_offset(const ProblemDims& d, std::uint64_t i) {
  return kHeaderBytes + i * record_bytes(d);
}
constexpr std::uint64_t static_bytes(const ProblemDims& d) {
  return kHeaderBytes + (d.n * d.n + d.n * d.l + d.n) * 8;
}
}  // namespace layout

/// RAII POSIX file descriptor with positional I/O. Positional reads of
/// disjoint ranges may run concurrently.
class File {
 public:
  enum class Mode { Read, ReadWrite, Create };

  File() = default;
  File(const std::filesystem::path& path, Mode mode);
  ~File();
  File(File&& other) noexcept;
  File& operator=(File&& other) noexcept;
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  std::uint64_t size() const;
  /// Reads exactly dest.size() bytes or throws; short reads report
  /// TruncatedFile with `what`.
  void read_at(std::uint64_t offset, std::span<unsigned char> dest, const std::string& what) const;
  void write_at(std::uint64_t offset, std::span<const unsigned char> src);
  void resize(std::uint64_t bytes);
  void sync();

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  int fd_ = -1;
  std::filesystem::path path_;
};

/// File names of one dataset: a static file and an X_R stream file.
struct DatasetPaths {
  std::filesystem::path static_file;
  std::filesystem::path xr_file;

  static DatasetPaths from_prefix(const std::string& prefix);
  /// Conventional output path for the b stream of this prefix.
  static std::filesystem::path b_file_for(const std::string& prefix);
};

struct StaticData {
  DatasetHeader header;
  SymmetricMatrix m;
  DenseMatrix xl;
  std::vector<double> y;
};

/// Writes header, full square M, X_L and y.
void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   const SymmetricMatrix& m, const DenseMatrix& xl, std::span<const double> y);
/// Throws BadMagic, TruncatedFile (naming the section) or DimMismatch.
StaticData read_dataset(const std::filesystem::path& path);

/// Appends panels to an X_R stream file.
class XrStreamWriter {
 public:
  XrStreamWriter(const std::filesystem::path& path, const ProblemDims& dims);

  void append(ConstMatrixView panels);
  std::size_t panels_written() const noexcept { return written_; }
  /// Throws Incomplete unless exactly m panels were appended.
  void close();

 private:
  File file_;
  ProblemDims dims_;
  std::size_t written_ = 0;
};

class XrStreamReader {
 public:
  explicit XrStreamReader(const std::filesystem::path& path);

  const DatasetHeader& header() const noexcept { return header_; }
  const ProblemDims& dims() const noexcept { return header_.dims; }

  /// Reads panels [first, first+count) into `dest` and returns a block view
  /// over it. Throws OutOfRange past m, WorkspaceOverrun when `dest` is too
  /// small, and TruncatedFile (index = block_id) when the file ends early.
  XrBlock read_block(std::size_t first, std::size_t count, std::span<double> dest,
                     std::size_t block_id = 0) const;

 private:
  File file_;
  DatasetHeader header_;
};

/// Convenience wrapper matching the reader API.
XrBlock read_xr_block(const XrStreamReader& reader, std::size_t first, std::size_t count,
                      std::span<double> dest);

/// Seek-addressed writer for the b stream. Blocks may arrive in any order;
/// `finalize` sets the outputs-valid flag once every record has landed.
class BStreamWriter {
 public:
  BStreamWriter(const std::filesystem::path& path, const ProblemDims& dims);

  /// Records must be contiguous in index.
  void write_block(std::span<const SolutionRecord> records);
  std::size_t records_written() const noexcept { return count_written_; }
  /// Throws Incomplete if any record is missing.
  void finalize();

 private:
  File file_;
  ProblemDims dims_;
  std::vector<bool> written_;
  std::size_t count_written_ = 0;
  std::vector<unsigned char> scratch_;
};

struct BStream {
  DatasetHeader header;
  std::vector<SolutionRecord> records;
};

/// Reads a whole b stream; does not reject files whose outputs-valid flag is
/// clear (check `header.outputs_valid()`).
BStream read_b_stream(const std::filesystem::path& path);

/// Debug dump of a b stream as CSV (index,status,b0..b{p-1}). Refuses more
/// than 10⁴ records.
void write_b_csv(std::ostream& out, std::span<const SolutionRecord> records);

/// Hex SHA-256 digest of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Deterministic synthetic data: M = A·Aᵀ + c·n·I with A drawn n×n, then X_L,
/// y and finally the X_R panels, all from one mt19937_64 stream.
struct SyntheticDataset {
  ProblemDims dims;
  SymmetricMatrix m;
  DenseMatrix xl;
  std::vector<double> y;
  DenseMatrix xr;  // n × m·r
};

SyntheticDataset generate_in_memory(std::uint64_t seed, const ProblemDims& dims,
                                    double conditioning);

/// Streams the same data to the static and X_R files without holding X_R in
/// memory. Identical seed and dims give identical bytes.
void generate_dataset(std::uint64_t seed, const ProblemDims& dims, double conditioning,
                      const DatasetPaths& paths);

}  // namespace glsseq
