#include "glsseq/storage.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/stat.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <iomanip>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include "glsseq/error.hpp"
#include "glsseq/kernels.hpp"

namespace glsseq {

static_assert(std::endian::native == std::endian::little,
              "dataset formats are little-endian and read by memcpy");

namespace {

void put_u64(unsigned char* dst, std::uint64_t v) { std::memcpy(dst, &v, 8); }
std::uint64_t get_u64(const unsigned char* src) {
  std::uint64_t v;
  std::memcpy(&v, src, 8);
  return v;
}

std::span<unsigned char> bytes_of(std::span<double> v) {
  return {reinterpret_cast<unsigned char*>(v.data()), v.size() * sizeof(double)};
}
std::span<const unsigned char> bytes_of(std::span<const double> v) {
  return {reinterpret_cast<const unsigned char*>(v.data()), v.size() * sizeof(double)};
}

[[noreturn]] void throw_errno(const std::string& what) {
  throw Error(ErrorCode::IoFailed, what + ": " + std::strerror(errno));
}

DatasetHeader read_header(const File& file, const std::string& what) {
  std::array<unsigned char, kHeaderBytes> raw{};
  file.read_at(0, raw, what + " header");
  return DatasetHeader::decode(raw);
}

// Uniform doubles in [-1, 1) built from the top 53 bits of each draw, so the
// values depend only on the integer sequence of mt19937_64.
class SyntheticStream {
 public:
  explicit SyntheticStream(std::uint64_t seed) : rng_(seed) {}
  double next() { return static_cast<double>(rng_() >> 11) * 0x1p-53 * 2.0 - 1.0; }
  void fill(std::span<double> out) {
    for (double& v : out) v = next();
  }

 private:
  std::mt19937_64 rng_;
};

struct StaticPart {
  SymmetricMatrix m;
  DenseMatrix xl;
  std::vector<double> y;
};

StaticPart generate_static(SyntheticStream& stream, const ProblemDims& dims,
                           double conditioning) {
  if (!(conditioning >= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "conditioning must be at least 1");
  }
  const std::size_t n = dims.n;
  // Draw A row by row, i.e. store Aᵀ column-major, so A·Aᵀ is a syrk of Aᵀ.
  DenseMatrix a_t(n, n);
  stream.fill(a_t.data());
  FlopCounter scratch;
  StaticPart part;
  part.m = SymmetricMatrix(n);
  syrk_lower_into(a_t.view(), part.m.view(), scratch);
  const double shift = conditioning * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) part.m.lower(i, i) += shift;
  part.m.materialize_upper();
  part.xl = DenseMatrix(n, dims.l);
  stream.fill(part.xl.data());
  part.y.resize(n);
  stream.fill(part.y);
  return part;
}

}  // namespace

// ---------------------------------------------------------------------------
// Header

std::array<unsigned char, kHeaderBytes> DatasetHeader::encode() const {
  std::array<unsigned char, kHeaderBytes> out{};
  std::memcpy(out.data(), kMagic.data(), kMagic.size());
  put_u64(out.data() + 8, dims.n);
  put_u64(out.data() + 16, dims.l);
  put_u64(out.data() + 24, dims.r);
  put_u64(out.data() + 32, dims.m);
  put_u64(out.data() + 40, flags);
  return out;
}

DatasetHeader DatasetHeader::decode(std::span<const unsigned char, kHeaderBytes> bytes) {
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorCode::BadMagic, "file does not start with GLSSEQ01");
  }
  DatasetHeader h;
  h.dims.n = get_u64(bytes.data() + 8);
  h.dims.l = get_u64(bytes.data() + 16);
  h.dims.r = get_u64(bytes.data() + 24);
  h.dims.m = get_u64(bytes.data() + 32);
  h.flags = get_u64(bytes.data() + 40);
  try {
    h.dims.validate(kMaxSmallDim);
  } catch (const Error& e) {
    throw Error(ErrorCode::DimMismatch, "header dimensions invalid: " + e.detail());
  }
  return h;
}

// ---------------------------------------------------------------------------
// File

File::File(const std::filesystem::path& path, Mode mode) : path_(path) {
  int flags = O_RDONLY;
  if (mode == Mode::ReadWrite) flags = O_RDWR;
  if (mode == Mode::Create) flags = O_RDWR | O_CREAT | O_TRUNC;
  fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
  if (fd_ < 0) throw_errno("cannot open " + path.string());
}

File::~File() {
  if (fd_ >= 0) ::close(fd_);
}

File::File(File&& other) noexcept : fd_(other.fd_), path_(std::move(other.path_)) {
  other.fd_ = -1;
}

File& File::operator=(File&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    path_ = std::move(other.path_);
    other.fd_ = -1;
  }
  return *this;
}

std::uint64_t File::size() const {
  struct stat st{};
  if (::fstat(fd_, &st) != 0) throw_errno("cannot stat " + path_.string());
  return static_cast<std::uint64_t>(st.st_size);
}

void File::read_at(std::uint64_t offset, std::span<unsigned char> dest,
                   const std::string& what) const {
  std::size_t done = 0;
  while (done < dest.size()) {
    const ssize_t got = ::pread(fd_, dest.data() + done, dest.size() - done,
                                static_cast<off_t>(offset + done));
    if (got < 0) {
      if (errno == EINTR) continue;
      throw_errno("read of " + what + " from " + path_.string() + " failed");
    }
    if (got == 0) {
      throw Error(ErrorCode::TruncatedFile, path_.string() + " ends inside " + what);
    }
    done += static_cast<std::size_t>(got);
  }
}

void File::write_at(std::uint64_t offset, std::span<const unsigned char> src) {
  std::size_t done = 0;
  while (done < src.size()) {
    const ssize_t put = ::pwrite(fd_, src.data() + done, src.size() - done,
                                 static_cast<off_t>(offset + done));
    if (put < 0) {
      if (errno == EINTR) continue;
      throw_errno("write to " + path_.string() + " failed");
    }
    done += static_cast<std::size_t>(put);
  }
}

void File::resize(std::uint64_t bytes) {
  if (::ftruncate(fd_, static_cast<off_t>(bytes)) != 0) throw_errno("cannot resize " + path_.string());
}

void File::sync() {
  if (::fsync(fd_) != 0) throw_errno("cannot sync " + path_.string());
}

// ---------------------------------------------------------------------------
// Paths

DatasetPaths DatasetPaths::from_prefix(const std::string& prefix) {
  return {prefix + ".static.bin", prefix + ".xr.bin"};
}

std::filesystem::path DatasetPaths::b_file_for(const std::string& prefix) {
  return prefix + ".b.bin";
}

// ---------------------------------------------------------------------------
// Static file

void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   const SymmetricMatrix& m, const DenseMatrix& xl, std::span<const double> y) {
  const ProblemDims& d = header.dims;
  if (m.dim() != d.n || xl.rows() != d.n || xl.cols() != d.l || y.size() != d.n) {
    throw Error(ErrorCode::DimMismatch, "static data does not match header dimensions");
  }
  File file(path, File::Mode::Create);
  const auto raw = header.encode();
  file.write_at(0, raw);
  const DenseMatrix full = m.to_dense();
  std::uint64_t offset = kHeaderBytes;
  file.write_at(offset, bytes_of(full.data()));
  offset += full.data().size() * 8;
  file.write_at(offset, bytes_of(xl.data()));
  offset += xl.data().size() * 8;
  file.write_at(offset, bytes_of(y));
}

StaticData read_dataset(const std::filesystem::path& path) {
  File file(path, File::Mode::Read);
  StaticData out;
  out.header = read_header(file, "static file");
  const ProblemDims& d = out.header.dims;
  DenseMatrix m(d.n, d.n);
  std::uint64_t offset = kHeaderBytes;
  file.read_at(offset, bytes_of(m.data()), "section M");
  offset += d.n * d.n * 8;
  out.xl = DenseMatrix(d.n, d.l);
  file.read_at(offset, bytes_of(out.xl.data()), "section X_L");
  offset += d.n * d.l * 8;
  out.y.resize(d.n);
  file.read_at(offset, bytes_of(std::span<double>(out.y)), "section y");
  out.m = SymmetricMatrix(std::move(m));
  return out;
}

// ---------------------------------------------------------------------------
// X_R stream

XrStreamWriter::XrStreamWriter(const std::filesystem::path& path, const ProblemDims& dims)
    : file_(path, File::Mode::Create), dims_(dims) {
  const DatasetHeader header{dims, 0};
  file_.write_at(0, header.encode());
}

void XrStreamWriter::append(ConstMatrixView panels) {
  if (panels.rows != dims_.n || panels.cols % dims_.r != 0) {
    throw Error(ErrorCode::DimMismatch, "panel shape does not match the stream");
  }
  const std::size_t count = panels.cols / dims_.r;
  if (written_ + count > dims_.m) {
    throw Error(ErrorCode::OutOfRange, "more than m panels appended");
  }
  std::uint64_t offset = layout::panel_offset(dims_, written_);
  for (std::size_t j = 0; j < panels.cols; ++j) {
    file_.write_at(offset, bytes_of(std::span<const double>(panels.col(j), dims_.n)));
    offset += dims_.n * 8;
  }
  written_ += count;
}

void XrStreamWriter::close() {
  if (written_ != dims_.m) {
    throw Error(ErrorCode::Incomplete, std::to_string(written_) + " of " +
                                           std::to_string(dims_.m) + " panels written");
  }
  file_ = File();
}

XrStreamReader::XrStreamReader(const std::filesystem::path& path)
    : file_(path, File::Mode::Read), header_(read_header(file_, "X_R stream")) {}

XrBlock XrStreamReader::read_block(std::size_t first, std::size_t count, std::span<double> dest,
                                   std::size_t block_id) const {
  const ProblemDims& d = header_.dims;
  if (first + count > d.m || first + count < first) {
    throw Error(ErrorCode::OutOfRange,
                "panels [" + std::to_string(first) + ", " + std::to_string(first + count) +
                    ") exceed m = " + std::to_string(d.m));
  }
  const std::size_t doubles = count * d.n * d.r;
  if (dest.size() < doubles) {
    throw Error(ErrorCode::WorkspaceOverrun, "destination holds fewer than " +
                                                 std::to_string(count) + " panels");
  }
  try {
    file_.read_at(layout::panel_offset(d, first), bytes_of(dest.first(doubles)),
                  "block " + std::to_string(block_id) + " (panels " + std::to_string(first) +
                      ".." + std::to_string(first + count) + ")");
  } catch (const Error& e) {
    throw Error(e.code(), e.detail(), block_id);
  }
  return XrBlock{first, count, d.r, MatrixView{dest.data(), d.n, count * d.r, d.n}};
}

XrBlock read_xr_block(const XrStreamReader& reader, std::size_t first, std::size_t count,
                      std::span<double> dest) {
  return reader.read_block(first, count, dest);
}

// ---------------------------------------------------------------------------
// b stream

BStreamWriter::BStreamWriter(const std::filesystem::path& path, const ProblemDims& dims)
    : file_(path, File::Mode::Create), dims_(dims), written_(dims.m, false) {
  const DatasetHeader header{dims, 0};
  file_.write_at(0, header.encode());
  file_.resize(layout::record_offset(dims, dims.m));
}

void BStreamWriter::write_block(std::span<const SolutionRecord> records) {
  if (records.empty()) return;
  const std::size_t p = dims_.p();
  const std::size_t first = records.front().index;
  if (first + records.size() > dims_.m) {
    throw Error(ErrorCode::OutOfRange, "records beyond m");
  }
  const std::size_t rec_bytes = layout::record_bytes(dims_);
  scratch_.resize(records.size() * rec_bytes);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SolutionRecord& rec = records[i];
    if (rec.index != first + i || rec.b.size() != p) {
      throw Error(ErrorCode::InvalidArgument, "records must be contiguous and hold p values");
    }
    unsigned char* dst = scratch_.data() + i * rec_bytes;
    put_u64(dst, static_cast<std::uint64_t>(rec.status));
    std::memcpy(dst + 8, rec.b.data(), p * 8);
  }
  file_.write_at(layout::record_offset(dims_, first), scratch_);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!written_[first + i]) {
      written_[first + i] = true;
      ++count_written_;
    }
  }
}

void BStreamWriter::finalize() {
  if (count_written_ != dims_.m) {
    throw Error(ErrorCode::Incomplete, std::to_string(dims_.m - count_written_) +
                                           " records missing; outputs left invalid");
  }
  const DatasetHeader header{dims_, kFlagOutputsValid};
  file_.sync();
  file_.write_at(0, header.encode());
  file_.sync();
}

BStream read_b_stream(const std::filesystem::path& path) {
  File file(path, File::Mode::Read);
  BStream out;
  out.header = read_header(file, "b stream");
  const ProblemDims& d = out.header.dims;
  const std::size_t p = d.p();
  const std::size_t rec_bytes = layout::record_bytes(d);
  std::vector<unsigned char> raw(d.m * rec_bytes);
  file.read_at(kHeaderBytes, raw, "b records");
  out.records.resize(d.m);
  for (std::size_t i = 0; i < d.m; ++i) {
    const unsigned char* src = raw.data() + i * rec_bytes;
    SolutionRecord& rec = out.records[i];
    rec.index = i;
    const std::uint64_t status = get_u64(src);
    if (status > 1) {
      throw Error(ErrorCode::InvalidArgument, "record " + std::to_string(i) +
                                                  " has unknown status " + std::to_string(status));
    }
    rec.status = static_cast<SolveStatus>(status);
    rec.b.resize(p);
    std::memcpy(rec.b.data(), src + 8, p * 8);
  }
  return out;
}

void write_b_csv(std::ostream& out, std::span<const SolutionRecord> records) {
  if (records.size() > 10000) {
    throw Error(ErrorCode::InvalidArgument, "CSV dump is limited to 10000 records");
  }
  const std::size_t p = records.empty() ? 0 : records.front().b.size();
  out << "index,status";
  for (std::size_t j = 0; j < p; ++j) out << ",b" << j;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& rec : records) {
    out << rec.index << ',' << (rec.status == SolveStatus::Ok ? "ok" : "rank_deficient");
    for (double v : rec.b) out << ',' << v;
    out << '\n';
  }
}

std::string sha256_file(const std::filesystem::path& path) {
  File file(path, File::Mode::Read);
  const std::uint64_t size = file.size();
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoFailed, "SHA-256 initialisation failed");
  }
  std::vector<unsigned char> chunk(1 << 20);
  for (std::uint64_t offset = 0; offset < size;) {
    const std::size_t len = static_cast<std::size_t>(std::min<std::uint64_t>(chunk.size(), size - offset));
    file.read_at(offset, std::span(chunk).first(len), "hash input");
    EVP_DigestUpdate(ctx.get(), chunk.data(), len);
    offset += len;
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

// ---------------------------------------------------------------------------
// Generator

SyntheticDataset generate_in_memory(std::uint64_t seed, const ProblemDims& dims,
                                    double conditioning) {
  dims.validate();
  SyntheticStream stream(seed);
  StaticPart part = generate_static(stream, dims, conditioning);
  SyntheticDataset out{dims, std::move(part.m), std::move(part.xl), std::move(part.y),
                       DenseMatrix(dims.n, dims.m * dims.r)};
  stream.fill(out.xr.data());
  return out;
}

void generate_dataset(std::uint64_t seed, const ProblemDims& dims, double conditioning,
                      const DatasetPaths& paths) {
  dims.validate();
  SyntheticStream stream(seed);
  const StaticPart part = generate_static(stream, dims, conditioning);
  write_dataset(paths.static_file, DatasetHeader{dims, 0}, part.m, part.xl, part.y);

  XrStreamWriter writer(paths.xr_file, dims);
  constexpr std::size_t kChunkPanels = 1024;
  DenseMatrix chunk;
  for (std::size_t first = 0; first < dims.m; first += kChunkPanels) {
    const std::size_t count = std::min(kChunkPanels, dims.m - first);
    if (chunk.cols() != count * dims.r) chunk = DenseMatrix(dims.n, count * dims.r);
    stream.fill(chunk.data());
    writer.append(chunk.view());
  }
  writer.close();
}

}  // namespace glsseq
