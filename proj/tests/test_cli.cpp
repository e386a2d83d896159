#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "glsseq/cli.hpp"
#include "glsseq/error.hpp"

using namespace glsseq;
using namespace glsseq::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Output of hpgwas on the n=64, l=3, r=1, m=100, conditioning 1 fixtures.
constexpr const char* kSeed1B = "1337f00267d3d675b034280d92a067d23098dfa908ba1409b61a88272bdab177";
constexpr const char* kSeed42B = "036e23b1fca652608f019984ac653e9b3588bc009e718c7bc7052a9c153d9e5a";

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("glsseq_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string prefix(const std::string& name = "d") const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "glsseq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = main_entry(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// Runs the installed binary and returns its exit status.
int binary(const std::string& args) {
  const std::string cmd = std::string(GLSSEQ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Run gen(const std::string& prefix, std::uint64_t seed, std::size_t n = 64, std::size_t m = 100) {
  return run_cli({"gen", "--prefix", prefix, "--n", std::to_string(n), "--l", "3", "--r", "1", "--m",
              std::to_string(m), "--seed", std::to_string(seed)});
}

}  // namespace

TEST_CASE("gen writes three files with valid headers") {
  TempDir dir;
  const auto p = dir.prefix();
  const auto r = run_cli({"gen", "--prefix", p, "--n", "1000", "--l", "3", "--r", "1", "--m", "10000",
                      "--seed", "42"});
  REQUIRE(r.code == kExitOk);
  const auto paths = DatasetPaths::from_prefix(p);
  const ProblemDims d{1000, 3, 1, 10000};
  CHECK(read_dataset(paths.static_file).header.dims == d);
  CHECK(XrStreamReader(paths.xr_file).dims() == d);
  CHECK(fs::file_size(paths.xr_file) == layout::panel_offset(d, d.m));
  const auto b = read_b_stream(DatasetPaths::b_file_for(p));
  CHECK(b.header.dims == d);
  CHECK_FALSE(b.header.outputs_valid());
}

TEST_CASE("gen is deterministic in the seed") {
  TempDir dir;
  REQUIRE(gen(dir.prefix("a"), 7).code == kExitOk);
  REQUIRE(gen(dir.prefix("b"), 7).code == kExitOk);
  REQUIRE(gen(dir.prefix("c"), 8).code == kExitOk);
  const auto a = DatasetPaths::from_prefix(dir.prefix("a"));
  const auto b = DatasetPaths::from_prefix(dir.prefix("b"));
  const auto c = DatasetPaths::from_prefix(dir.prefix("c"));
  CHECK(sha256_file(a.static_file) == sha256_file(b.static_file));
  CHECK(sha256_file(a.xr_file) == sha256_file(b.xr_file));
  CHECK(sha256_file(a.xr_file) != sha256_file(c.xr_file));
}

TEST_CASE("usage errors exit with code 2") {
  TempDir dir;
  CHECK(run_cli({"gen", "--prefix", dir.prefix(), "--n", "100", "--l", "20", "--r", "1", "--m", "5"})
            .code == kExitUsage);
  CHECK(run_cli({"solve"}).code == kExitUsage);
  CHECK(run_cli({"frobnicate"}).code == kExitUsage);
  REQUIRE(gen(dir.prefix(), 1).code == kExitOk);
  CHECK(run_cli({"solve", "--prefix", dir.prefix(), "--workers", "0"}).code == kExitUsage);
  CHECK(run_cli({"solve", "--prefix", dir.prefix(), "--algorithm", "qr"}).code == kExitUsage);
  CHECK(run_cli({"solve", "--prefix", dir.prefix(), "--algorithm", "gwfgls", "--mode", "ooc-async"})
            .code == kExitUsage);
  CHECK(binary("gen --prefix " + dir.prefix("x") + " --n 50 --l 19 --r 2 --m 3") == kExitUsage);
  CHECK(run_cli({"--help"}).code == kExitOk);
}

TEST_CASE("hpgwas in-core output matches the committed fixture hashes") {
  TempDir dir;
  for (auto [seed, hash] : {std::pair{1, kSeed1B}, std::pair{42, kSeed42B}}) {
    const auto p = dir.prefix("s" + std::to_string(seed));
    REQUIRE(gen(p, seed).code == kExitOk);
    REQUIRE(run_cli({"solve", "--prefix", p}).code == kExitOk);
    CHECK(sha256_file(DatasetPaths::b_file_for(p)) == hash);
    const auto v = run_cli({"verify", "--prefix", p});
    CHECK(v.code == kExitOk);
    CHECK(v.out.find("PASS") != std::string::npos);
  }
}

TEST_CASE("ooc-async and ooc-sync outputs equal the in-core output bitwise") {
  TempDir dir;
  const auto p = dir.prefix();
  REQUIRE(gen(p, 3, 96, 1000).code == kExitOk);
  const auto incore = (dir.path / "incore.bin").string();
  const auto sync = (dir.path / "sync.bin").string();
  const auto async = (dir.path / "async.bin").string();
  REQUIRE(run_cli({"solve", "--prefix", p, "--out", incore}).code == kExitOk);
  REQUIRE(run_cli({"solve", "--prefix", p, "--out", sync, "--mode", "ooc-sync", "--block-size", "64"})
              .code == kExitOk);
  const auto r = run_cli({"solve", "--prefix", p, "--out", async, "--mode", "ooc-async",
                      "--block-size", "77", "--workers", "2"});
  REQUIRE(r.code == kExitOk);
  CHECK(sha256_file(incore) == sha256_file(sync));
  CHECK(sha256_file(incore) == sha256_file(async));
  const auto rep = json::parse(r.out);
  CHECK(rep["blocks"].get<int>() == 13);  // warm-up of min(77, 256) panels, then 12 more
}

TEST_CASE("automatic block size resolves before an out-of-core run") {
  TempDir dir;
  const auto p = dir.prefix();
  REQUIRE(gen(p, 4, 64, 600).code == kExitOk);
  const auto r = run_cli({"solve", "--prefix", p, "--mode", "ooc-async", "--mem-limit", "4MB"});
  REQUIRE(r.code == kExitOk);
  const auto rep = json::parse(r.out);
  CHECK(rep["config"]["block_size"].get<std::size_t>() > 0);
  CHECK(rep["peak_buffer_bytes"].get<std::uint64_t>() <= 4ull * 1000 * 1000);
}

TEST_CASE("gwfgls report ratio versus hpgwas is about two") {
  TempDir dir;
  const auto p = dir.prefix();
  REQUIRE(gen(p, 5, 256, 1000).code == kExitOk);
  const auto r = run_cli({"solve", "--prefix", p, "--algorithm", "gwfgls"});
  REQUIRE(r.code == kExitOk);
  const auto rep = json::parse(r.out);
  const double ratio = rep["ratio_vs_hpgwas"]["measured"].get<double>();
  CHECK(ratio >= 1.5);
  CHECK(ratio <= 3.0);
  CHECK(rep["flops"]["measured"] == rep["flops"]["predicted"]);
}

TEST_CASE("verify passes after a solve and fails on a corrupted b file") {
  TempDir dir;
  const auto p = dir.prefix();
  REQUIRE(gen(p, 6).code == kExitOk);
  CHECK(run_cli({"verify", "--prefix", p}).code == kExitVerifyFailed);  // never solved: flag clear
  REQUIRE(run_cli({"solve", "--prefix", p, "--algorithm", "seqgls"}).code == kExitOk);

  RunConfig cfg;
  cfg.prefix = p;
  const auto v = cmd_verify(cfg);
  CHECK(v.passed());
  CHECK(v.checked == 100);
  CHECK(v.max_rel_error <= kVerifyTolerance);

  const auto b = DatasetPaths::b_file_for(p);
  {
    std::fstream f(b, std::ios::in | std::ios::out | std::ios::binary);
    const auto off = std::streamoff(layout::record_offset({64, 3, 1, 100}, 37) + 8 + 6);
    f.seekg(off);
    char c = 0;
    f.read(&c, 1);
    c ^= 0x10;
    f.seekp(off);
    f.write(&c, 1);
  }
  const auto r = run_cli({"verify", "--prefix", p});
  CHECK(r.code == kExitVerifyFailed);
  CHECK(r.out.find("FAIL") != std::string::npos);
  CHECK(binary("verify --prefix " + p) == kExitVerifyFailed);
}

TEST_CASE("verify refuses n above 512") {
  TempDir dir;
  const auto p = dir.prefix();
  REQUIRE(run_cli({"gen", "--prefix", p, "--n", "513", "--l", "1", "--r", "1", "--m", "2"}).code ==
          kExitOk);
  const auto r = run_cli({"verify", "--prefix", p});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("512") != std::string::npos);
}

TEST_CASE("a non-SPD matrix aborts with exit 3") {
  TempDir dir;
  const auto p = dir.prefix();
  REQUIRE(gen(p, 7, 32, 10).code == kExitOk);
  const auto paths = DatasetPaths::from_prefix(p);
  auto st = read_dataset(paths.static_file);
  DenseMatrix m = st.m.to_dense();
  m(5, 5) = -1.0;
  write_dataset(paths.static_file, st.header, SymmetricMatrix(std::move(m)), st.xl, st.y);
  for (const char* mode : {"incore", "ooc-sync", "ooc-async"}) {
    const auto r = run_cli({"solve", "--prefix", p, "--mode", mode, "--block-size", "4"});
    CHECK(r.code == kExitAbort);
    CHECK(r.err.find("NotSPD") != std::string::npos);
  }
  CHECK(binary("solve --prefix " + p) == kExitAbort);
  CHECK_FALSE(read_b_stream(DatasetPaths::b_file_for(p)).header.outputs_valid());
}

TEST_CASE("a truncated stream aborts naming the block") {
  TempDir dir;
  const auto p = dir.prefix();
  REQUIRE(gen(p, 8, 32, 100).code == kExitOk);
  const auto paths = DatasetPaths::from_prefix(p);
  fs::resize_file(paths.xr_file, layout::panel_offset({32, 3, 1, 100}, 45));
  const auto r = run_cli({"solve", "--prefix", p, "--mode", "ooc-sync", "--block-size", "10",
                      "--no-warmup"});
  CHECK(r.code == kExitAbort);
  CHECK(r.err.find("block 4") != std::string::npos);
}

TEST_CASE("reports render as CSV and JSON with the config echoed") {
  TempDir dir;
  const auto p = dir.prefix();
  REQUIRE(gen(p, 9).code == kExitOk);
  const auto report = (dir.path / "r.csv").string();
  REQUIRE(run_cli({"solve", "--prefix", p, "--format", "csv", "--report", report}).code == kExitOk);
  std::ifstream f(report);
  std::string header, row;
  std::getline(f, header);
  std::getline(f, row);
  CHECK(header.find("wall_s") != std::string::npos);
  CHECK(row.find("hpgwas") != std::string::npos);

  const auto j = json::parse(run_cli({"solve", "--prefix", p, "--workers", "3"}).out);
  CHECK(j["schema_version"] == kReportSchemaVersion);
  CHECK(j["config"]["workers"] == 3);
  CHECK(j["config"]["algorithm"] == "hpgwas");
}

TEST_CASE("bench: worker sweep reports speedups and identical flops") {
  RunConfig cfg;
  cfg.command = "bench";
  cfg.dims = {128, 3, 1, 2000};
  cfg.sweep = "workers";
  cfg.sweep_values = {"1", "2", "4"};
  const auto rep = cmd_bench(cfg);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].speedup == 1.0);
  for (const auto& row : rep.rows) {
    CHECK(row.result.flops.total() == rep.rows[0].result.flops.total());
    CHECK(row.speedup > 0);
  }
  const auto csv = render(rep, ReportFormat::csv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("bench: m sweep grows linearly") {
  RunConfig cfg;
  cfg.command = "bench";
  cfg.dims = {128, 3, 1, 1000};
  cfg.sweep = "m";
  cfg.sweep_values = {"1000", "4000", "7000", "10000"};
  cfg.repeats = 3;
  const auto rep = cmd_bench(cfg);
  REQUIRE(rep.wall_vs_m.has_value());
  CHECK(rep.wall_vs_m->r2 >= 0.95);
  CHECK(rep.wall_vs_m->slope > 0);
}

TEST_CASE("bench: async beats sync under balanced simulated I/O") {
  // Match per-transfer latency to the measured per-block compute time.
  RunConfig base;
  base.command = "bench";
  base.dims = {256, 3, 1, 4000};
  base.block_size = 250;
  base.warmup = 0;
  base.sweep = "mode";
  base.sweep_values = {"incore"};
  base.repeats = 2;
  const auto incore = cmd_bench(base);
  const double per_block = incore.rows[0].result.compute.count() / 16.0;

  RunConfig cfg = base;
  cfg.sweep_values = {"ooc-sync", "ooc-async"};
  cfg.sim_io = SimulatedIo{std::chrono::duration_cast<Seconds>(Seconds(per_block / 2))};
  const auto rep = cmd_bench(cfg);
  REQUIRE(rep.rows.size() == 2);
  const double sync = rep.rows[0].result.wall.count();
  const double async = rep.rows[1].result.wall.count();
  CHECK(async <= 0.95 * sync);
}

TEST_CASE("fit_affine recovers a line") {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto f = fit_affine(x, y);
  CHECK(f.slope == doctest::Approx(2));
  CHECK(f.intercept == doctest::Approx(1));
  CHECK(f.r2 == doctest::Approx(1));
}
