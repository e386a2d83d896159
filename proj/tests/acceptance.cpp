// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "glsseq/cost_model.hpp"
#include "glsseq/error.hpp"
#include "glsseq/kernels.hpp"
#include "glsseq/oracle.hpp"
#include "glsseq/solvers.hpp"
#include "glsseq/storage.hpp"
#include "glsseq/streaming.hpp"

using namespace glsseq;
using namespace std::chrono_literals;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[x] ";
    }
    detail << what << "; ";
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("glsseq_accept_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<DenseMatrix> designs(const SyntheticDataset& ds) {
  std::vector<DenseMatrix> xs;
  for (std::size_t i = 0; i < ds.dims.m; ++i) xs.push_back(concat_design(ds.xl, ds.xr, ds.dims.r, i));
  return xs;
}

double max_error(const std::vector<SolutionRecord>& recs,
                 const std::vector<std::vector<double>>& ref) {
  double e = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    e = std::max(e, recs.at(i).status == SolveStatus::Ok ? oracle::relative_error(recs[i].b, ref[i])
                                                         : INFINITY);
  }
  return e;
}

bool bitwise_equal(const std::vector<SolutionRecord>& a, const std::vector<SolutionRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].index != b[i].index || a[i].status != b[i].status ||
        a[i].b.size() != b[i].b.size() ||
        std::memcmp(a[i].b.data(), b[i].b.data(), a[i].b.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0, worst_cond = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const ProblemDims d{std::uniform_int_distribution<std::size_t>(8, 64)(rng),
                        std::uniform_int_distribution<std::size_t>(0, 3)(rng),
                        std::uniform_int_distribution<std::size_t>(1, 2)(rng),
                        std::uniform_int_distribution<std::size_t>(1, 32)(rng)};
    const auto ds = generate_in_memory(1000 + inst, d, 1.0);
    const DenseMatrix m = ds.m.to_dense();

    // Largest eigenvalue is at most the largest absolute row sum; the
    // smallest is at least n because M = A·Aᵀ + n·I.
    double hi = 0;
    for (std::size_t i = 0; i < d.n; ++i) {
      double off = 0;
      for (std::size_t j = 0; j < d.n; ++j) {
        if (j != i) off += std::abs(m(i, j));
      }
      hi = std::max(hi, m(i, i) + off);
    }
    worst_cond = std::max(worst_cond, hi / double(d.n));

    const auto xs = designs(ds);
    std::vector<std::vector<double>> ref;
    for (const auto& x : xs) ref.push_back(*oracle::solve(m, x, ds.y));

    FlopCounter f;
    worst = std::max(worst, max_error(solve_sequence_blackbox(ds.m, xs, ds.y, f), ref));
    worst = std::max(worst, max_error(solve_sequence_seqgls(ds.m, xs, ds.y, f), ref));
    worst = std::max(worst, max_error(solve_sequence_hpgwas(ds.m, ds.xl, ds.xr, ds.y, d.r, 2, f), ref));
    worst = std::max(worst, max_error(solve_sequence_gwfgls(ds.m, ds.xl, ds.xr, ds.y, d.r, f), ref));
  }
  const double t = seconds_since(t0);
  o.require(worst_cond <= 1e4, fmt("cond(M) <= %.3g (bound 1e4)", worst_cond));
  o.require(worst <= 1e-8, fmt("max rel err %.3g (bound 1e-8)", worst));
  o.require(t <= 10, fmt("%.2f s (bound 10 s)", t));
  return o;
}

Outcome cost_model_ratios() {
  Outcome o;
  const auto t0 = Clock::now();
  const std::size_t p = 4, m = 1000;
  double bb_ratio[2] = {};
  int slot = 0;
  for (std::size_t n : {200u, 400u}) {
    const ProblemDims d{n, 3, 1, m};
    const auto ds = generate_in_memory(7, d, 1.0);
    const auto xs = designs(ds);
    FlopCounter bb, seq, hp, gw;
    solve_sequence_blackbox(ds.m, xs, ds.y, bb);
    solve_sequence_seqgls(ds.m, xs, ds.y, seq);
    solve_sequence_hpgwas(ds.m, ds.xl, ds.xr, ds.y, 1, 1, hp);
    solve_sequence_gwfgls(ds.m, ds.xl, ds.xr, ds.y, 1, gw);
    const double h = double(hp.total());
    const double r_bb = double(bb.total()) / h, r_seq = double(seq.total()) / h,
                 r_gw = double(gw.total()) / h;
    bb_ratio[slot++] = r_bb;
    o.require(r_bb >= 0.5 * double(n) && r_bb <= 2.0 * double(n),
              fmt("n=%zu blackbox/hpgwas %.2f in [%.0f, %.0f]", n, r_bb, 0.5 * n, 2.0 * n));
    o.require(r_seq >= 0.5 * p && r_seq <= 2.0 * p,
              fmt("n=%zu seqgls/hpgwas %.2f in [2, 8]", n, r_seq));
    o.require(r_gw >= 1.5 && r_gw <= 3.0, fmt("n=%zu gwfgls/hpgwas %.3f in [1.5, 3]", n, r_gw));
  }
  const double growth = bb_ratio[1] / bb_ratio[0];
  o.require(growth >= 1.8, fmt("blackbox ratio growth n=400/n=200 %.3f (bound 1.8)", growth));
  const double t = seconds_since(t0);
  o.require(t <= 60, fmt("%.1f s (bound 60 s)", t));
  return o;
}

Outcome inverse_penalty() {
  Outcome o;
  const std::size_t n = 256;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  DenseMatrix a(n, n);
  for (auto& v : a.data()) v = u(rng);
  DenseMatrix m(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = i == j ? double(n) : 0.0;
      for (std::size_t k = 0; k < n; ++k) s += a(i, k) * a(j, k);
      m(i, j) = s;
    }
  }
  FlopCounter inv, chol;
  invert_general(m, inv);
  cholesky_lower(SymmetricMatrix(std::move(m)), chol);
  const double r = double(inv.total()) / double(chol.total());
  o.require(r >= 5 && r <= 7, fmt("invert/cholesky %.3f in [5, 7]", r));
  return o;
}

Outcome ooc_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  const ProblemDims d{512, 3, 1, 50000};
  const std::uint64_t mem_limit = 32ull << 20;
  TempDir dir("ooc");
  const auto paths = DatasetPaths::from_prefix((dir.path / "d").string());
  generate_dataset(11, d, 1.0, paths);
  const auto st = read_dataset(paths.static_file);

  std::vector<SolutionRecord> incore;
  {
    const auto ds = generate_in_memory(11, d, 1.0);
    FlopCounter f;
    incore = solve_sequence_hpgwas(ds.m, ds.xl, ds.xr, ds.y, d.r, 1, f);
  }

  FlopCounter f;
  const auto design = SharedDesign::setup(st.m, st.xl, st.y, f);
  std::size_t k = 0;
  {
    FileBackend probe(paths.xr_file, dir.path / "probe.bin");
    const auto rates = calibrate_rates(design, probe, 1);
    k = select_block_size(mem_limit, d, rates.compute_rate, rates.io_rate).k;
  }
  const auto schedule = plan_blocks(d, k, default_warmup(k), mem_limit);
  o.require(schedule.blocks.size() >= 8,
            fmt("k=%zu gives %zu blocks under 32 MiB (need >= 8)", k, schedule.blocks.size()));

  const fs::path sync_b = dir.path / "sync.b.bin", async_b = dir.path / "async.b.bin";
  OverlapReport rs, ra;
  {
    FileBackend be(paths.xr_file, sync_b);
    rs = run_ooc_sync(design, be, schedule, 1, f);
  }
  {
    FileBackend be(paths.xr_file, async_b);
    ra = run_ooc_async(design, be, schedule, 1, f);
  }
  o.require(rs.peak_buffer_bytes <= mem_limit && ra.peak_buffer_bytes <= mem_limit,
            fmt("peak buffers %.1f MiB", double(ra.peak_buffer_bytes) / (1 << 20)));
  o.require(sha256_file(sync_b) == sha256_file(async_b), "sync and async b files bitwise equal");
  const auto out = read_b_stream(async_b);
  o.require(out.header.outputs_valid(), "outputs-valid flag set");
  double err = 0;
  for (std::size_t i = 0; i < d.m; ++i) err = std::max(err, oracle::relative_error(out.records[i].b, incore[i].b));
  o.require(err <= 1e-12, fmt("max rel diff vs in-core %.3g (bound 1e-12)", err));
  o.require(bitwise_equal(out.records, incore), "bitwise equal to in-core");
  const double t = seconds_since(t0);
  o.require(t <= 300, fmt("%.1f s (bound 300 s)", t));
  return o;
}

Outcome overlap() {
  Outcome o;
  // Blocks long enough that thread wake-up latency stays small next to a
  // simulated transfer.
  const ProblemDims d{512, 3, 1, 16000};
  const std::size_t k = 1000;
  const auto ds = generate_in_memory(13, d, 1.0);
  FlopCounter f;
  const auto design = SharedDesign::setup(ds.m, ds.xl, ds.y, f);
  const auto schedule = plan_blocks(d, k, 0);

  // Per-block compute time without any storage cost.
  double per_block = 0;
  {
    MemoryBackend mem(d, ds.xr);
    const auto rep = run_ooc_sync(design, mem, schedule, 1, f);
    per_block = rep.compute.count() / double(rep.blocks.size());
  }
  auto simulated = [&](double latency_per_transfer) {
    return SimulatedBackend(std::make_unique<MemoryBackend>(d, ds.xr),
                            {std::chrono::duration_cast<Seconds>(Seconds(latency_per_transfer))});
  };

  {  // compute-bound: transfers take a fifth of a block's compute
    auto sim = simulated(0.1 * per_block);
    const auto rep = run_ooc_async(design, sim, schedule, 1, f);
    const double frac = rep.exposed_fraction_after_first_load();
    o.require(frac <= 0.10, fmt("compute-bound exposed wait %.1f%% (bound 10%%)", 100 * frac));
  }
  {  // balanced: one read plus one write equals one block of compute
    auto s1 = simulated(0.5 * per_block), s2 = simulated(0.5 * per_block);
    const double sync = run_ooc_sync(design, s1, schedule, 1, f).wall.count();
    const double async = run_ooc_async(design, s2, schedule, 1, f).wall.count();
    o.require(sync >= 1.05 * async,
              fmt("balanced sync/async wall %.3f (bound 1.05)", sync / async));
  }
  {  // I/O-bound: transfers take three times a block's compute
    auto sim = simulated(1.5 * per_block);
    const auto rep = run_ooc_async(design, sim, schedule, 1, f);
    const double bound = sim.total_io_time().count() + rep.blocks.front().compute.count();
    o.require(rep.wall.count() <= 1.15 * bound,
              fmt("I/O-bound wall / (I/O + first compute) %.3f (bound 1.15)",
                  rep.wall.count() / bound));
  }
  return o;
}

struct LargeRun {
  std::vector<SolutionRecord> recs;
  FlopCounter flops;
  double wall = 0;
};

LargeRun large_incore(const SyntheticDataset& ds, std::size_t workers) {
  LargeRun r;
  const auto t0 = Clock::now();
  r.recs = solve_sequence_hpgwas(ds.m, ds.xl, ds.xr, ds.y, ds.dims.r, workers, r.flops);
  r.wall = seconds_since(t0);
  return r;
}

const SyntheticDataset& large_dataset() {
  static const SyntheticDataset ds = generate_in_memory(17, {2000, 3, 1, 20000}, 1.0);
  return ds;
}

Outcome scalability() {
  Outcome o;
  const auto& ds = large_dataset();
  const auto one = large_incore(ds, 1);
  const auto four = large_incore(ds, 4);
  const double speedup = one.wall / four.wall;
  o.require(speedup >= 2.4, fmt("speedup at 4 workers %.2f (bound 2.4; %u hardware threads)",
                                speedup, std::thread::hardware_concurrency()));
  o.require(bitwise_equal(one.recs, four.recs), "1 and 4 workers bitwise equal");
  const auto two = large_incore(ds, 2);
  o.require(bitwise_equal(one.recs, two.recs), "1 and 2 workers bitwise equal");
  return o;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GLSSEQ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome robustness() {
  Outcome o;
  TempDir dir("robust");

  {  // non-SPD M through the command-line driver
    const std::string prefix = (dir.path / "bad").string();
    const ProblemDims d{48, 3, 1, 20};
    generate_dataset(19, d, 1.0, DatasetPaths::from_prefix(prefix));
    const auto paths = DatasetPaths::from_prefix(prefix);
    auto st = read_dataset(paths.static_file);
    DenseMatrix m = st.m.to_dense();
    m(10, 10) = -5.0;
    write_dataset(paths.static_file, st.header, SymmetricMatrix(std::move(m)), st.xl, st.y);
    const int a = run_cli("solve --prefix " + prefix);
    const int b = run_cli("solve --prefix " + prefix + " --mode ooc-async --block-size 5");
    o.require(a == 3 && b == 3, fmt("non-SPD exit codes %d/%d (expect 3)", a, b));
    FlopCounter f;
    try {
      SharedDesign::setup(read_dataset(paths.static_file).m, st.xl, st.y, f);
      o.require(false, "NotSPD raised");
    } catch (const Error& e) {
      o.require(e.code() == ErrorCode::NotSPD, "NotSPD raised");
    }
  }

  {  // a rank-deficient panel leaves its neighbours untouched
    const ProblemDims d{40, 3, 1, 9};
    auto ds = generate_in_memory(23, d, 1.0);
    FlopCounter f;
    const auto clean = solve_sequence_hpgwas(ds.m, ds.xl, ds.xr, ds.y, 1, 1, f);
    for (std::size_t i = 0; i < d.n; ++i) ds.xr(i, 4) = 0.0;
    bool ok = true;
    for (std::size_t w : {1u, 3u}) {
      const auto hp = solve_sequence_hpgwas(ds.m, ds.xl, ds.xr, ds.y, 1, w, f);
      const auto gw = solve_sequence_gwfgls(ds.m, ds.xl, ds.xr, ds.y, 1, f);
      ok = ok && hp[4].status == SolveStatus::RankDeficient &&
           gw[4].status == SolveStatus::RankDeficient;
      for (std::size_t i = 0; i < d.m; ++i) {
        if (i != 4) ok = ok && hp[i] == clean[i];
      }
    }
    const auto xs = designs(ds);
    const auto bb = solve_sequence_blackbox(ds.m, xs, ds.y, f);
    const auto seq = solve_sequence_seqgls(ds.m, xs, ds.y, f);
    ok = ok && bb[4].status == SolveStatus::RankDeficient &&
         seq[4].status == SolveStatus::RankDeficient && bb[3].status == SolveStatus::Ok &&
         seq[5].status == SolveStatus::Ok;
    o.require(ok, "rank-deficient panel flagged, neighbours bitwise unchanged");
  }

  {  // truncated X_R stream
    const ProblemDims d{32, 3, 1, 200};
    const auto paths = DatasetPaths::from_prefix((dir.path / "trunc").string());
    generate_dataset(29, d, 1.0, paths);
    fs::resize_file(paths.xr_file, layout::panel_offset(d, 130));
    const auto st = read_dataset(paths.static_file);
    const fs::path b = dir.path / "trunc.b.bin";
    bool named = false;
    try {
      FileBackend be(paths.xr_file, b);
      FlopCounter f;
      run_ooc_async(StaticOperands{st.m, st.xl, st.y}, be, plan_blocks(d, 25, 0), 1, f);
    } catch (const Error& e) {
      named = e.code() == ErrorCode::TruncatedFile && e.index() == std::optional<std::size_t>(5) &&
              std::string(e.what()).find("block 5") != std::string::npos;
    }
    o.require(named, "truncated stream raises TruncatedFile naming block 5");
    o.require(!read_b_stream(b).header.outputs_valid(), "outputs-valid flag clear after abort");
  }
  return o;
}

Outcome blas3_dominance() {
  Outcome o;
  const auto run = large_incore(large_dataset(), 1);
  const double frac = double(run.flops.matrix_matrix_flops()) / double(run.flops.total());
  o.require(frac >= 0.90,
            fmt("matrix-matrix share %.2f%% at n=2000, m=20000 (bound 90%%)", 100 * frac));
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glsseq acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "oracle equivalence", oracle_equivalence},
      {2, "cost-model ratios", cost_model_ratios},
      {3, "explicit-inverse penalty", inverse_penalty},
      {4, "out-of-core equivalence", ooc_equivalence},
      {5, "I/O overlap", overlap},
      {6, "scalability", scalability},
      {7, "robustness", robustness},
      {8, "matrix-matrix dominance", blas3_dominance},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name
              << "): " << o.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
