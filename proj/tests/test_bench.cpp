#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "deqsci/bench.hpp"
#include "deqsci/error.hpp"
#include "deqsci/synth.hpp"
#include "deqsci/tensor_io.hpp"

using namespace deqsci;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

VideoCube roll(const VideoCube &x, std::size_t b, int di, int dj) {
  VideoCube out(x.height(), x.width(), 1);
  const auto H = static_cast<int>(x.height()), W = static_cast<int>(x.width());
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) out(((i + di) % H + H) % H, ((j + dj) % W + W) % W, 0) = x(i, j, b);
  return out;
}

BenchSpec small_spec(const std::string &dir) {
  BenchSpec spec;
  spec.scenes = {SyntheticScene{SceneKind::MovingSquare, 3, 16, 16, 4, 1},
                 SyntheticScene{SceneKind::BouncingDots, 4, 16, 16, 4, 1}};
  spec.methods = {parse_bench_method("pnp_gap:0.05"), parse_bench_method("de_gap"),
                  parse_bench_method("admm:1:0.02")};
  spec.K = 6;
  spec.output_dir = dir;
  spec.timing = false;
  return spec;
}

}  // namespace

TEST_CASE("synthetic scenes") {
  for (SceneKind k : {SceneKind::MovingSquare, SceneKind::ShiftingGradient, SceneKind::BouncingDots}) {
    const SyntheticScene s{k, 5, 20, 24, 6, 2};
    const VideoCube x = synth_video(s);
    CHECK(x.height() == 20);
    CHECK(x.width() == 24);
    CHECK(x.frames() == 6);
    CHECK(x.vec().minCoeff() >= 0.0);
    CHECK(x.vec().maxCoeff() <= 1.0);
    CHECK(synth_video(s).data() == x.data());
    SyntheticScene other = s;
    other.seed = 6;
    CHECK(synth_video(other).data() != x.data());
    CHECK(parse_scene_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_scene_kind("spiral"), Error);

  SyntheticScene still{SceneKind::MovingSquare, 9, 16, 16, 5, 0};
  const VideoCube s0 = synth_video(still);
  for (std::size_t b = 1; b < 5; ++b) CHECK(std::ranges::equal(s0.frame(b), s0.frame(0)));

  SyntheticScene moving{SceneKind::MovingSquare, 9, 16, 16, 5, 2};
  const auto [di, dj] = square_motion(moving);
  CHECK(std::max(std::abs(di), std::abs(dj)) == 2);
  const VideoCube m = synth_video(moving);
  for (std::size_t b = 1; b < 5; ++b) {
    const VideoCube rolled = roll(m, 0, di * static_cast<int>(b), dj * static_cast<int>(b));
    CHECK(std::ranges::equal(rolled.frame(0), m.frame(b)));
  }
}

TEST_CASE("bench method parsing") {
  const BenchMethod g = parse_bench_method("pnp_gap:0.1/0.05");
  CHECK(g.kind == BenchMethod::Kind::PnpGap);
  CHECK(g.schedule == std::vector<double>{0.1, 0.05});
  const BenchMethod a = parse_bench_method("admm:0.5:0.02");
  CHECK(a.kind == BenchMethod::Kind::Admm);
  CHECK(a.rho == 0.5);
  CHECK(parse_bench_method("de_gap").label == "de_gap_identity");
  CHECK(parse_bench_method("de_gap:model.vsci").checkpoint == "model.vsci");
  CHECK_THROWS_AS(parse_bench_method("de_rnn"), Error);
  CHECK_THROWS_AS(parse_bench_method("magic"), Error);
  CHECK_THROWS_AS(parse_bench_method("admm:x"), Error);
  CHECK(parse_bench_method(to_string(g)).schedule == g.schedule);
}

TEST_CASE("trajectory bench writes traces and a summary") {
  const fs::path dir = scratch("deqsci_bench_a");
  const BenchResult r = run_trajectory_bench(small_spec(dir.string()));
  REQUIRE(r.rows.size() == 6);
  CHECK(fs::exists(r.summary_file));
  const std::string summary = slurp(r.summary_file);
  CHECK(summary.rfind("scene,method,final_psnr,max_psnr,drop_db,mean_ssim,sec_per_meas\n", 0) == 0);
  for (const BenchRow &row : r.rows) {
    CHECK(fs::exists(row.trace_file));
    CHECK(row.max_psnr >= row.final_psnr);
    CHECK(row.drop_db == doctest::Approx(row.max_psnr - row.final_psnr));
    const std::string trace = slurp(row.trace_file);
    CHECK(trace.rfind("iter,psnr,residual,time_ms\n", 0) == 0);
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 7);
    // The identity DE-GAP map is idempotent, so its PSNR never moves.
    if (row.method == "de_gap_identity") CHECK(row.drop_db == 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("bench output is bitwise deterministic without timing") {
  const fs::path a = scratch("deqsci_bench_b1"), b = scratch("deqsci_bench_b2");
  BenchSpec sa = small_spec(a.string()), sb = small_spec(b.string());
  sb.workers = 3;
  const BenchResult ra = run_trajectory_bench(sa);
  const BenchResult rb = run_trajectory_bench(sb);
  CHECK(slurp(ra.summary_file) == slurp(rb.summary_file));
  for (std::size_t k = 0; k < ra.rows.size(); ++k) CHECK(slurp(ra.rows[k].trace_file) == slurp(rb.rows[k].trace_file));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("bench validation and checkpoints") {
  const fs::path dir = scratch("deqsci_bench_c");
  BenchSpec spec = small_spec(dir.string());
  spec.methods = {parse_bench_method("de_gap:" + (dir / "missing.vsci").string())};
  try {
    run_trajectory_bench(spec);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
  spec.K = 0;
  CHECK_THROWS_AS(run_trajectory_bench(spec), Error);
  spec = small_spec(dir.string());
  spec.methods = {parse_bench_method("admm:-1")};
  CHECK_THROWS_AS(run_trajectory_bench(spec), Error);
  spec = small_spec(dir.string());
  spec.methods.clear();
  CHECK_THROWS_AS(run_trajectory_bench(spec), Error);

  // A trained-model column loads its checkpoint.
  fs::create_directories(dir);
  const std::string ckpt = (dir / "m.vsci").string();
  DeGapModel(ConvDenoiserParams::make(4, 4, 2, 3, 0.5, 1)).save(ckpt);
  spec = small_spec(dir.string());
  spec.methods = {parse_bench_method("de_gap:" + ckpt)};
  const BenchResult r = run_trajectory_bench(spec);
  CHECK(r.rows.size() == 2);
  CHECK_FALSE(r.rows[0].diverged);
  fs::remove_all(dir);
}

TEST_CASE("synthetic training samples") {
  const SensingMask mask = mask_generate(1, 16, 16, 4, MaskKind::bernoulli(0.5), DeadPixelPolicy::floor());
  const SyntheticScene base{SceneKind::MovingSquare, 10, 16, 16, 4, 1};
  const auto s = synthetic_samples(base, 3, mask, 0.01, 5);
  REQUIRE(s.size() == 3);
  SyntheticScene second = base;
  second.seed = 11;
  CHECK(s[1].x_star.data() == synth_video(second).data());
  CHECK(s[0].y.data.data != s[1].y.data.data);
}
