#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deqsci/implicit_grad.hpp"
#include "deqsci/synth.hpp"

namespace deqsci {

struct BenchMethod {
  enum class Kind { PnpGap, DeGap, DeRnn, Admm };
  Kind kind = Kind::PnpGap;
  /// TV strengths cycled over iterations (pnp_gap, admm).
  std::vector<double> schedule{0.05};
  double rho = 1.0;
  int tv_iters = 20;
  /// Model checkpoint (de_gap, de_rnn). An empty path with de_gap means the
  /// identity denoiser.
  std::string checkpoint;
  /// Column value in the summary and part of the trace file name.
  std::string label;
};

/// Parses "pnp_gap[:l1/l2/...]", "admm[:rho[:l1/l2/...]]", "de_gap[:ckpt]"
/// and "de_rnn:ckpt".
BenchMethod parse_bench_method(const std::string &text);
std::string to_string(const BenchMethod &m);

struct BenchSpec {
  std::vector<SyntheticScene> scenes;
  std::uint64_t mask_seed = 1;
  double mask_p = 0.5;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 7;
  std::vector<BenchMethod> methods;
  int K = 100;
  std::string output_dir = "bench_out";
  int workers = 1;
  /// Wall-clock columns are left empty when false so outputs are bitwise
  /// reproducible.
  bool timing = true;

  void validate() const;
};

struct BenchRow {
  std::string scene;
  std::string method;
  double final_psnr = 0.0;
  double max_psnr = 0.0;
  double drop_db = 0.0;  // NaN when the method diverged
  double mean_ssim = 0.0;  // NaN when frames are smaller than the SSIM window
  double sec_per_meas = 0.0;
  bool diverged = false;
  int diverged_at = 0;
  std::string trace_file;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::string summary_file;
};

/// Runs every scene x method cell for K iterations, recording PSNR of each
/// iterate. Writes one trace CSV per cell (iter,psnr,residual,time_ms) and
/// summary.csv (scene,method,final_psnr,max_psnr,drop_db,mean_ssim,sec_per_meas).
BenchResult run_trajectory_bench(const BenchSpec &spec);

std::string scene_label(const SyntheticScene &s);

/// `count` training samples: scenes of `base` with seeds base.seed + k, all
/// measured through `mask`, with noise seeded by noise_seed + k.
std::vector<Sample> synthetic_samples(const SyntheticScene &base, int count, const SensingMask &mask,
                                      double noise_sigma, std::uint64_t noise_seed);

}  // namespace deqsci
