#include <doctest.h>

#include "deqsci/analysis.hpp"
#include "deqsci/denoiser.hpp"
#include "deqsci/error.hpp"
#include "oracles.hpp"

using namespace deqsci;
using Eigen::MatrixXd;

namespace {

/// f(x) = A x with the exact VJP, or without one to exercise the fallback.
class LinearMap : public IterationMap {
 public:
  LinearMap(MatrixXd A, std::size_t h, std::size_t w, std::size_t b, bool vjp = true)
      : A_(std::move(A)), h_(h), w_(w), b_(b), vjp_(vjp) {}
  VideoCube apply(const VideoCube &x) const override {
    VideoCube out(h_, w_, b_);
    out.vec() = A_ * x.vec();
    return out;
  }
  bool has_vjp() const override { return vjp_; }
  VideoCube vjp_input(const VideoCube &, const VideoCube &v) const override {
    VideoCube out(h_, w_, b_);
    out.vec() = A_.transpose() * v.vec();
    return out;
  }

 private:
  MatrixXd A_;
  std::size_t h_, w_, b_;
  bool vjp_;
};

std::vector<Image> ones_frames(std::size_t h, std::size_t w, std::size_t b) {
  return std::vector<Image>(b, Image(h, w, 1.0));
}

}  // namespace

TEST_CASE("map Lipschitz estimate on analytic maps") {
  std::mt19937_64 rng(1);
  const VideoCube x = oracle::random_cube(3, 3, 2, rng);
  const LinearMap half(0.5 * MatrixXd::Identity(18, 18), 3, 3, 2);
  const double s = estimate_map_lipschitz(half, x, 20, 1);
  CHECK(s >= 0.499);
  CHECK(s <= 0.501);
  CHECK(estimate_map_lipschitz(LinearMap(MatrixXd::Zero(18, 18), 3, 3, 2), x, 10, 1) == 0.0);
  CHECK_THROWS_AS(estimate_map_lipschitz(half, x, 4, 1), Error);

  const SensingMask mask = oracle::random_mask(3, 3, 2, rng);
  const Measurement y = forward(mask, x);
  const double id = estimate_map_lipschitz(DeGapMap(IdentityDenoiser{}, mask, y), x, 50, 2);
  CHECK(id >= 0.99);
  CHECK(id <= 1.01);

  const SensingMask full(ones_frames(3, 3, 1));
  const VideoCube x1 = oracle::random_cube(3, 3, 1, rng);
  const double c = estimate_map_lipschitz(DeGapMap(IdentityDenoiser{}, full, forward(full, x1)), x1, 20, 3);
  CHECK(c <= 1e-6);
}

TEST_CASE("power iteration matches dense SVD within 1%") {
  std::mt19937_64 rng(4);
  for (int n : {8, 27, 64}) {
    const std::size_t side = n == 27 ? 3 : 2;
    const std::size_t frames = static_cast<std::size_t>(n) / (side * side);
    for (int t = 0; t < 3; ++t) {
      MatrixXd A = MatrixXd::Random(n, n);
      const VideoCube x = oracle::random_cube(side, side, frames, rng);
      const double ref = oracle::spectral_norm(A);
      const double est = estimate_map_lipschitz(LinearMap(A, side, side, frames), x, 300, 5 + t);
      CHECK(std::abs(est - ref) <= 0.01 * ref);
    }
  }
  // Dense finite-difference fallback when the map has no VJP.
  MatrixXd A = MatrixXd::Random(18, 18);
  const VideoCube x = oracle::random_cube(3, 3, 2, rng);
  const double est = estimate_map_lipschitz(LinearMap(A, 3, 3, 2, false), x, 300, 9);
  CHECK(std::abs(est - oracle::spectral_norm(A)) <= 0.01 * oracle::spectral_norm(A));
}

TEST_CASE("projection spectrum is 0/1 with trace n") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 5; ++t) {
    const std::size_t h = 2 + t % 3, w = 3, b = 2 + t % 2;
    const SensingMask mask = oracle::random_mask(h, w, b, rng);
    const ProjectionSpectrum sp = projection_spectrum(mask);
    REQUIRE(sp.eigenvalues.size() == h * w * b);
    std::size_t ones = 0;
    for (double l : sp.eigenvalues) {
      const bool one = std::abs(l - 1.0) <= 1e-8;
      CHECK((one || std::abs(l) <= 1e-8));
      ones += one;
    }
    CHECK(ones == h * w);
    CHECK(sp.trace == doctest::Approx(static_cast<double>(h * w)).epsilon(1e-9));
    CHECK(sp.idempotence_defect <= 1e-10);
    CHECK(std::is_sorted(sp.eigenvalues.rbegin(), sp.eigenvalues.rend()));
  }
  // Dead pixels drop out of the row space.
  std::vector<Image> frames = ones_frames(2, 2, 2);
  frames[0](0, 0) = frames[1](0, 0) = 0.0;
  const ProjectionSpectrum dead = projection_spectrum(SensingMask(frames, DeadPixelPolicy::floor()));
  CHECK(dead.trace == doctest::Approx(3.0));

  const ProjectionSpectrum full = projection_spectrum(SensingMask(ones_frames(2, 2, 1)));
  for (double l : full.eigenvalues) CHECK(l == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gap contraction bound") {
  CHECK(gap_contraction_bound(0.0, {1.0, 1.0}) == 0.0);
  CHECK(gap_contraction_bound(0.1, {0.0, 1.0}) == doctest::Approx(1.1));
  CHECK_THROWS_AS(gap_contraction_bound(-0.1, {1.0}), Error);
  CHECK_THROWS_AS(gap_contraction_bound(0.1, {}), Error);

  std::mt19937_64 rng(11);
  const ProjectionSpectrum sp = projection_spectrum(oracle::random_mask(3, 3, 3, rng));
  CHECK(gap_contraction_bound(0.05, sp.eigenvalues) == doctest::Approx(1.05).epsilon(1e-8));
}

TEST_CASE("bound consistency for a conv DE-GAP map") {
  std::mt19937_64 rng(12);
  const SensingMask mask = oracle::random_mask(6, 6, 2, rng);
  const VideoCube x = oracle::random_cube(6, 6, 2, rng);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ConvDenoiserParams p = ConvDenoiserParams::make(2, 4, 3, 3, 0.5, seed, ConvInit::Random, 0.4);
    p.sn_height = p.sn_width = 6;
    const double eps_upper = residual_lipschitz_bound(p, 6, 6, 300);
    const DeGapMap map(p, mask, forward(mask, x));
    const double sigma = estimate_map_lipschitz(map, x, 50, seed);
    const double eta = gap_contraction_bound(eps_upper, projection_spectrum(mask).eigenvalues);
    CHECK(sigma <= eta + 0.02);
  }
}

TEST_CASE("DE-RNN contraction estimate") {
  std::mt19937_64 rng(13);
  const SensingMask mask = oracle::random_mask(6, 6, 2, rng);
  const Measurement y = forward(mask, oracle::random_cube(6, 6, 2, rng));

  RecurrentCellParams zero = RecurrentCellParams::make(2, 3, 3, 0.1, 1);
  zero.unflatten(std::vector<double>(zero.param_count(), 0.0));
  CHECK(estimate_rnn_contraction(DeRnnMap(zero, mask, y), 1, 10) == doctest::Approx(1.0).epsilon(1e-9));

  RecurrentCellParams half = zero;
  half.skip = -0.5 / half.gamma;
  const double c_half = estimate_rnn_contraction(DeRnnMap(half, mask, y), 2, 10);
  CHECK(c_half >= 0.49);
  CHECK(c_half <= 0.51);

  RecurrentCellParams cell = RecurrentCellParams::make(2, 3, 3, 0.1, 3, 0.5);
  cell.sn_height = cell.sn_width = 6;
  cell.spectral_normalize(50);
  double max_q = 0.0;
  for (double q : mask.q_diag().data) max_q = std::max(max_q, q);
  const double c_hat = estimate_rnn_contraction(DeRnnMap(cell, mask, y), 4, 20);
  CHECK(c_hat <= 1.0 + 0.1 * cell.lipschitz_bound(max_q, 6, 6, 300) + 0.02);
  CHECK_THROWS_AS(estimate_rnn_contraction(DeRnnMap(cell, mask, y), 4, 0), Error);
}

TEST_CASE("Lipschitz report text") {
  LipschitzReport r;
  r.sigma_hat = 0.9;
  r.eta_bound = 1.05;
  r.eta_not_contractive = true;
  const std::string t = r.to_text();
  CHECK(t.find("sigma_hat=0.9") != std::string::npos);
  CHECK(t.find("eta_not_contractive=1") != std::string::npos);
}
