#include <doctest.h>

#include <limits>

#include "deqsci/error.hpp"
#include "deqsci/fixed_point.hpp"
#include "oracles.hpp"

using namespace deqsci;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

/// A random 16 x 16 matrix rescaled to the given spectral radius.
MatrixXd random_contraction(std::uint64_t seed, double radius) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd A(16, 16);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = g(rng);
  const double rho = A.eigenvalues().cwiseAbs().maxCoeff();
  return A * (radius / rho);
}

VectorXd random_vec(std::uint64_t seed, Eigen::Index n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

CubeMap affine(const MatrixXd &A, const VectorXd &b) {
  return [A, b](const VideoCube &x) {
    VideoCube out = x;
    out.vec() = A * x.vec() + b;
    return out;
  };
}

}  // namespace

TEST_CASE("config validation") {
  FixedPointConfig c;
  CHECK_NOTHROW(c.validate());
  c.tol = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.max_iter = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.anderson_memory = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.anderson_damping = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.anderson_reg = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("picard: halving map") {
  const CubeMap half = [](const VideoCube &x) {
    VideoCube o = x;
    o.vec() *= 0.5;
    return o;
  };
  FixedPointConfig cfg;
  cfg.max_iter = 60;
  const SolveResult r = picard_solve(half, VideoCube(1, 1, 1, 1.0), cfg);
  CHECK(r.converged);
  CHECK(r.iterations <= 60);
  CHECK(norm(r.x_hat) <= cfg.tol);
  REQUIRE(r.trace.rows.size() == static_cast<std::size_t>(r.iterations));
  for (std::size_t k = 1; k < r.trace.rows.size(); ++k)
    CHECK(r.trace.rows[k].residual == doctest::Approx(0.5 * r.trace.rows[k - 1].residual).epsilon(1e-14));
}

TEST_CASE("picard: identity converges at iteration 1") {
  const CubeMap id = [](const VideoCube &x) { return x; };
  const SolveResult r = picard_solve(id, VideoCube(2, 2, 2, 0.3), {});
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK(r.trace.rows.at(0).residual == 0.0);
}

TEST_CASE("picard and anderson: affine map against the dense solve") {
  const MatrixXd A = random_contraction(1, 0.8);
  const VectorXd b = random_vec(2, 16);
  const VectorXd ref = (MatrixXd::Identity(16, 16) - A).partialPivLu().solve(b);
  FixedPointConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_iter = 2000;
  const SolveResult p = picard_solve(affine(A, b), VideoCube(4, 4, 1), cfg);
  const SolveResult a = anderson_solve(affine(A, b), VideoCube(4, 4, 1), cfg);
  REQUIRE(p.converged);
  REQUIRE(a.converged);
  CHECK((p.x_hat.vec() - ref).norm() <= 1e-8);
  CHECK((a.x_hat.vec() - ref).norm() <= 1e-8);
  CHECK(a.iterations <= p.iterations);
}

TEST_CASE("anderson: spectral radius 0.99 reaches 1e-9 no slower than picard") {
  const MatrixXd A = random_contraction(3, 0.99);
  const VectorXd b = random_vec(4, 16);
  FixedPointConfig cfg;
  cfg.tol = 1e-9;
  cfg.max_iter = 20000;
  const SolveResult p = picard_solve(affine(A, b), VideoCube(4, 4, 1), cfg);
  const SolveResult a = anderson_solve(affine(A, b), VideoCube(4, 4, 1), cfg);
  REQUIRE(p.converged);
  REQUIRE(a.converged);
  CHECK(a.iterations <= p.iterations);
  for (const auto &row : a.trace.rows) {
    if (row.alpha.empty()) continue;
    double s = 0.0;
    for (double v : row.alpha) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("anderson with s=1 is damped picard") {
  const MatrixXd A = random_contraction(5, 0.95);
  const VectorXd b = random_vec(6, 16);
  const double delta = 0.7;
  FixedPointConfig cfg;
  cfg.anderson_memory = 1;
  cfg.anderson_damping = delta;
  cfg.tol = 1e-300;
  cfg.max_iter = 50;
  std::vector<VectorXd> seen;
  const IterateMetric grab = [&](const VideoCube &x) {
    seen.push_back(x.vec());
    return 0.0;
  };
  (void)anderson_solve(affine(A, b), VideoCube(4, 4, 1), cfg, grab);
  REQUIRE(seen.size() == 50);
  VectorXd x = VectorXd::Zero(16);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    worst = std::max(worst, (seen[static_cast<std::size_t>(k)] - x).lpNorm<Eigen::Infinity>());
    x = (1.0 - delta) * x + delta * (A * x + b);
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("solve_alpha") {
  CHECK(solve_alpha(MatrixXd::Random(5, 1), 1e-8)(0) == 1.0);

  MatrixXd orth = MatrixXd::Zero(4, 2);
  orth(0, 0) = 2.0;
  orth(1, 1) = 2.0;
  const VectorXd a2 = solve_alpha(orth, 1e-8);
  CHECK(a2(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(a2(1) == doctest::Approx(0.5).epsilon(1e-12));

  // KKT oracle: [2 A^T A, 1; 1^T, 0] [alpha; mu] = [0; 1].
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd A(20, 5);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = g(rng);
    MatrixXd K = MatrixXd::Zero(6, 6);
    K.topLeftCorner(5, 5) = 2.0 * A.transpose() * A;
    K.block(0, 5, 5, 1).setOnes();
    K.block(5, 0, 1, 5).setOnes();
    VectorXd rhs = VectorXd::Zero(6);
    rhs(5) = 1.0;
    const VectorXd kkt = K.fullPivLu().solve(rhs);
    const double ref = (A * kkt.head(5)).squaredNorm();
    const VectorXd alpha = solve_alpha(A, 0.0);
    CHECK(std::abs(alpha.sum() - 1.0) <= 1e-12);
    CHECK(std::abs((A * alpha).squaredNorm() - ref) <= 1e-9);
    const VectorXd alpha_reg = solve_alpha(A, 1e-8);
    CHECK(std::abs((A * alpha_reg).squaredNorm() - ref) <= 1e-6 * ref);
  }

  MatrixXd zero_col(6, 3);
  zero_col.setRandom();
  zero_col.col(1).setZero();
  const VectorXd az = solve_alpha(zero_col, 1e-8);
  CHECK(az(1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((zero_col * az).norm() <= 1e-6);

  MatrixXd dup(4, 2);
  dup.col(0) = VectorXd::Ones(4);
  dup.col(1) = VectorXd::Ones(4);
  CHECK_THROWS_AS(solve_alpha(dup, 0.0), Error);
}

TEST_CASE("anderson falls back to picard on singular weights") {
  // Constant residual: every column of the residual matrix is identical.
  const CubeMap shift = [](const VideoCube &x) {
    VideoCube o = x;
    o.vec().array() += 1.0;
    return o;
  };
  FixedPointConfig cfg;
  cfg.anderson_reg = 0.0;
  cfg.max_iter = 5;
  const SolveResult r = anderson_solve(shift, VideoCube(2, 2, 1), cfg);
  CHECK_FALSE(r.converged);
  bool fell_back = false;
  for (const auto &row : r.trace.rows) fell_back = fell_back || row.picard_fallback;
  CHECK(fell_back);
  CHECK(r.x_hat.vec().isApprox(VectorXd::Constant(4, 5.0)));
}

TEST_CASE("divergence guard") {
  const CubeMap doubling = [](const VideoCube &x) {
    VideoCube o = x;
    o.vec() *= 2.0;
    return o;
  };
  try {
    (void)picard_solve(doubling, VideoCube(1, 1, 2, 1.0), {});
    FAIL("expected divergence");
  } catch (const DivergedError &e) {
    CHECK(e.kind() == ErrorKind::Diverged);
    CHECK(e.iteration() > 1);
    CHECK(e.trace().rows.size() == static_cast<std::size_t>(e.iteration()));
  }
  const CubeMap nan_map = [](const VideoCube &x) {
    VideoCube o = x;
    o.data()[0] = std::numeric_limits<double>::quiet_NaN();
    return o;
  };
  CHECK_THROWS_AS(anderson_solve(nan_map, VideoCube(1, 1, 2, 1.0), {}), DivergedError);
}

TEST_CASE("contraction: residual ratio bounded by c after burn-in") {
  const double c = 0.7;
  const MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(MatrixXd::Random(16, 16)).householderQ();
  const MatrixXd A = c * Q;  // orthogonal times c: Lipschitz exactly c
  const VectorXd b = random_vec(8, 16);
  FixedPointConfig cfg;
  cfg.tol = 1e-14;
  cfg.max_iter = 60;
  const SolveResult r = picard_solve(affine(A, b), VideoCube(4, 4, 1), cfg);
  for (std::size_t k = 6; k < r.trace.rows.size(); ++k)
    CHECK(r.trace.rows[k].residual / r.trace.rows[k - 1].residual <= c + 0.02);
}

TEST_CASE("determinism, consistency and CSV export") {
  const MatrixXd A = random_contraction(9, 0.9);
  const VectorXd b = random_vec(10, 16);
  FixedPointConfig cfg;
  const SolveResult r1 = anderson_solve(affine(A, b), VideoCube(4, 4, 1), cfg);
  const SolveResult r2 = anderson_solve(affine(A, b), VideoCube(4, 4, 1), cfg);
  CHECK(r1.trace.to_csv(false) == r2.trace.to_csv(false));
  CHECK(r1.x_hat.vec() == r2.x_hat.vec());
  REQUIRE(r1.converged);
  const VideoCube fx = affine(A, b)(r1.x_hat);
  CHECK((fx.vec() - r1.x_hat.vec()).norm() / (r1.x_hat.vec().norm() + 1e-12) <= cfg.tol);
  CHECK(r1.iterations <= cfg.max_iter);

  const std::string csv = r1.trace.to_csv(true);
  CHECK(csv.rfind("iter,residual,rel_residual,psnr,time_ms\n", 0) == 0);
  const std::string first_row = csv.substr(csv.find('\n') + 1, csv.find('\n', csv.find('\n') + 1) - csv.find('\n') - 1);
  CHECK(first_row.find(",,") != std::string::npos);  // empty psnr column
}
