#include "deqsci/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include <Eigen/Dense>

#include "deqsci/error.hpp"

namespace deqsci {

namespace {

constexpr std::size_t kMaxDense = 4096;

VideoCube random_unit(const VideoCube &like, std::mt19937_64 &rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  VideoCube v = like.zeros_like();
  for (double &e : v.data()) e = g(rng);
  v.vec() /= v.vec().norm();
  return v;
}

double fd_step(const VideoCube &x, const VideoCube &v) {
  const double nx = norm(x);
  return 1e-6 * (nx > 0.0 ? nx : 1.0) / norm(v);
}

VideoCube jvp(const IterationMap &map, const VideoCube &x, const VideoCube &fx, const VideoCube &v) {
  const double t = fd_step(x, v);
  VideoCube xp = x;
  xp.vec() += t * v.vec();
  VideoCube out = map.apply(xp);
  out.vec() = (out.vec() - fx.vec()) / t;
  return out;
}

}  // namespace

double estimate_map_lipschitz(const IterationMap &map, const VideoCube &x, int n_iters, std::uint64_t seed) {
  if (n_iters < 5) throw Error(ErrorKind::InvalidArgument, "estimate_map_lipschitz needs n_iters >= 5");
  std::mt19937_64 rng(seed);
  const VideoCube fx = map.apply(x);

  Eigen::MatrixXd dense;
  if (!map.has_vjp()) {
    if (x.size() > kMaxDense)
      throw Error(ErrorKind::TooLarge, "map has no VJP and " + std::to_string(x.size()) +
                                           " unknowns exceed the dense finite-difference limit");
    const auto n = static_cast<Eigen::Index>(x.size());
    dense.resize(n, n);
    VideoCube e = x.zeros_like();
    for (Eigen::Index k = 0; k < n; ++k) {
      e.data()[k] = 1.0;
      dense.col(k) = jvp(map, x, fx, e).vec();
      e.data()[k] = 0.0;
    }
  }

  VideoCube v = random_unit(x, rng);
  double lambda = 0.0;
  for (int it = 0; it < n_iters; ++it) {
    const VideoCube jv = jvp(map, x, fx, v);
    lambda = jv.vec().squaredNorm();
    VideoCube w = x.zeros_like();
    if (dense.size() > 0)
      w.vec() = dense.transpose() * jv.vec();
    else
      w = map.vjp_input(x, jv);
    const double nw = w.vec().norm();
    if (!(nw > 0.0)) return 0.0;
    v.vec() = w.vec() / nw;
  }
  const VideoCube jv = jvp(map, x, fx, v);
  lambda = std::max(lambda, jv.vec().squaredNorm());
  return std::sqrt(lambda);
}

ProjectionSpectrum projection_spectrum(const SensingMask &mask) {
  const std::size_t n = mask.pixels();
  const std::size_t B = mask.frames();
  if (n * B > kMaxDense)
    throw Error(ErrorKind::TooLarge,
                "projection_spectrum needs H*W*B <= 4096, got " + std::to_string(n * B));
  const auto N = static_cast<Eigen::Index>(n * B);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), N);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < n; ++i) phi(i, b * n + i) = mask.frame(b).data[i];
  Eigen::VectorXd qinv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) qinv(i) = mask.dead(i) ? 0.0 : 1.0 / mask.divisor(i);
  const Eigen::MatrixXd P = phi.transpose() * qinv.asDiagonal() * phi;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Eigen::EigenvaluesOnly);
  ProjectionSpectrum out;
  out.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + N);
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), std::greater<>());
  out.idempotence_defect = (P * P - P).norm();
  out.trace = P.trace();
  return out;
}

double gap_contraction_bound(double epsilon, const std::vector<double> &eigenvalues) {
  if (!(epsilon >= 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be >= 0");
  if (eigenvalues.empty()) throw Error(ErrorKind::InvalidArgument, "eigenvalue list is empty");
  double m = 0.0;
  for (double l : eigenvalues) m = std::max(m, std::abs(1.0 - l));
  return (1.0 + epsilon) * m;
}

double estimate_rnn_contraction(const DeRnnMap &map, std::uint64_t seed, int n_pairs) {
  if (n_pairs < 1) throw Error(ErrorKind::InvalidArgument, "n_pairs must be >= 1");
  const SensingMask &mask = map.mask();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double best = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    VideoCube x(mask.height(), mask.width(), mask.frames());
    for (double &v : x.data()) v = unif(rng);
    VideoCube xp = x.zeros_like();
    if (k % 2 == 0) {
      for (double &v : xp.data()) v = unif(rng);
    } else {
      for (std::size_t i = 0; i < x.size(); ++i) xp.data()[i] = x.data()[i] + 1e-3 * gauss(rng);
    }
    const double dx = (x.vec() - xp.vec()).norm();
    if (dx == 0.0) continue;
    const VideoCube fx = map.apply(x);
    const VideoCube fxp = map.apply(xp);
    best = std::max(best, (fx.vec() - fxp.vec()).norm() / dx);
  }
  return best;
}

std::string LipschitzReport::to_text() const {
  std::string out;
  char buf[96];
  auto put = [&](const char *key, double v) {
    std::snprintf(buf, sizeof buf, "%s=%.12g\n", key, v);
    out += buf;
  };
  put("sigma_hat", sigma_hat);
  put("epsilon_hat", epsilon_hat);
  put("epsilon_upper", epsilon_upper);
  put("eta_bound", eta_bound);
  out += std::string("contraction_flag=") + (contraction_flag ? "1" : "0") + "\n";
  put("rnn_c_hat", rnn_c_hat);
  out += std::string("eta_not_contractive=") + (eta_not_contractive ? "1" : "0") + "\n";
  return out;
}

}  // namespace deqsci
