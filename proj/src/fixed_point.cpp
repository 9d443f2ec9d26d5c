#include "deqsci/fixed_point.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>

#include <Eigen/Dense>

namespace deqsci {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// Shared bookkeeping: evaluates the residual at x, records it, applies the
/// divergence guard and reports whether the stopping rule fired.
class Monitor {
 public:
  Monitor(const FixedPointConfig &cfg, const IterateMetric &metric) : cfg_(cfg), metric_(metric) {}

  bool observe(int k, const VideoCube &x, const VideoCube &fx, IterationRecord rec) {
    if (!fx.all_finite()) {
      throw DivergedError("map produced NaN/Inf at iteration " + std::to_string(k), k, std::move(trace_));
    }
    const double r = (fx.vec() - x.vec()).norm();
    rec.iter = k;
    rec.residual = r;
    rec.rel_residual = r / (x.vec().norm() + 1e-12);
    rec.time_ms = elapsed_ms(start_);
    if (metric_) rec.psnr = metric_(x);
    last_rel_ = rec.rel_residual;
    if (cfg_.record_trace) trace_.rows.push_back(std::move(rec));
    min_residual_ = std::min(min_residual_, r);
    if (r > cfg_.divergence_factor * min_residual_ && min_residual_ > 0.0) {
      throw DivergedError("residual grew from " + std::to_string(min_residual_) + " to " + std::to_string(r) +
                              " at iteration " + std::to_string(k),
                          k, std::move(trace_));
    }
    return last_rel_ <= cfg_.tol;
  }

  void annotate_last(std::vector<double> alpha, bool fallback) {
    if (!cfg_.record_trace || trace_.rows.empty()) return;
    trace_.rows.back().alpha = std::move(alpha);
    trace_.rows.back().picard_fallback = fallback;
  }

  IterationTrace take_trace() { return std::move(trace_); }

 private:
  const FixedPointConfig &cfg_;
  const IterateMetric &metric_;
  IterationTrace trace_;
  Clock::time_point start_ = Clock::now();
  double min_residual_ = std::numeric_limits<double>::infinity();
  double last_rel_ = std::numeric_limits<double>::infinity();
};

}  // namespace

void FixedPointConfig::validate() const {
  if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "fixed-point tol must be > 0");
  if (max_iter < 1) throw Error(ErrorKind::InvalidArgument, "fixed-point max_iter must be >= 1");
  if (anderson_memory < 1) throw Error(ErrorKind::InvalidArgument, "anderson memory must be >= 1");
  if (!(anderson_damping > 0.0 && anderson_damping <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "anderson damping must lie in (0, 1]");
  if (!(anderson_reg >= 0.0)) throw Error(ErrorKind::InvalidArgument, "anderson reg must be >= 0");
}

std::string IterationTrace::to_csv(bool timing) const {
  std::string out = "iter,residual,rel_residual,psnr,time_ms\n";
  char buf[160];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,", r.iter, r.residual, r.rel_residual);
    out += buf;
    if (r.psnr) {
      std::snprintf(buf, sizeof buf, "%.12g", *r.psnr);
      out += buf;
    }
    out += ',';
    if (timing) {
      std::snprintf(buf, sizeof buf, "%.3f", r.time_ms);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void IterationTrace::write_csv(const std::string &path, bool timing) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  f << to_csv(timing);
}

SolveResult picard_solve(const CubeMap &map, VideoCube x0, const FixedPointConfig &cfg, const IterateMetric &metric) {
  cfg.validate();
  Monitor mon(cfg, metric);
  VideoCube x = std::move(x0);
  for (int k = 1; k <= cfg.max_iter; ++k) {
    VideoCube fx = map(x);
    require_same_shape(x, fx, "picard_solve");
    if (mon.observe(k, x, fx, {})) return {std::move(x), true, k, mon.take_trace()};
    x = std::move(fx);
  }
  return {std::move(x), false, cfg.max_iter, mon.take_trace()};
}

Eigen::VectorXd solve_alpha(const Eigen::MatrixXd &residuals, double reg) {
  const Eigen::Index s = residuals.cols();
  if (s < 1) throw Error(ErrorKind::InvalidArgument, "solve_alpha needs at least one column");
  if (!(reg >= 0.0)) throw Error(ErrorKind::InvalidArgument, "solve_alpha reg must be >= 0");
  if (s == 1) return Eigen::VectorXd::Ones(1);
  Eigen::MatrixXd gram = residuals.transpose() * residuals;
  const double scale = reg * gram.trace() / static_cast<double>(s);
  gram.diagonal().array() += scale;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(s);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
  if (qr.rank() < s) throw Error(ErrorKind::SingularAlpha, "Anderson normal equations are rank deficient");
  const Eigen::VectorXd w = qr.solve(ones);
  const double sum = w.sum();
  if (!w.allFinite() || !std::isfinite(sum) || std::abs(sum) < 1e-300) {
    throw Error(ErrorKind::SingularAlpha, "Anderson weights cannot be normalized");
  }
  return w / sum;
}

SolveResult anderson_solve(const CubeMap &map, VideoCube x0, const FixedPointConfig &cfg,
                           const IterateMetric &metric) {
  cfg.validate();
  Monitor mon(cfg, metric);
  const auto memory = static_cast<std::size_t>(cfg.anderson_memory);
  const double delta = cfg.anderson_damping;
  // Most recent pair at the front.
  std::deque<VideoCube> xs, fs;
  VideoCube x = std::move(x0);
  const auto n = static_cast<Eigen::Index>(x.size());
  for (int k = 1; k <= cfg.max_iter; ++k) {
    VideoCube fx = map(x);
    require_same_shape(x, fx, "anderson_solve");
    if (mon.observe(k, x, fx, {})) return {std::move(x), true, k, mon.take_trace()};

    xs.push_front(x);
    fs.push_front(std::move(fx));
    if (xs.size() > memory) {
      xs.pop_back();
      fs.pop_back();
    }
    const auto m = static_cast<Eigen::Index>(xs.size());
    Eigen::MatrixXd residuals(n, m);
    for (Eigen::Index i = 0; i < m; ++i) residuals.col(i) = fs[i].vec() - xs[i].vec();

    try {
      const Eigen::VectorXd alpha = solve_alpha(residuals, cfg.anderson_reg);
      x.vec().setZero();
      for (Eigen::Index i = 0; i < m; ++i) {
        x.vec() += alpha[i] * ((1.0 - delta) * xs[i].vec() + delta * fs[i].vec());
      }
      mon.annotate_last(std::vector<double>(alpha.data(), alpha.data() + m), false);
    } catch (const Error &e) {
      if (e.kind() != ErrorKind::SingularAlpha) throw;
      x.vec() = (1.0 - delta) * xs.front().vec() + delta * fs.front().vec();
      mon.annotate_last({}, true);
    }
  }
  return {std::move(x), false, cfg.max_iter, mon.take_trace()};
}

}  // namespace deqsci
