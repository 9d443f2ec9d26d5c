#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "deqsci/cube.hpp"
#include "deqsci/error.hpp"

namespace deqsci {

struct FixedPointConfig {
  /// Relative residual threshold ||f(x) - x|| / (||x|| + 1e-12).
  double tol = 1e-6;
  int max_iter = 150;
  int anderson_memory = 3;
  double anderson_damping = 1.0;
  /// Tikhonov weight relative to trace(A^T A) / s.
  double anderson_reg = 1e-8;
  bool record_trace = true;
  /// Abort when the residual exceeds its running minimum by this factor.
  double divergence_factor = 1e6;

  void validate() const;
};

/// One evaluation of the map at the current iterate x_k.
struct IterationRecord {
  int iter = 0;
  double residual = 0.0;      // ||f(x_k) - x_k||
  double rel_residual = 0.0;  // residual / (||x_k|| + 1e-12)
  double time_ms = 0.0;       // wall time since the solve started
  std::optional<double> psnr; // of x_k against a reference, when one is supplied
  std::vector<double> alpha;  // Anderson mixing weights used to form x_{k+1}
  bool picard_fallback = false;
};

struct IterationTrace {
  std::vector<IterationRecord> rows;

  /// CSV with header iter,residual,rel_residual,psnr,time_ms. With
  /// `timing` off the time column is left empty so output is reproducible.
  std::string to_csv(bool timing = true) const;
  void write_csv(const std::string &path, bool timing = true) const;
};

struct SolveResult {
  VideoCube x_hat;
  bool converged = false;
  int iterations = 0;
  IterationTrace trace;
};

/// Raised when the map produces NaN/Inf or the residual blows up. Carries the
/// trace recorded up to the failing iteration.
class DivergedError : public Error {
 public:
  DivergedError(const std::string &what, int iteration, IterationTrace trace)
      : Error(ErrorKind::Diverged, what), iteration_(iteration), trace_(std::move(trace)) {}
  int iteration() const noexcept { return iteration_; }
  const IterationTrace &trace() const noexcept { return trace_; }

 private:
  int iteration_;
  IterationTrace trace_;
};

using CubeMap = std::function<VideoCube(const VideoCube &)>;
/// Optional per-iterate metric (PSNR against ground truth).
using IterateMetric = std::function<double(const VideoCube &)>;

/// Plain iteration x_{k+1} = f(x_k).
SolveResult picard_solve(const CubeMap &map, VideoCube x0, const FixedPointConfig &cfg,
                         const IterateMetric &metric = {});

/// Anderson-accelerated iteration with memory s and damping delta:
/// x_{k+1} = (1 - delta) sum_i alpha_i x_{k-i} + delta sum_i alpha_i f(x_{k-i}).
SolveResult anderson_solve(const CubeMap &map, VideoCube x0, const FixedPointConfig &cfg,
                           const IterateMetric &metric = {});

/// Minimizes ||A alpha||^2 subject to sum(alpha) = 1 through the regularized
/// normal equations (A^T A + reg * tr(A^T A)/s * I) w = 1, alpha = w / 1^T w.
Eigen::VectorXd solve_alpha(const Eigen::MatrixXd &residuals, double reg);

}  // namespace deqsci
