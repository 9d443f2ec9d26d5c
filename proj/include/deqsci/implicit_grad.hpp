#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "deqsci/fixed_point.hpp"
#include "deqsci/iteration_maps.hpp"

namespace deqsci {

/// ½ ||x_hat - x_star||^2.
double mse_loss(const VideoCube &x_hat, const VideoCube &x_star);
/// Gradient of mse_loss with respect to x_hat: x_hat - x_star.
VideoCube mse_loss_grad(const VideoCube &x_hat, const VideoCube &x_star);

/// v -> J^T v for the Jacobian of the map at the fixed point.
using VjpFn = std::function<VideoCube(const VideoCube &)>;

enum class SolverKind { Picard, Anderson };

SolveResult run_solver(SolverKind kind, const CubeMap &map, VideoCube x0, const FixedPointConfig &cfg,
                       const IterateMetric &metric = {});

/// Solves a = J^T a + g from a = 0 with the forward fixed-point engine.
/// Returns a(inf) ~ (I - J^T)^{-1} g.
SolveResult backward_fixed_point(const VjpFn &vjp, const VideoCube &g, const FixedPointConfig &cfg,
                                 SolverKind solver = SolverKind::Anderson);

/// sum_{p=0..P} (J^T)^p g.
VideoCube neumann_backward(const VjpFn &vjp, const VideoCube &g, int P);

struct BackwardConfig {
  enum class Mode { FixedPoint, Neumann };
  Mode mode = Mode::FixedPoint;
  int neumann_terms = 50;
  SolverKind solver = SolverKind::Anderson;
  FixedPointConfig solve{.tol = 1e-8, .max_iter = 150};
};

struct GradientConfig {
  SolverKind forward_solver = SolverKind::Anderson;
  FixedPointConfig forward{};
  BackwardConfig backward{};
};

struct Sample {
  SensingMask mask;
  Measurement y;
  VideoCube x_star;
};

struct LossGradient {
  std::vector<double> grad;
  double loss = 0.0;
  bool forward_converged = false;
  /// Set when the forward or backward solve stopped before reaching its tolerance.
  bool approximate = false;
  int forward_iterations = 0;
  int backward_iterations = 0;
};

/// Forward solve to x_hat from Phi^T y, then implicit backward pass:
/// grad = (df/dtheta at x_hat)^T a(inf) with a(inf) = (I - J^T)^{-1} (x_hat - x_star).
LossGradient loss_gradient(const Model &model, const Sample &sample, const GradientConfig &cfg);

/// Loss at the forward fixed point, without gradients.
double sample_loss(const Model &model, const Sample &sample, const GradientConfig &cfg);

/// Fixed-point reconstruction of one sample.
SolveResult reconstruct(const Model &model, const SensingMask &mask, const Measurement &y,
                        const GradientConfig &cfg, const IterateMetric &metric = {});

struct TrainConfig {
  int epochs = 30;
  int batch_size = 1;
  double learning_rate = 1e-3;
  /// Learning rate is multiplied by lr_decay every decay_every epochs.
  double lr_decay = 0.9;
  int decay_every = 10;
  double momentum = 0.0;
  /// Power iterations of spectral normalization after each update; 0 disables it.
  int sn_iters = 1;
  double max_skip_fraction = 0.5;
  std::uint64_t seed = 0;
  GradientConfig gradient{};

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_psnr = 0.0;  // NaN when there is no validation set
  int skipped = 0;
};

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<EpochLog> log;
};

/// One SGD update of `model` in place: theta -= lr * grad.
void sgd_step(Model &model, const std::vector<double> &grad, double lr);

/// Mini-batch SGD over `train` with optional momentum. Samples whose forward
/// solve diverges are skipped; an epoch skipping more than max_skip_fraction
/// of its samples raises Diverged.
TrainResult train(const Model &initial, const std::vector<Sample> &train_set, const std::vector<Sample> &val_set,
                  const TrainConfig &cfg);

/// CSV with header epoch,mean_loss,val_psnr,skipped.
std::string train_log_csv(const std::vector<EpochLog> &log);

struct GradCheckRow {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double max_rel_error = 0.0;
  bool forward_converged = false;

  std::string to_text() const;
};

/// Central differences (l(theta + h e_i) - l(theta - h e_i)) / 2h on n_probe
/// coordinates drawn without replacement (all of them when n_probe <= 0 or
/// n_probe >= P). rel_error = |a - n| / max(|a|, |n|, 1e-6 max_i |a_i|).
GradCheckReport finite_diff_gradcheck(const Model &model, const Sample &sample, const GradientConfig &cfg, double h,
                                      int n_probe, std::uint64_t seed);

}  // namespace deqsci
