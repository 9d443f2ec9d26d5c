#include "deqsci/implicit_grad.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "deqsci/error.hpp"
#include "deqsci/metrics.hpp"

namespace deqsci {

double mse_loss(const VideoCube &x_hat, const VideoCube &x_star) {
  require_same_shape(x_hat, x_star, "mse_loss");
  return 0.5 * (x_hat.vec() - x_star.vec()).squaredNorm();
}

VideoCube mse_loss_grad(const VideoCube &x_hat, const VideoCube &x_star) {
  require_same_shape(x_hat, x_star, "mse_loss_grad");
  VideoCube g = x_hat;
  g.vec() -= x_star.vec();
  return g;
}

SolveResult run_solver(SolverKind kind, const CubeMap &map, VideoCube x0, const FixedPointConfig &cfg,
                       const IterateMetric &metric) {
  return kind == SolverKind::Anderson ? anderson_solve(map, std::move(x0), cfg, metric)
                                      : picard_solve(map, std::move(x0), cfg, metric);
}

SolveResult backward_fixed_point(const VjpFn &vjp, const VideoCube &g, const FixedPointConfig &cfg,
                                 SolverKind solver) {
  if (!g.all_finite()) throw Error(ErrorKind::NonFinite, "backward_fixed_point: g contains NaN or Inf");
  const CubeMap step = [&](const VideoCube &a) {
    VideoCube next = vjp(a);
    next.vec() += g.vec();
    return next;
  };
  return run_solver(solver, step, g.zeros_like(), cfg);
}

VideoCube neumann_backward(const VjpFn &vjp, const VideoCube &g, int P) {
  if (P < 0) throw Error(ErrorKind::InvalidArgument, "neumann_backward needs P >= 0");
  VideoCube sum = g;
  VideoCube term = g;
  for (int p = 1; p <= P; ++p) {
    term = vjp(term);
    sum.vec() += term.vec();
  }
  return sum;
}

SolveResult reconstruct(const Model &model, const SensingMask &mask, const Measurement &y, const GradientConfig &cfg,
                        const IterateMetric &metric) {
  const auto map = model.bind(mask, y);
  return run_solver(cfg.forward_solver, map->as_function(), init_estimate(mask, y), cfg.forward, metric);
}

LossGradient loss_gradient(const Model &model, const Sample &sample, const GradientConfig &cfg) {
  const auto map = model.bind(sample.mask, sample.y);
  LossGradient out;
  SolveResult fwd =
      run_solver(cfg.forward_solver, map->as_function(), init_estimate(sample.mask, sample.y), cfg.forward);
  out.forward_converged = fwd.converged;
  out.forward_iterations = fwd.iterations;
  out.approximate = !fwd.converged;
  out.loss = mse_loss(fwd.x_hat, sample.x_star);

  const VideoCube g = mse_loss_grad(fwd.x_hat, sample.x_star);
  const VideoCube &x_hat = fwd.x_hat;
  const VjpFn vjp = [&](const VideoCube &v) { return map->vjp_input(x_hat, v); };
  VideoCube a;
  if (cfg.backward.mode == BackwardConfig::Mode::Neumann) {
    a = neumann_backward(vjp, g, cfg.backward.neumann_terms);
    out.backward_iterations = cfg.backward.neumann_terms;
  } else {
    SolveResult back = backward_fixed_point(vjp, g, cfg.backward.solve, cfg.backward.solver);
    out.backward_iterations = back.iterations;
    out.approximate = out.approximate || !back.converged;
    a = std::move(back.x_hat);
  }
  out.grad = map->vjp_params(x_hat, a);
  return out;
}

double sample_loss(const Model &model, const Sample &sample, const GradientConfig &cfg) {
  const SolveResult fwd = reconstruct(model, sample.mask, sample.y, cfg);
  return mse_loss(fwd.x_hat, sample.x_star);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::InvalidArgument, "train epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "train batch size must be >= 1");
  if (!(learning_rate >= 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be >= 0");
  if (!(lr_decay > 0.0)) throw Error(ErrorKind::InvalidArgument, "lr decay must be > 0");
  if (decay_every < 1) throw Error(ErrorKind::InvalidArgument, "decay interval must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::InvalidArgument, "momentum must lie in [0, 1)");
  if (sn_iters < 0) throw Error(ErrorKind::InvalidArgument, "sn_iters must be >= 0");
}

void sgd_step(Model &model, const std::vector<double> &grad, double lr) {
  std::vector<double> theta = model.params();
  if (theta.size() != grad.size()) throw Error(ErrorKind::ShapeMismatch, "gradient length differs from parameters");
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
  model.set_params(theta);
}

namespace {

double validation_psnr(const Model &model, const std::vector<Sample> &val, const GradientConfig &cfg) {
  if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const Sample &s : val) {
    try {
      const SolveResult r = reconstruct(model, s.mask, s.y, cfg);
      sum += psnr(clamp01(r.x_hat), s.x_star).mean;
    } catch (const DivergedError &) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }
  return sum / static_cast<double>(val.size());
}

}  // namespace

TrainResult train(const Model &initial, const std::vector<Sample> &train_set, const std::vector<Sample> &val_set,
                  const TrainConfig &cfg) {
  cfg.validate();
  if (train_set.empty()) throw Error(ErrorKind::InvalidArgument, "training set is empty");
  TrainResult result{initial.clone(), {}};
  Model &model = *result.model;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> velocity(model.params().size(), 0.0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, (epoch - 1) / cfg.decay_every);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int used = 0;
    int skipped = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<double> acc(velocity.size(), 0.0);
      int count = 0;
      for (std::size_t k = start; k < stop; ++k) {
        try {
          const LossGradient lg = loss_gradient(model, train_set[order[k]], cfg.gradient);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += lg.grad[i];
          loss_sum += lg.loss;
          ++count;
        } catch (const DivergedError &) {
          ++skipped;
        }
      }
      if (count == 0) continue;
      used += count;
      for (std::size_t i = 0; i < acc.size(); ++i) velocity[i] = cfg.momentum * velocity[i] + acc[i] / count;
      sgd_step(model, velocity, lr);
      if (cfg.sn_iters > 0) model.normalize(cfg.sn_iters);
    }
    if (static_cast<double>(skipped) > cfg.max_skip_fraction * static_cast<double>(train_set.size())) {
      throw Error(ErrorKind::Diverged, "epoch " + std::to_string(epoch) + " skipped " + std::to_string(skipped) +
                                           " of " + std::to_string(train_set.size()) + " samples");
    }
    EpochLog row;
    row.epoch = epoch;
    row.mean_loss = used > 0 ? loss_sum / used : std::numeric_limits<double>::quiet_NaN();
    row.val_psnr = validation_psnr(model, val_set, cfg.gradient);
    row.skipped = skipped;
    result.log.push_back(row);
  }
  return result;
}

std::string train_log_csv(const std::vector<EpochLog> &log) {
  std::string out = "epoch,mean_loss,val_psnr,skipped\n";
  char buf[128];
  for (const auto &r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.12g,", r.epoch, r.mean_loss);
    out += buf;
    if (!std::isnan(r.val_psnr)) {
      std::snprintf(buf, sizeof buf, "%.12g", r.val_psnr);
      out += buf;
    }
    out += ',' + std::to_string(r.skipped) + '\n';
  }
  return out;
}

std::string GradCheckReport::to_text() const {
  std::string out = "index,analytic,numeric,rel_error\n";
  char buf[160];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.6g\n", r.index, r.analytic, r.numeric, r.rel_error);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "max_rel_error=%.6g\nforward_converged=%d\n", max_rel_error,
                forward_converged ? 1 : 0);
  out += buf;
  return out;
}

GradCheckReport finite_diff_gradcheck(const Model &model, const Sample &sample, const GradientConfig &cfg, double h,
                                      int n_probe, std::uint64_t seed) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "finite-difference step h must be > 0");
  const LossGradient lg = loss_gradient(model, sample, cfg);
  const std::vector<double> theta = model.params();
  const std::size_t P = theta.size();

  std::vector<std::size_t> coords(P);
  std::iota(coords.begin(), coords.end(), 0);
  if (n_probe > 0 && static_cast<std::size_t>(n_probe) < P) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(n_probe));
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  report.forward_converged = lg.forward_converged;
  double grad_scale = 0.0;
  for (std::size_t i : coords) grad_scale = std::max(grad_scale, std::abs(lg.grad[i]));
  const double floor = std::max(1e-6 * grad_scale, std::numeric_limits<double>::min());

  std::unique_ptr<Model> probe = model.clone();
  auto loss_at = [&](std::size_t i, double delta) {
    std::vector<double> t = theta;
    t[i] += delta;
    probe->set_params(t);
    try {
      return sample_loss(*probe, sample, cfg);
    } catch (const DivergedError &) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  for (std::size_t i : coords) {
    GradCheckRow row;
    row.index = i;
    row.analytic = lg.grad[i];
    row.numeric = (loss_at(i, h) - loss_at(i, -h)) / (2.0 * h);
    const double denom = std::max({std::abs(row.analytic), std::abs(row.numeric), floor});
    row.rel_error = std::isfinite(row.numeric) ? std::abs(row.analytic - row.numeric) / denom
                                               : std::numeric_limits<double>::infinity();
    report.max_rel_error = std::max(report.max_rel_error, row.rel_error);
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace deqsci
